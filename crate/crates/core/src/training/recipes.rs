use super::{
    AdvMethod, AdvTrainSpec, DatasetKind, DecayNorm, DecaySpec, Duration, Init, ModelKind,
    Optimizer, Precision, TrainConfig,
};
use crate::attacks::FGL2_SCALE;
use crate::error::{Error, Result};
use crate::models::LossFn;

/// Every recipe name [`recipe`] accepts (ASCII `lambda` aliases aside).
pub const RECIPES: &[&str] = &[
    "baseline-natural",
    "expert-init",
    "expert-l2",
    "scratch-l1-λ3.25",
    "scratch-l2-λ3.25",
    "scratch-l1-λ32",
    "fgsm-train-0.25",
    "fgl2-train-0.25",
    "fgl2-train-0.5",
    "cnn",
    "cnn-l2",
    "cnn-pgd",
    "cnn-l2-pgd",
    "cnn-desk",
    "cnn-l2-desk",
    "cnn-pgd-desk",
    "cnn-l2-pgd-desk",
];

/// CIFAR training subset and epoch count for the `-desk` variants.
const DESK_SUBSET: usize = 10_000;
const DESK_EPOCHS: u64 = 60;
const DESK_DELAY: usize = 12;

fn linear(steps: u64) -> TrainConfig {
    TrainConfig {
        duration: Duration::Steps(steps),
        ..TrainConfig::linear_default()
    }
}

fn decay(norm: DecayNorm, lambda: f64) -> DecaySpec {
    DecaySpec { norm, lambda }
}

fn cnn(l2: bool, pgd: bool, desk: bool) -> TrainConfig {
    let delay = if desk { DESK_DELAY } else { 50 };
    TrainConfig {
        dataset: DatasetKind::Cifar10,
        model: ModelKind::ConvNet,
        init: Init::Glorot,
        optimizer: Optimizer::adam(1e-3),
        batch_size: 128,
        duration: Duration::Epochs(if desk { DESK_EPOCHS } else { 250 }),
        decay: if l2 { decay(DecayNorm::L2Squared, 1e-3) } else { DecaySpec::NONE },
        adv: pgd.then(|| AdvTrainSpec {
            delay_epochs: delay,
            ..AdvTrainSpec::new(
                AdvMethod::Pgd {
                    steps: 7,
                    step_size: 2.0 / 255.0,
                    random_start: true,
                },
                8.0 / 255.0,
            )
        }),
        loss: LossFn::SoftmaxXent { label_smoothing: 0.1 },
        seed: 0,
        train_subset: desk.then_some(DESK_SUBSET),
        precision: Precision::F32,
    }
}

/// Hyperparameters of a named experiment.
pub fn recipe(name: &str) -> Result<TrainConfig> {
    let canonical = name.replace("lambda", "λ").replace("(7-2-8)", "");
    let c = match canonical.as_str() {
        "baseline-natural" => linear(50_000),
        "expert-init" => TrainConfig {
            init: Init::Expert,
            ..linear(0)
        },
        "expert-l2" => TrainConfig {
            init: Init::Expert,
            decay: decay(DecayNorm::L2Squared, 0.05),
            ..linear(10_000)
        },
        "scratch-l1-λ3.25" => TrainConfig {
            decay: decay(DecayNorm::L1Mean, 3.25),
            ..linear(50_000)
        },
        "scratch-l2-λ3.25" => TrainConfig {
            decay: decay(DecayNorm::L2Squared, 3.25),
            ..linear(50_000)
        },
        "scratch-l1-λ32" => TrainConfig {
            decay: decay(DecayNorm::L1Mean, 32.0),
            ..linear(50_000)
        },
        // Starting with weights larger than the adversarial optimum lets the
        // l1 norm shrink monotonically, as the margin analysis predicts.
        "fgsm-train-0.25" => TrainConfig {
            init: Init::Normal { std: 0.2 },
            adv: Some(AdvTrainSpec::new(AdvMethod::Fgsm, 0.25)),
            ..linear(50_000)
        },
        "fgl2-train-0.25" | "fgl2-train-0.5" => TrainConfig {
            init: Init::Glorot,
            adv: Some(AdvTrainSpec::new(
                AdvMethod::ScaledClippedFgl2 { scale: FGL2_SCALE },
                if canonical.ends_with("0.5") { 0.5 } else { 0.25 },
            )),
            ..linear(50_000)
        },
        "cnn" => cnn(false, false, false),
        "cnn-l2" => cnn(true, false, false),
        "cnn-pgd" => cnn(false, true, false),
        "cnn-l2-pgd" => cnn(true, true, false),
        "cnn-desk" => cnn(false, false, true),
        "cnn-l2-desk" => cnn(true, false, true),
        "cnn-pgd-desk" => cnn(false, true, true),
        "cnn-l2-pgd-desk" => cnn(true, true, true),
        _ => return Err(Error::UnknownRecipe(name.to_string())),
    };
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_recipes_valid() {
        for name in RECIPES {
            recipe(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn cnn_l2_pgd_protocol() {
        let c = recipe("cnn-l2-pgd(7-2-8)").unwrap();
        assert_eq!(c.optimizer, Optimizer::adam(1e-3));
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.duration, Duration::Epochs(250));
        let a = c.adv.unwrap();
        assert_eq!(a.delay_epochs, 50);
        assert_eq!(a.eps, 8.0 / 255.0);
        assert_eq!(
            a.method,
            AdvMethod::Pgd { steps: 7, step_size: 2.0 / 255.0, random_start: true }
        );
        assert_eq!(c.decay.lambda, 1e-3);
        assert_eq!(c.loss, LossFn::SoftmaxXent { label_smoothing: 0.1 });
    }

    #[test]
    fn ascii_alias_and_unknown() {
        assert_eq!(recipe("scratch-l1-lambda32").unwrap(), recipe("scratch-l1-λ32").unwrap());
        assert!(matches!(recipe("nope"), Err(Error::UnknownRecipe(_))));
    }
}
