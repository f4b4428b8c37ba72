//! Optimizers, weight penalties, adversarial training and the named
//! training recipes.

mod config;
mod decay;
mod log;
mod loops;
mod optim;
mod recipes;

pub use config::{parse_config, parse_fraction};
pub use decay::{DecayNorm, DecaySpec};
pub use log::{EpochRecord, TrainingLog};
pub use loops::{
    fgsm_translation_residual, init_convnet, init_linear, run_config, train_convnet, train_linear,
    Progress,
};
pub use optim::{OptState, Optimizer};
pub use recipes::{recipe, RECIPES};

use crate::error::{Error, Result};
use crate::models::LossFn;

/// How adversarial batches are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdvMethod {
    Fgsm,
    FastGradL2,
    ScaledClippedFgl2 { scale: f64 },
    Pgd { steps: usize, step_size: f64, random_start: bool },
}

impl AdvMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AdvMethod::Fgsm => "fgsm",
            AdvMethod::FastGradL2 => "fgl2",
            AdvMethod::ScaledClippedFgl2 { .. } => "scaled-fgl2",
            AdvMethod::Pgd { .. } => "pgd",
        }
    }
}

/// Labels the adversary attacks during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    TrueLabel,
    ModelPrediction,
}

/// Adversarial training: once `epoch >= delay_epochs` every batch is
/// replaced by its adversarial counterpart against the current model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvTrainSpec {
    pub method: AdvMethod,
    pub eps: f64,
    pub delay_epochs: usize,
    pub label_source: LabelSource,
    pub clip: bool,
    /// When set, eps decays linearly to this value by the last step.
    pub eps_final: Option<f64>,
}

impl AdvTrainSpec {
    pub fn new(method: AdvMethod, eps: f64) -> Self {
        Self {
            method,
            eps,
            delay_epochs: 0,
            label_source: LabelSource::TrueLabel,
            clip: true,
            eps_final: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: f64| !(e >= 0.0) || !e.is_finite();
        if bad(self.eps) || self.eps_final.is_some_and(bad) {
            return Err(Error::arg("adversarial eps must be non-negative"));
        }
        match self.method {
            AdvMethod::Pgd { steps: 0, .. } => Err(Error::arg("pgd needs at least one step")),
            AdvMethod::Pgd { step_size, .. } if !(step_size > 0.0) => {
                Err(Error::arg("pgd step size must be positive"))
            }
            AdvMethod::ScaledClippedFgl2 { scale } if !(scale > 0.0) => {
                Err(Error::arg("scale must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// eps at `step` out of `total` steps.
    pub fn eps_at(&self, step: u64, total: u64) -> f64 {
        match self.eps_final {
            None => self.eps,
            Some(end) => {
                let t = if total <= 1 { 1.0 } else { step as f64 / (total - 1) as f64 };
                self.eps + (end - self.eps) * t.min(1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    ConvNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// MNIST digits 3 (y = +1) versus 7.
    Mnist3v7,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Class-mean difference on the training split, bias 0.
    Expert,
    Normal { std: f64 },
    Glorot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duration {
    Steps(u64),
    Epochs(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub model: ModelKind,
    pub init: Init,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub duration: Duration,
    pub decay: DecaySpec,
    pub adv: Option<AdvTrainSpec>,
    pub loss: LossFn,
    pub seed: u64,
    /// Train on the first `n` examples only.
    pub train_subset: Option<usize>,
    pub precision: Precision,
}

impl TrainConfig {
    /// Natural training of the logistic model on 3-vs-7.
    pub fn linear_default() -> Self {
        Self {
            dataset: DatasetKind::Mnist3v7,
            model: ModelKind::Linear,
            init: Init::Zeros,
            optimizer: Optimizer::adam(1e-5),
            batch_size: 128,
            duration: Duration::Steps(50_000),
            decay: DecaySpec::NONE,
            adv: None,
            loss: LossFn::SoftplusBinary,
            seed: 0,
            train_subset: None,
            precision: Precision::F64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.decay.validate()?;
        if let Some(a) = &self.adv {
            a.validate()?;
        }
        if self.batch_size == 0 {
            return Err(Error::Config { line: 0, message: "batch_size must be positive".into() });
        }
        if self.duration == Duration::Epochs(0) {
            return Err(Error::Config { line: 0, message: "epochs must be positive".into() });
        }
        if self.train_subset == Some(0) {
            return Err(Error::Config { line: 0, message: "train_subset must be positive".into() });
        }
        if let Init::Normal { std } = self.init {
            if !(std >= 0.0) || !std.is_finite() {
                return Err(Error::Config { line: 0, message: "init std must be non-negative".into() });
            }
        }
        let compatible = matches!(
            (self.model, self.dataset, self.loss),
            (ModelKind::Linear, DatasetKind::Mnist3v7, LossFn::SoftplusBinary)
                | (ModelKind::ConvNet, DatasetKind::Cifar10, LossFn::SoftmaxXent { .. })
        );
        if !compatible {
            return Err(Error::Config {
                line: 0,
                message: "linear models train on mnist-3v7 with softplus; convnets on cifar10 with xent"
                    .into(),
            });
        }
        if self.model == ModelKind::ConvNet && self.init == Init::Expert {
            return Err(Error::Config { line: 0, message: "expert init is linear-only".into() });
        }
        Ok(())
    }

    /// Render as the `key = value` text read by [`parse_config`].
    pub fn to_text(&self) -> String {
        config::to_text(self)
    }
}
