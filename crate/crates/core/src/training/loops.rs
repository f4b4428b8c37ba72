use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    AdvMethod, AdvTrainSpec, DatasetKind, Duration, EpochRecord, Init, LabelSource, OptState,
    Precision, TrainConfig, TrainingLog,
};
use crate::attacks::{fast_grad_l2, fgsm, pgd, scaled_clipped_fgl2};
use crate::data::{load_cifar10_bin, BinaryView, DataLayout, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::{predict_classes, softplus, Classifier, ConvNet, LinearLogistic, Model};
use crate::tensor::{Scalar, Tensor};

/// Called after every epoch.
pub type Progress<'a> = dyn FnMut(&EpochRecord) + 'a;

/// Training rows used to measure clean accuracy on the CNN each epoch.
const CNN_EVAL_ROWS: usize = 1000;

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

fn adv_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step
}

pub fn init_linear(cfg: &TrainConfig, view: &BinaryView) -> Result<LinearLogistic> {
    let d = view.feature_dim();
    let mut rng = init_rng(cfg.seed);
    match cfg.init {
        Init::Zeros => LinearLogistic::zeros(d),
        Init::Expert => LinearLogistic::expert_init(view),
        Init::Normal { std } => {
            let dist = Normal::new(0.0, std).map_err(|e| Error::arg(e.to_string()))?;
            let w: Vec<f64> = (0..d).map(|_| dist.sample(&mut rng)).collect();
            LinearLogistic::new(Tensor::from_vec(w)?, 0.0)
        }
        Init::Glorot => {
            let limit = (6.0 / (d + 1) as f64).sqrt();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-limit..limit)).collect();
            LinearLogistic::new(Tensor::from_vec(w)?, 0.0)
        }
    }
}

pub fn init_convnet<T: Scalar>(cfg: &TrainConfig) -> Result<ConvNet<T>> {
    match cfg.init {
        Init::Zeros => Ok(ConvNet::zeros()),
        Init::Glorot => Ok(ConvNet::glorot(cfg.seed)),
        Init::Normal { std } => {
            let dist = Normal::new(0.0, std).map_err(|e| Error::arg(e.to_string()))?;
            let mut rng = init_rng(cfg.seed);
            let mut net = ConvNet::<T>::zeros();
            for t in net.params_mut().tensors_mut() {
                for v in t.data_mut() {
                    *v = T::of(dist.sample(&mut rng));
                }
            }
            Ok(net)
        }
        Init::Expert => Err(Error::Config {
            line: 0,
            message: "expert init is linear-only".into(),
        }),
    }
}

/// Adversarial counterpart of a batch against the current model.
fn adversarial_batch(
    model: &dyn Classifier,
    spec: &AdvTrainSpec,
    eps: f64,
    xs: &Tensor,
    labels: &[usize],
    seed: u64,
) -> Result<Tensor> {
    let predicted;
    let labels = match spec.label_source {
        LabelSource::TrueLabel => labels,
        LabelSource::ModelPrediction => {
            predicted = predict_classes(model, xs)?;
            &predicted
        }
    };
    Ok(match spec.method {
        AdvMethod::Fgsm => fgsm(model, xs, labels, eps, spec.clip)?,
        AdvMethod::FastGradL2 => fast_grad_l2(model, xs, labels, eps, spec.clip)?.0,
        AdvMethod::ScaledClippedFgl2 { scale } => {
            scaled_clipped_fgl2(model, xs, labels, eps, scale, spec.clip)?.0
        }
        AdvMethod::Pgd {
            steps,
            step_size,
            random_start,
        } => pgd(model, xs, labels, eps, steps, step_size, random_start, seed)?,
    })
}

/// Relative gap between the mean loss at the unclipped FGSM batch and the
/// mean of `softplus(-(y (w.x + b) - eps ||w||_1))` over the clean batch.
pub fn fgsm_translation_residual(
    model: &LinearLogistic,
    xs: &Tensor,
    ys: &[f64],
    eps: f64,
) -> Result<f64> {
    let labels: Vec<usize> = ys.iter().map(|&y| crate::data::sign_to_class(y)).collect();
    let adv = fgsm(model, xs, &labels, eps, false)?;
    let attacked = model.batch_loss_and_grads(&adv, ys)?.loss;
    let l1 = model.w().l1_norm();
    let mut shifted = 0.0;
    for (x, &y) in xs.rows().zip(ys) {
        shifted += softplus(-(y * model.logit(x)? - eps * l1));
    }
    shifted /= ys.len() as f64;
    Ok((attacked - shifted).abs() / shifted.abs().max(f64::MIN_POSITIVE))
}

fn total_steps(duration: Duration, per_epoch: u64) -> u64 {
    match duration {
        Duration::Steps(s) => s,
        Duration::Epochs(e) => e * per_epoch,
    }
}

fn batches_per_epoch(n: usize, batch: usize) -> Result<usize> {
    if n == 0 || batch > n {
        return Err(Error::arg(format!("batch size {batch} exceeds the {n} training examples")));
    }
    Ok(n / batch)
}

fn adv_active(adv: &Option<AdvTrainSpec>, epoch: usize) -> Option<&AdvTrainSpec> {
    adv.as_ref().filter(|a| epoch >= a.delay_epochs)
}

fn diverged(step: u64, loss: f64) -> Error {
    Error::Diverged {
        step: step as usize,
        detail: format!("batch loss is {loss}"),
    }
}

// A finite loss can hide weights whose norm has overflowed, e.g. on
// separable data with an absurd learning rate.
fn check_norms(rec: &EpochRecord, step: u64) -> Result<()> {
    if rec.l1_norm.is_finite() && rec.l2_norm.is_finite() {
        return Ok(());
    }
    Err(Error::Diverged {
        step: step as usize,
        detail: format!("weight norm overflowed in epoch {}", rec.epoch),
    })
}

/// Minibatch training of the logistic model. The last partial batch of each
/// pass is dropped and the data are reshuffled every pass.
pub fn train_linear(
    mut model: LinearLogistic,
    data: &BinaryView,
    cfg: &TrainConfig,
    progress: &mut Progress<'_>,
) -> Result<(LinearLogistic, TrainingLog)> {
    cfg.validate()?;
    let n = data.len();
    let d = model.dim();
    let per_epoch = batches_per_epoch(n, cfg.batch_size)?;
    let total = total_steps(cfg.duration, per_epoch as u64);
    let mut opt = OptState::<f64>::new(cfg.optimizer, &[d, 1]);
    let mut rng = shuffle_rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let labels = data.class_labels();
    let check_translation = cfg
        .adv
        .as_ref()
        .is_some_and(|a| a.method == AdvMethod::Fgsm && !a.clip);
    let mut log = TrainingLog::default();
    let mut w = model.w().data().to_vec();
    let mut b = [model.b()];
    let mut step = 0u64;
    let mut epoch = 0usize;
    while step < total {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks_exact(cfg.batch_size) {
            if step >= total {
                break;
            }
            let mut xs = data.images().select_rows(chunk)?;
            xs = xs.reshape(&[chunk.len(), d])?;
            let ys: Vec<f64> = chunk.iter().map(|&i| data.y()[i]).collect();
            if let Some(a) = adv_active(&cfg.adv, epoch) {
                if check_translation {
                    let r = fgsm_translation_residual(&model, &xs, &ys, a.eps_at(step, total))?;
                    log.translation_residual = Some(log.translation_residual.unwrap_or(0.0).max(r));
                }
                let lab: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                xs = adversarial_batch(&model, a, a.eps_at(step, total), &xs, &lab, adv_seed(cfg.seed, step))?;
            }
            let mut g = model.batch_loss_and_grads(&xs, &ys)?;
            if !g.loss.is_finite() {
                return Err(diverged(step, g.loss));
            }
            cfg.decay.add_gradient(&[&w[..]], &mut [&mut g.w[..]]);
            opt.step(&mut [&mut w[..], &mut b[..]], &[&g.w[..], &[g.b]]);
            model.set_params(&w, b[0]).map_err(|_| diverged(step, f64::NAN))?;
            loss_sum += g.loss;
            batches += 1;
            step += 1;
        }
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            clean_acc: 1.0 - model.error_rate(data)?,
            l1_norm: model.w().l1_norm(),
            l2_norm: model.w().l2_norm(),
        };
        check_norms(&rec, step)?;
        progress(&rec);
        log.epochs.push(rec);
        epoch += 1;
    }
    log.steps = step;
    Ok((model, log))
}

/// Minibatch training of the CNN in precision `T`.
pub fn train_convnet<T: Scalar>(
    mut net: ConvNet<T>,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    progress: &mut Progress<'_>,
) -> Result<(ConvNet<T>, TrainingLog)> {
    cfg.validate()?;
    let n = data.len();
    let d = data.feature_dim();
    let per_epoch = batches_per_epoch(n, cfg.batch_size)?;
    let total = total_steps(cfg.duration, per_epoch as u64);
    let sizes: Vec<usize> = net.params().tensors().iter().map(|t| t.len()).collect();
    let mut opt = OptState::<T>::new(cfg.optimizer, &sizes);
    let mut rng = shuffle_rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let labels = data.class_labels();
    let images: Tensor<T> = data.images().cast::<T>().reshape(&[n, d])?;
    let eval_rows: Vec<usize> = (0..n.min(CNN_EVAL_ROWS)).collect();
    let eval_x = images.select_rows(&eval_rows)?;
    let mut log = TrainingLog::default();
    let mut step = 0u64;
    let mut epoch = 0usize;
    while step < total {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks_exact(cfg.batch_size) {
            if step >= total {
                break;
            }
            let lab: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut xs = images.select_rows(chunk)?;
            if let Some(a) = adv_active(&cfg.adv, epoch) {
                let adv = adversarial_batch(
                    &net,
                    a,
                    a.eps_at(step, total),
                    &xs.cast::<f64>(),
                    &lab,
                    adv_seed(cfg.seed, step),
                )?;
                xs = adv.cast();
            }
            let mut g = net.loss_and_grads(&xs, &lab, cfg.loss, false)?;
            if !g.loss.is_finite() {
                return Err(diverged(step, g.loss));
            }
            {
                let weights = net.params().tensors().map(|t| t.data());
                let mut grads = g.params.tensors_mut().map(|t| t.data_mut());
                cfg.decay.add_gradient(&weights, &mut grads);
            }
            let grads = g.params.tensors().map(|t| t.data());
            let mut params = net.params_mut().tensors_mut().map(|t| t.data_mut());
            opt.step(&mut params, &grads);
            loss_sum += g.loss;
            batches += 1;
            step += 1;
        }
        if !net.params().all_finite() {
            return Err(diverged(step, f64::NAN));
        }
        let pred = net.logits_t(&eval_x)?;
        let correct = pred
            .rows()
            .zip(&eval_rows)
            .filter(|(z, &i)| {
                let zf: Vec<f64> = z.iter().map(|v| v.f64()).collect();
                crate::models::argmax(&zf) == labels[i]
            })
            .count();
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            clean_acc: correct as f64 / eval_rows.len() as f64,
            l1_norm: net.params().l1_norm(),
            l2_norm: net.params().l2_norm(),
        };
        check_norms(&rec, step)?;
        progress(&rec);
        log.epochs.push(rec);
        epoch += 1;
    }
    log.steps = step;
    Ok((net, log))
}

/// Load the configured dataset from `layout`, initialise and train.
pub fn run_config(
    cfg: &TrainConfig,
    layout: &DataLayout,
    progress: &mut Progress<'_>,
) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    match cfg.dataset {
        DatasetKind::Mnist3v7 => {
            let (mut train, _) = layout.mnist_3v7()?;
            if let Some(k) = cfg.train_subset {
                train = train.take(k)?;
            }
            let init = init_linear(cfg, &train)?;
            let (m, log) = train_linear(init, &train, cfg, progress)?;
            Ok((Model::Linear(m), log))
        }
        DatasetKind::Cifar10 => {
            let mut train = load_cifar10_bin(&layout.cifar_train())?;
            if let Some(k) = cfg.train_subset {
                train = train.take(k)?;
            }
            let (net, log) = match cfg.precision {
                Precision::F32 => {
                    let (net, log) = train_convnet(init_convnet::<f32>(cfg)?, &train, cfg, progress)?;
                    (net.cast::<f64>(), log)
                }
                Precision::F64 => train_convnet(init_convnet::<f64>(cfg)?, &train, cfg, progress)?,
            };
            Ok((Model::Conv(net), log))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::training::{recipe, AdvTrainSpec, DecayNorm, DecaySpec, Optimizer};

    fn quick(steps: u64) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::adam(1e-2),
            batch_size: 16,
            duration: Duration::Steps(steps),
            ..TrainConfig::linear_default()
        }
    }

    #[test]
    fn deterministic() {
        let data = make_synthetic(64, 5, 4.0, 3).unwrap();
        let mut cfg = quick(40);
        cfg.adv = Some(AdvTrainSpec::new(AdvMethod::Fgsm, 0.05));
        let run = || {
            let m = init_linear(&cfg, &data).unwrap();
            train_linear(m, &data, &cfg, &mut |_| {}).unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.steps, 40);
        assert_eq!(la.epochs.len(), 10);
    }

    #[test]
    fn unpenalised_weights_grow_on_separable_data() {
        let data = make_synthetic(64, 4, 12.0, 1).unwrap();
        let (_, log) = train_linear(LinearLogistic::zeros(4).unwrap(), &data, &quick(200), &mut |_| {}).unwrap();
        for pair in log.epochs.windows(2) {
            assert!(pair[1].l2_norm > pair[0].l2_norm);
        }
        assert_eq!(log.last().unwrap().clean_acc, 1.0);
    }

    #[test]
    fn translation_residual_tracked_without_clip() {
        let data = make_synthetic(32, 6, 3.0, 2).unwrap();
        let mut cfg = quick(10);
        let mut a = AdvTrainSpec::new(AdvMethod::Fgsm, 0.1);
        a.clip = false;
        cfg.adv = Some(a);
        let m = init_linear(&TrainConfig { init: Init::Normal { std: 0.1 }, ..cfg }, &data).unwrap();
        let (_, log) = train_linear(m, &data, &cfg, &mut |_| {}).unwrap();
        assert!(log.translation_residual.unwrap() < 1e-12);
    }

    #[test]
    fn decay_pulls_weights_in() {
        let data = make_synthetic(32, 3, 0.0, 5).unwrap();
        let mut cfg = quick(50);
        cfg.decay = DecaySpec::new(DecayNorm::L1, 1.0).unwrap();
        let m = LinearLogistic::new(Tensor::from_vec(vec![2.0, -2.0, 2.0]).unwrap(), 0.0).unwrap();
        let before = m.w().l1_norm();
        let (m, _) = train_linear(m, &data, &cfg, &mut |_| {}).unwrap();
        assert!(m.w().l1_norm() < before);
    }

    #[test]
    fn zero_steps_keeps_init() {
        let data = make_synthetic(16, 3, 2.0, 5).unwrap();
        let cfg = TrainConfig { init: Init::Expert, ..quick(0) };
        let m = init_linear(&cfg, &data).unwrap();
        let (t, log) = train_linear(m.clone(), &data, &cfg, &mut |_| {}).unwrap();
        assert_eq!(t, m);
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let data = make_synthetic(8, 3, 2.0, 5).unwrap();
        assert!(train_linear(LinearLogistic::zeros(3).unwrap(), &data, &quick(1), &mut |_| {}).is_err());
    }

    #[test]
    fn convnet_step_changes_weights_and_logs() {
        let images = Tensor::new(vec![4, 32, 32, 3], (0..4 * 3072).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let data = LabeledDataset::new(images, vec![0, 1, 2, 3], 10).unwrap();
        let mut cfg = recipe("cnn-l2-pgd").unwrap();
        cfg.batch_size = 2;
        cfg.duration = Duration::Epochs(2);
        cfg.adv.as_mut().unwrap().delay_epochs = 1;
        cfg.adv.as_mut().unwrap().method = AdvMethod::Pgd { steps: 1, step_size: 2.0 / 255.0, random_start: true };
        let init = init_convnet::<f32>(&cfg).unwrap();
        let (net, log) = train_convnet(init.clone(), &data, &cfg, &mut |_| {}).unwrap();
        assert_ne!(net, init);
        assert_eq!(log.steps, 4);
        assert_eq!(log.epochs.len(), 2);
    }
}
