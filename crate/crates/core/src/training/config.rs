//! Flat `key = value` config files.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! An optional `recipe = <name>` on the first setting line loads a named
//! recipe that later keys override. Numbers may be written as fractions
//! (`8/255`). Unset keys keep the defaults of natural logistic training.

use super::{
    recipe, AdvMethod, AdvTrainSpec, DatasetKind, DecayNorm, DecaySpec, Duration, Init,
    LabelSource, ModelKind, Optimizer, Precision, TrainConfig,
};
use crate::attacks::FGL2_SCALE;
use crate::error::{Error, Result};
use crate::models::LossFn;

/// Parse a number, accepting `a/b` fractions.
pub fn parse_fraction(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Adversarial settings are collected loosely and assembled at the end.
struct AdvDraft {
    method: Option<String>,
    eps: f64,
    eps_final: Option<f64>,
    steps: usize,
    step_size: f64,
    random_start: bool,
    scale: f64,
    delay: usize,
    labels: LabelSource,
    clip: bool,
}

impl AdvDraft {
    fn from(adv: Option<&AdvTrainSpec>) -> Self {
        let mut d = AdvDraft {
            method: None,
            eps: 0.0,
            eps_final: None,
            steps: 1,
            step_size: 0.0,
            random_start: false,
            scale: FGL2_SCALE,
            delay: 0,
            labels: LabelSource::TrueLabel,
            clip: true,
        };
        if let Some(a) = adv {
            d.method = Some(a.method.name().to_string());
            d.eps = a.eps;
            d.eps_final = a.eps_final;
            d.delay = a.delay_epochs;
            d.labels = a.label_source;
            d.clip = a.clip;
            match a.method {
                AdvMethod::Pgd { steps, step_size, random_start } => {
                    d.steps = steps;
                    d.step_size = step_size;
                    d.random_start = random_start;
                }
                AdvMethod::ScaledClippedFgl2 { scale } => d.scale = scale,
                _ => {}
            }
        }
        d
    }

    fn build(&self) -> Result<Option<AdvTrainSpec>> {
        let method = match self.method.as_deref() {
            None | Some("none") => return Ok(None),
            Some("fgsm") => AdvMethod::Fgsm,
            Some("fgl2") => AdvMethod::FastGradL2,
            Some("scaled-fgl2") => AdvMethod::ScaledClippedFgl2 { scale: self.scale },
            Some("pgd") => AdvMethod::Pgd {
                steps: self.steps,
                step_size: self.step_size,
                random_start: self.random_start,
            },
            Some(other) => return Err(cfg_err(0, format!("unknown adv method `{other}`"))),
        };
        Ok(Some(AdvTrainSpec {
            method,
            eps: self.eps,
            delay_epochs: self.delay,
            label_source: self.labels,
            clip: self.clip,
            eps_final: self.eps_final,
        }))
    }
}

fn parse_bool(line: usize, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(line, format!("expected true/false, got `{v}`"))),
    }
}

/// Parse config text into a validated [`TrainConfig`].
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::linear_default();
    let mut adv = AdvDraft::from(None);
    let mut opt_name = "adam".to_string();
    let (mut lr, mut beta1, mut beta2, mut adam_eps) = (1e-5, 0.9, 0.999, 1e-8);
    let mut decay_norm = DecayNorm::None;
    let mut lambda = 0.0;
    let mut loss_name = "softplus".to_string();
    let mut smoothing = 0.0;
    let mut init_name = "zeros".to_string();
    let mut init_std = 0.0;
    let mut first = true;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || parse_fraction(value).ok_or_else(|| cfg_err(line, format!("`{key}` needs a number, got `{value}`")));
        let int = || value.parse::<u64>().map_err(|_| cfg_err(line, format!("`{key}` needs a non-negative integer, got `{value}`")));
        match key {
            "recipe" => {
                if !first {
                    return Err(cfg_err(line, "`recipe` must be the first setting"));
                }
                cfg = recipe(value)?;
                adv = AdvDraft::from(cfg.adv.as_ref());
                match cfg.optimizer {
                    Optimizer::Sgd { lr: l } => {
                        opt_name = "sgd".into();
                        lr = l;
                    }
                    Optimizer::Adam { lr: l, beta1: b1, beta2: b2, eps } => {
                        opt_name = "adam".into();
                        (lr, beta1, beta2, adam_eps) = (l, b1, b2, eps);
                    }
                }
                decay_norm = cfg.decay.norm;
                lambda = cfg.decay.lambda;
                loss_name = cfg.loss.tag().into();
                smoothing = cfg.loss.smoothing();
                (init_name, init_std) = match cfg.init {
                    Init::Zeros => ("zeros".into(), 0.0),
                    Init::Expert => ("expert".into(), 0.0),
                    Init::Glorot => ("glorot".into(), 0.0),
                    Init::Normal { std } => ("normal".into(), std),
                };
            }
            "dataset" => {
                cfg.dataset = match value {
                    "mnist-3v7" => DatasetKind::Mnist3v7,
                    "cifar10" => DatasetKind::Cifar10,
                    _ => return Err(cfg_err(line, format!("unknown dataset `{value}`"))),
                }
            }
            "model" => {
                cfg.model = match value {
                    "linear" => ModelKind::Linear,
                    "convnet" => ModelKind::ConvNet,
                    _ => return Err(cfg_err(line, format!("unknown model `{value}`"))),
                }
            }
            "init" => init_name = value.to_string(),
            "init_std" => init_std = num()?,
            "optimizer" => opt_name = value.to_string(),
            "lr" => lr = num()?,
            "beta1" => beta1 = num()?,
            "beta2" => beta2 = num()?,
            "adam_eps" => adam_eps = num()?,
            "batch_size" => cfg.batch_size = int()? as usize,
            "steps" => cfg.duration = Duration::Steps(int()?),
            "epochs" => cfg.duration = Duration::Epochs(int()?),
            "decay" => {
                decay_norm = DecayNorm::parse(value)
                    .ok_or_else(|| cfg_err(line, format!("unknown decay `{value}`")))?
            }
            "lambda" => lambda = num()?,
            "adv" => adv.method = Some(value.to_string()),
            "adv_eps" => adv.eps = num()?,
            "adv_eps_final" => adv.eps_final = Some(num()?),
            "adv_steps" => adv.steps = int()? as usize,
            "adv_step_size" => adv.step_size = num()?,
            "adv_random_start" => adv.random_start = parse_bool(line, value)?,
            "adv_scale" => adv.scale = num()?,
            "adv_delay_epochs" => adv.delay = int()? as usize,
            "adv_labels" => {
                adv.labels = match value {
                    "true" => LabelSource::TrueLabel,
                    "predicted" => LabelSource::ModelPrediction,
                    _ => return Err(cfg_err(line, format!("adv_labels is `true` or `predicted`, got `{value}`"))),
                }
            }
            "adv_clip" => adv.clip = parse_bool(line, value)?,
            "loss" => loss_name = value.to_string(),
            "label_smoothing" => smoothing = num()?,
            "seed" => cfg.seed = int()?,
            "train_subset" => {
                cfg.train_subset = match value {
                    "all" => None,
                    _ => Some(int()? as usize),
                }
            }
            "precision" => {
                cfg.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(cfg_err(line, format!("precision is f32 or f64, got `{value}`"))),
                }
            }
            _ => return Err(cfg_err(line, format!("unknown key `{key}`"))),
        }
        first = false;
    }

    cfg.optimizer = match opt_name.as_str() {
        "sgd" => Optimizer::Sgd { lr },
        "adam" => Optimizer::Adam { lr, beta1, beta2, eps: adam_eps },
        other => return Err(cfg_err(0, format!("unknown optimizer `{other}`"))),
    };
    cfg.decay = DecaySpec {
        norm: decay_norm,
        lambda,
    };
    cfg.loss = match loss_name.as_str() {
        "softplus" => LossFn::SoftplusBinary,
        "xent" => LossFn::xent(smoothing).map_err(|e| cfg_err(0, e.to_string()))?,
        other => return Err(cfg_err(0, format!("unknown loss `{other}`"))),
    };
    cfg.init = match init_name.as_str() {
        "zeros" => Init::Zeros,
        "expert" => Init::Expert,
        "glorot" => Init::Glorot,
        "normal" => Init::Normal { std: init_std },
        other => return Err(cfg_err(0, format!("unknown init `{other}`"))),
    };
    cfg.adv = adv.build()?;
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn to_text(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("dataset", match cfg.dataset {
        DatasetKind::Mnist3v7 => "mnist-3v7",
        DatasetKind::Cifar10 => "cifar10",
    }
    .into());
    kv("model", match cfg.model {
        ModelKind::Linear => "linear",
        ModelKind::ConvNet => "convnet",
    }
    .into());
    match cfg.init {
        Init::Zeros => kv("init", "zeros".into()),
        Init::Expert => kv("init", "expert".into()),
        Init::Glorot => kv("init", "glorot".into()),
        Init::Normal { std } => {
            kv("init", "normal".into());
            kv("init_std", std.to_string());
        }
    }
    match cfg.optimizer {
        Optimizer::Sgd { lr } => {
            kv("optimizer", "sgd".into());
            kv("lr", lr.to_string());
        }
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            kv("optimizer", "adam".into());
            kv("lr", lr.to_string());
            kv("beta1", beta1.to_string());
            kv("beta2", beta2.to_string());
            kv("adam_eps", eps.to_string());
        }
    }
    kv("batch_size", cfg.batch_size.to_string());
    match cfg.duration {
        Duration::Steps(s) => kv("steps", s.to_string()),
        Duration::Epochs(e) => kv("epochs", e.to_string()),
    }
    kv("decay", cfg.decay.norm.name().into());
    kv("lambda", cfg.decay.lambda.to_string());
    match &cfg.adv {
        None => kv("adv", "none".into()),
        Some(a) => {
            kv("adv", a.method.name().into());
            kv("adv_eps", a.eps.to_string());
            if let Some(e) = a.eps_final {
                kv("adv_eps_final", e.to_string());
            }
            match a.method {
                AdvMethod::Pgd { steps, step_size, random_start } => {
                    kv("adv_steps", steps.to_string());
                    kv("adv_step_size", step_size.to_string());
                    kv("adv_random_start", random_start.to_string());
                }
                AdvMethod::ScaledClippedFgl2 { scale } => kv("adv_scale", scale.to_string()),
                _ => {}
            }
            kv("adv_delay_epochs", a.delay_epochs.to_string());
            kv("adv_labels", match a.label_source {
                LabelSource::TrueLabel => "true",
                LabelSource::ModelPrediction => "predicted",
            }
            .into());
            kv("adv_clip", a.clip.to_string());
        }
    }
    kv("loss", cfg.loss.tag().into());
    if let LossFn::SoftmaxXent { label_smoothing } = cfg.loss {
        kv("label_smoothing", label_smoothing.to_string());
    }
    kv("seed", cfg.seed.to_string());
    kv("train_subset", cfg.train_subset.map_or("all".into(), |n| n.to_string()));
    kv("precision", match cfg.precision {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    }
    .into());
    out
}
