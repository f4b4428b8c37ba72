//! Measurement layer: accuracy, attack-strength sweeps, JSMA tables and
//! weight/perturbation image export.

mod csvio;
mod export;

pub use csvio::{
    fooling_from_csv, fooling_to_csv, jsma_table_from_csv, jsma_table_to_csv, sweep_from_csv,
    sweep_to_csv,
};
pub use export::{
    conv1_filter_grid, encode_pgm, export_weight_image, image_grid, perturbation_to_unit,
    symmetric_gray, write_pgm, write_png, GrayImage, Image, RgbImage,
};

use rayon::prelude::*;

use crate::attacks::{jsma, run_attack, AttackFamily, AttackSpec};
use crate::data::{BinaryView, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::{predict_classes, Classifier, ConvNet, LinearLogistic};
use crate::tensor::{Scalar, Tensor};

/// Flat inputs with class-id labels, the form every attack consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub xs: Tensor,
    pub labels: Vec<usize>,
}

impl EvalSet {
    pub fn new(xs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if xs.outer() != labels.len() || labels.is_empty() {
            return Err(Error::dim(format!("{} rows but {} labels", xs.outer(), labels.len())));
        }
        let n = xs.outer();
        let d = xs.row_len();
        Ok(Self {
            xs: xs.reshape(&[n, d])?,
            labels,
        })
    }

    pub fn from_binary(view: &BinaryView) -> Result<Self> {
        Self::new(view.images().clone(), view.class_labels())
    }

    pub fn from_dataset(ds: &LabeledDataset) -> Result<Self> {
        Self::new(ds.images().clone(), ds.class_labels())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.row_len()
    }

    /// The first `n` examples.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Self::new(self.xs.select_rows(&idx)?, self.labels[..idx.len()].to_vec())
    }
}

/// Fraction of examples whose argmax logit equals the label (the sign of
/// the logit for binary models).
pub fn accuracy(model: &dyn Classifier, set: &EvalSet) -> Result<f64> {
    let pred = predict_classes(model, &set.xs)?;
    let hits = pred.iter().zip(&set.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / set.len() as f64)
}

/// Chance accuracy for `k` balanced classes.
pub fn chance_level(k: usize) -> f64 {
    1.0 / k as f64
}

/// Fooling-sweep grid: every integer up to 64, then every 8 up to 255, in
/// units of 1/255.
pub fn default_fooling_grid() -> Vec<f64> {
    (0..=64)
        .chain((72..=248).step_by(8))
        .chain([255])
        .map(|v| v as f64 / 255.0)
        .collect()
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub param: f64,
    /// `param` relative to the input dimension, for pixel-count grids.
    pub param_fraction: Option<f64>,
    pub accuracy: f64,
    /// Mean `||delta||_2` over successful attacks, in pixel units.
    pub mean_l2: f64,
    /// Mean `||delta||_2 / sqrt(d)` over successful attacks, in percent.
    pub mean_l2_distortion_pct: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub attack: String,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// First grid parameter where accuracy drops to `level` or below.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        self.points.iter().find(|p| p.accuracy <= level).map(|p| p.param)
    }

    /// Accuracy interpolated linearly at `param`.
    pub fn accuracy_at(&self, param: f64) -> Option<f64> {
        let p = &self.points;
        let i = p.iter().position(|q| q.param >= param)?;
        if p[i].param == param || i == 0 {
            return Some(p[i].accuracy);
        }
        let (a, b) = (&p[i - 1], &p[i]);
        let t = (param - a.param) / (b.param - a.param);
        Some(a.accuracy + t * (b.accuracy - a.accuracy))
    }
}

/// Attack `family` with its strength parameter replaced by `param`.
pub fn with_param(family: AttackFamily, eps: f64, param: f64) -> Result<(AttackFamily, f64)> {
    Ok(match family {
        AttackFamily::Fgsm
        | AttackFamily::FastGradL2
        | AttackFamily::ScaledClippedFgl2 { .. }
        | AttackFamily::Pgd { .. } => (family, param),
        AttackFamily::PixelSwap { .. } => (AttackFamily::PixelSwap { ratio: param }, eps),
        AttackFamily::TopWeightPixel { .. } => {
            if param < 0.0 || param.fract() != 0.0 {
                return Err(Error::arg(format!("pixel counts must be whole numbers, got {param}")));
            }
            (AttackFamily::TopWeightPixel { k: param as usize }, eps)
        }
        AttackFamily::Jsma { target, .. } => (AttackFamily::Jsma { gamma: param, target }, eps),
        AttackFamily::Fooling { .. } => {
            return Err(Error::Incompatible("fooling sweeps use fooling_asr_sweep".into()))
        }
    })
}

/// Evaluate one attack configuration over the whole set.
pub fn evaluate_point(
    model: &dyn Classifier,
    linear: Option<&LinearLogistic>,
    spec: &AttackSpec,
    set: &EvalSet,
) -> Result<SweepPoint> {
    let results = run_attack(model, spec, &set.xs, &set.labels, linear)?;
    let adv: Vec<f64> = results.iter().flat_map(|r| r.x_adv.iter().copied()).collect();
    let adv = Tensor::new(vec![set.len(), set.dim()], adv)?;
    let pred = predict_classes(model, &adv)?;
    let correct = pred.iter().zip(&set.labels).filter(|(p, l)| p == l).count();
    let wrong: Vec<_> = results
        .iter()
        .zip(pred.iter().zip(&set.labels))
        .filter(|(_, (p, l))| p != l)
        .map(|(r, _)| r)
        .collect();
    let mean = |f: &dyn Fn(&crate::attacks::AttackResult) -> f64| {
        if wrong.is_empty() {
            0.0
        } else {
            wrong.iter().map(|r| f(r)).sum::<f64>() / wrong.len() as f64
        }
    };
    Ok(SweepPoint {
        param: f64::NAN,
        param_fraction: None,
        accuracy: correct as f64 / set.len() as f64,
        mean_l2: mean(&|r| r.l2),
        mean_l2_distortion_pct: 100.0 * mean(&|r| r.l2_fraction),
        n: set.len(),
        seed: spec.seed,
    })
}

/// Parse a grid: `start:stop:step` (inclusive of `stop` within rounding)
/// or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        crate::training::parse_fraction(s).ok_or_else(|| Error::arg(format!("bad grid value `{s}`")))
    };
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::arg("grid range is start:stop:step"));
        }
        let (a, b, s) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(s > 0.0) || b < a {
            return Err(Error::arg("grid range needs step > 0 and stop >= start"));
        }
        let count = ((b - a) / s + 1e-9).floor() as usize;
        (0..=count).map(|i| a + i as f64 * s).collect()
    } else {
        text.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<_>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::arg("empty grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("grid must be strictly increasing"));
    }
    Ok(())
}

/// Accuracy under `spec` at every grid value. With `stop_at_zero` the sweep
/// ends after the first point with zero accuracy.
pub fn sweep(
    model: &(dyn Classifier + Sync),
    linear: Option<&LinearLogistic>,
    spec: &AttackSpec,
    set: &EvalSet,
    grid: &[f64],
    stop_at_zero: bool,
) -> Result<SweepCurve> {
    check_grid(grid)?;
    let d = set.dim() as f64;
    let point = |&p: &f64| -> Result<SweepPoint> {
        let (family, eps) = with_param(spec.family, spec.eps, p)?;
        let s = AttackSpec { family, eps, ..*spec };
        let mut pt = evaluate_point(model, linear, &s, set)?;
        pt.param = p;
        if let AttackFamily::TopWeightPixel { .. } = spec.family {
            pt.param_fraction = Some(p / d);
        }
        Ok(pt)
    };
    let points = if stop_at_zero {
        let mut out = Vec::new();
        for p in grid {
            let pt = point(p)?;
            let done = pt.accuracy == 0.0;
            out.push(pt);
            if done {
                break;
            }
        }
        out
    } else {
        grid.par_iter().map(point).collect::<Result<Vec<_>>>()?
    };
    Ok(SweepCurve {
        attack: spec.family.tag().to_string(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsmaRow {
    pub n_sources: usize,
    pub gamma: f64,
    pub asr: f64,
    /// Mean fraction of features changed over all attempts.
    pub pert_rate: f64,
    /// Mean fraction of features changed over successful attempts.
    pub success_pert_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsmaTable {
    pub rows: Vec<JsmaRow>,
}

/// Targeted JSMA from each of the first `n` images towards every other
/// class, for each budget in `gammas`. Misclassified sources are kept.
pub fn jsma_table(
    model: &(dyn Classifier + Sync),
    set: &EvalSet,
    n: usize,
    gammas: &[f64],
) -> Result<JsmaTable> {
    if n == 0 || n > set.len() {
        return Err(Error::arg(format!("need 1 <= N <= {}, got {n}", set.len())));
    }
    let k = model.num_classes();
    let d = set.dim() as f64;
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let jobs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..k).filter(move |&t| t != set.labels[i]).map(move |t| (i, t)))
            .collect();
        let outcomes = jobs
            .par_iter()
            .map(|&(i, t)| jsma(model, set.xs.row(i), set.labels[i], t, gamma))
            .collect::<Result<Vec<_>>>()?;
        let total = outcomes.len() as f64;
        let succ: Vec<_> = outcomes.iter().filter(|o| o.success).collect();
        let rate_sum: f64 = outcomes.iter().map(|o| o.features_changed as f64 / d).sum();
        let succ_sum: f64 = succ.iter().map(|o| o.features_changed as f64 / d).sum();
        rows.push(JsmaRow {
            n_sources: n,
            gamma,
            asr: succ.len() as f64 / total,
            pert_rate: rate_sum / total,
            success_pert_rate: if succ.is_empty() { 0.0 } else { succ_sum / succ.len() as f64 },
        });
    }
    Ok(JsmaTable { rows })
}

/// Number of first-layer filters whose largest absolute weight is below
/// `tau`.
pub fn conv1_zero_filter_count<T: Scalar>(net: &ConvNet<T>, tau: f64) -> usize {
    net.conv1_zero_filters(tau)
}
