//! Attacks against any [`Classifier`]: the fast gradient family, PGD, two
//! L0 attacks, JSMA and fooling images.

mod fooling;
mod jsma;
mod l0;

pub use fooling::{fooling_ascent, fooling_asr_sweep, FoolingPoint, FoolingTrace};
pub use jsma::{jsma, jsma_budget, JsmaOutcome, JSMA_TOP_B};
pub use l0::{pixel_swap, top_weight_pixel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{loss_input_grad, predict_classes, Classifier, LinearLogistic, LossFn};
use crate::tensor::Tensor;

/// Scale applied to the unit gradient before element-wise clipping in
/// [`scaled_clipped_fgl2`].
pub const FGL2_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackFamily {
    Fgsm,
    FastGradL2,
    ScaledClippedFgl2 { scale: f64 },
    Pgd { steps: usize, step_size: f64, random_start: bool },
    PixelSwap { ratio: f64 },
    TopWeightPixel { k: usize },
    Jsma { gamma: f64, target: Option<usize> },
    Fooling { steps: usize, step_size: f64 },
}

impl AttackFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            AttackFamily::Fgsm => "fgsm",
            AttackFamily::FastGradL2 => "fgl2",
            AttackFamily::ScaledClippedFgl2 { .. } => "scaled-fgl2",
            AttackFamily::Pgd { .. } => "pgd",
            AttackFamily::PixelSwap { .. } => "pixel-swap",
            AttackFamily::TopWeightPixel { .. } => "top-weight-pixel",
            AttackFamily::Jsma { .. } => "jsma",
            AttackFamily::Fooling { .. } => "fooling",
        }
    }
}

/// One fully specified attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub family: AttackFamily,
    pub eps: f64,
    pub clip: bool,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(family: AttackFamily, eps: f64) -> Self {
        Self {
            family,
            eps,
            clip: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_clip(mut self, clip: bool) -> Self {
        self.clip = clip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::arg(format!("eps must be non-negative, got {}", self.eps)));
        }
        match self.family {
            AttackFamily::Pgd { steps: 0, .. } | AttackFamily::Fooling { steps: 0, .. } => {
                Err(Error::arg("steps must be at least 1"))
            }
            AttackFamily::PixelSwap { ratio } if !(0.0..=1.0).contains(&ratio) => {
                Err(Error::arg(format!("ratio must be in [0, 1], got {ratio}")))
            }
            AttackFamily::Jsma { gamma, .. } if !(0.0..=1.0).contains(&gamma) => {
                Err(Error::arg(format!("gamma must be in [0, 1], got {gamma}")))
            }
            AttackFamily::ScaledClippedFgl2 { scale } if !(scale > 0.0) => {
                Err(Error::arg("scale must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of attacking one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub x_adv: Vec<f64>,
    pub success: bool,
    /// `||x_adv - x||_2` in pixel units (pixels in `[0, 1]`).
    pub l2: f64,
    /// `||x_adv - x||_2 / sqrt(d)`, the fraction of the largest possible
    /// perturbation norm.
    pub l2_fraction: f64,
    pub features_changed: usize,
    /// Set when the attack had no gradient to follow.
    pub zero_gradient: bool,
}

impl AttackResult {
    pub fn measure(x: &[f64], x_adv: Vec<f64>, success: bool) -> Self {
        let mut sq = 0.0;
        let mut changed = 0;
        for (a, b) in x.iter().zip(&x_adv) {
            let d = b - a;
            if d != 0.0 {
                changed += 1;
                sq += d * d;
            }
        }
        let l2 = sq.sqrt();
        Self {
            x_adv,
            success,
            l2,
            l2_fraction: l2 / (x.len() as f64).sqrt(),
            features_changed: changed,
            zero_gradient: false,
        }
    }
}

/// Default loss used to compute attack gradients.
pub fn attack_loss() -> LossFn {
    LossFn::SoftmaxXent { label_smoothing: 0.0 }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clip01(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// `x + eps * sign(grad_x loss)`; `sign(0) = 0`.
pub fn fgsm(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    eps: f64,
    clip: bool,
) -> Result<Tensor> {
    let (_, g) = loss_input_grad(model, xs, labels, attack_loss())?;
    let mut out = xs.clone();
    for (x, gi) in out.data_mut().iter_mut().zip(g.data()) {
        *x += eps * sign(*gi);
    }
    if clip {
        clip01(out.data_mut());
    }
    Ok(out)
}

/// `x + eps * g / ||g||_2`. Rows whose gradient vanishes are returned
/// unchanged and flagged.
pub fn fast_grad_l2(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    eps: f64,
    clip: bool,
) -> Result<(Tensor, Vec<bool>)> {
    let (_, g) = loss_input_grad(model, xs, labels, attack_loss())?;
    let mut out = xs.clone();
    let d = xs.row_len();
    let mut zero = vec![false; xs.outer()];
    for (i, gi) in g.rows().enumerate() {
        let norm = gi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero[i] = true;
            continue;
        }
        let row = &mut out.data_mut()[i * d..(i + 1) * d];
        for (x, v) in row.iter_mut().zip(gi) {
            *x += eps * v / norm;
        }
        if clip {
            clip01(row);
        }
    }
    Ok((out, zero))
}

/// `delta = clamp(scale * g / ||g||_2, -eps, eps)` element-wise, then the
/// optional clip to `[0, 1]`. Saturated elements match FGSM; elements with
/// zero gradient stay untouched.
pub fn scaled_clipped_fgl2(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    eps: f64,
    scale: f64,
    clip: bool,
) -> Result<(Tensor, Vec<bool>)> {
    let (_, g) = loss_input_grad(model, xs, labels, attack_loss())?;
    let mut out = xs.clone();
    let d = xs.row_len();
    let mut zero = vec![false; xs.outer()];
    for (i, gi) in g.rows().enumerate() {
        let norm = gi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero[i] = true;
            continue;
        }
        let row = &mut out.data_mut()[i * d..(i + 1) * d];
        for (x, v) in row.iter_mut().zip(gi) {
            *x += (scale * v / norm).clamp(-eps, eps);
        }
        if clip {
            clip01(row);
        }
    }
    Ok((out, zero))
}

/// Per-example RNG seed.
pub fn example_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Projected gradient ascent on the loss with sign steps, projected onto
/// the L-infinity `eps` ball around `xs` intersected with `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn pgd(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    eps: f64,
    steps: usize,
    step_size: f64,
    random_start: bool,
    seed: u64,
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::arg("pgd needs at least one step"));
    }
    let d = xs.row_len();
    let mut cur = xs.clone();
    let project = |cur: &mut Tensor| {
        for (c, &x) in cur.data_mut().iter_mut().zip(xs.data()) {
            *c = c.clamp(x - eps, x + eps).clamp(0.0, 1.0);
        }
    };
    if random_start && eps > 0.0 {
        for i in 0..xs.outer() {
            let mut rng = ChaCha8Rng::seed_from_u64(example_seed(seed, i));
            for v in &mut cur.data_mut()[i * d..(i + 1) * d] {
                *v += rng.random_range(-eps..eps);
            }
        }
        project(&mut cur);
    }
    for _ in 0..steps {
        let (_, g) = loss_input_grad(model, &cur, labels, attack_loss())?;
        for (c, gi) in cur.data_mut().iter_mut().zip(g.data()) {
            *c += step_size * sign(*gi);
        }
        project(&mut cur);
    }
    Ok(cur)
}

/// Run `spec` on a batch and measure every example. Untargeted attacks
/// succeed when the prediction differs from the label; JSMA succeeds when
/// it reaches its target.
pub fn run_attack(
    model: &dyn Classifier,
    spec: &AttackSpec,
    xs: &Tensor,
    labels: &[usize],
    linear: Option<&LinearLogistic>,
) -> Result<Vec<AttackResult>> {
    spec.validate()?;
    let n = xs.outer();
    if labels.len() != n {
        return Err(Error::dim(format!("{n} inputs but {} labels", labels.len())));
    }
    let mut zero = vec![false; n];
    let adv = match spec.family {
        AttackFamily::Fgsm => fgsm(model, xs, labels, spec.eps, spec.clip)?,
        AttackFamily::FastGradL2 => {
            let (a, z) = fast_grad_l2(model, xs, labels, spec.eps, spec.clip)?;
            zero = z;
            a
        }
        AttackFamily::ScaledClippedFgl2 { scale } => {
            let (a, z) = scaled_clipped_fgl2(model, xs, labels, spec.eps, scale, spec.clip)?;
            zero = z;
            a
        }
        AttackFamily::Pgd {
            steps,
            step_size,
            random_start,
        } => pgd(model, xs, labels, spec.eps, steps, step_size, random_start, spec.seed)?,
        AttackFamily::PixelSwap { ratio } => {
            let mut out = xs.clone();
            for i in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(example_seed(spec.seed, i));
                let swapped = pixel_swap(xs.row(i), ratio, &mut rng)?;
                out.row_mut(i).copy_from_slice(&swapped);
            }
            out
        }
        AttackFamily::TopWeightPixel { k } => {
            let lin = linear.ok_or_else(|| {
                Error::Incompatible("top-weight-pixel needs a linear model".into())
            })?;
            let mut out = xs.clone();
            for (i, &label) in labels.iter().enumerate() {
                let y = crate::data::class_to_sign(label);
                let a = top_weight_pixel(lin, xs.row(i), y, k)?;
                out.row_mut(i).copy_from_slice(&a);
            }
            out
        }
        AttackFamily::Jsma { gamma, target } => {
            let k = model.num_classes();
            let mut results = Vec::with_capacity(n);
            for (i, &label) in labels.iter().enumerate() {
                let t = target.unwrap_or((label + 1) % k);
                let o = jsma(model, xs.row(i), label, t, gamma)?;
                let mut r = AttackResult::measure(xs.row(i), o.x_adv, o.success);
                r.features_changed = o.features_changed;
                results.push(r);
            }
            return Ok(results);
        }
        AttackFamily::Fooling { .. } => {
            return Err(Error::Incompatible(
                "fooling images are generated from noise, use fooling_ascent".into(),
            ))
        }
    };
    let pred = predict_classes(model, &adv)?;
    Ok((0..n)
        .map(|i| {
            let mut r = AttackResult::measure(xs.row(i), adv.row(i).to_vec(), pred[i] != labels[i]);
            r.zero_gradient = zero[i];
            r
        })
        .collect())
}
