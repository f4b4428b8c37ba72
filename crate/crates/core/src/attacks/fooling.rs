use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{attack_loss, example_seed};
use crate::error::{Error, Result};
use crate::models::{argmax, loss_input_grad, Classifier};
use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct FoolingTrace {
    pub image: Vec<f64>,
    /// Target probability before the first step and after every step.
    pub probs: Vec<f64>,
}

/// Grow a fooling image for `target` from `0.5 + U(0, 0.1)` noise with
/// `steps` plain gradient-descent steps on the cross entropy towards the
/// target, clipping to `[0, 1]` after each step.
pub fn fooling_ascent(
    model: &dyn Classifier,
    target: usize,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<FoolingTrace> {
    let k = model.num_classes();
    if target >= k {
        return Err(Error::arg(format!("target {target} out of range for {k} classes")));
    }
    let d = model.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..d).map(|_| 0.5 + rng.random_range(0.0..0.1)).collect();
    let mut xs = Tensor::new(vec![1, d], init)?;
    let prob = |xs: &Tensor| -> Result<f64> { Ok(softmax(model.logits(xs)?.row(0))[target]) };
    let mut probs = vec![prob(&xs)?];
    for _ in 0..steps {
        let (_, g) = loss_input_grad(model, &xs, &[target], attack_loss())?;
        for (x, gi) in xs.data_mut().iter_mut().zip(g.data()) {
            *x = (*x - step_size * gi).clamp(0.0, 1.0);
        }
        probs.push(prob(&xs)?);
    }
    Ok(FoolingTrace {
        image: xs.into_data(),
        probs,
    })
}

/// One point of the single-step fooling sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoolingPoint {
    pub eps: f64,
    /// Fraction of (sample, target) pairs whose prediction equals the
    /// target (or whose target probability exceeds the threshold).
    pub asr: f64,
    /// Mean gap between the two largest softmax probabilities over all
    /// attacked samples.
    pub margin: f64,
    pub n: usize,
}

/// For every `eps` in `grid`: draw `n` images from `U(0, 1)`, take one
/// signed-gradient step of size `eps` towards each class, and report the
/// success rate and mean margin. `threshold = None` counts argmax hits.
pub fn fooling_asr_sweep(
    model: &dyn Classifier,
    grid: &[f64],
    n: usize,
    threshold: Option<f64>,
    seed: u64,
) -> Result<Vec<FoolingPoint>> {
    if n == 0 || grid.is_empty() {
        return Err(Error::arg("fooling sweep needs n >= 1 and a non-empty grid"));
    }
    let k = model.num_classes();
    let d = model.input_dim();
    let mut base = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(example_seed(seed, i));
        base.extend((0..d).map(|_| rng.random::<f64>()));
    }
    // every (sample, target) pair; the step direction does not depend on eps
    let mut rows = Vec::with_capacity(n * k * d);
    let mut targets = Vec::with_capacity(n * k);
    for i in 0..n {
        for t in 0..k {
            rows.extend_from_slice(&base[i * d..(i + 1) * d]);
            targets.push(t);
        }
    }
    let xs = Tensor::new(vec![n * k, d], rows)?;
    let (_, g) = loss_input_grad(model, &xs, &targets, attack_loss())?;
    let dir: Vec<f64> = g
        .data()
        .iter()
        .map(|&v| if v > 0.0 { -1.0 } else if v < 0.0 { 1.0 } else { 0.0 })
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    for &eps in grid {
        let mut adv = xs.clone();
        for (x, s) in adv.data_mut().iter_mut().zip(&dir) {
            *x = (*x + eps * s).clamp(0.0, 1.0);
        }
        let z = model.logits(&adv)?;
        let mut hits = 0usize;
        let mut margin = 0.0;
        for (row, &t) in z.rows().zip(&targets) {
            let p = softmax(row);
            let hit = match threshold {
                None => argmax(row) == t,
                Some(th) => p[t] > th,
            };
            hits += hit as usize;
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in &p {
                if v > a {
                    b = a;
                    a = v;
                } else if v > b {
                    b = v;
                }
            }
            margin += a - b;
        }
        let total = (n * k) as f64;
        out.push(FoolingPoint {
            eps,
            asr: hits as f64 / total,
            margin: margin / total,
            n,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConvNet;

    #[test]
    fn zero_model_keeps_init() {
        let net = ConvNet::<f64>::zeros();
        let t = fooling_ascent(&net, 3, 5, 5e-3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init: Vec<f64> = (0..3072).map(|_| 0.5 + rng.random_range(0.0..0.1)).collect();
        assert_eq!(t.image, init);
        assert_eq!(t.probs.len(), 6);
        assert!(t.probs.iter().all(|&p| (p - 0.1).abs() < 1e-12));
    }

    #[test]
    fn zero_steps_is_init() {
        let net = ConvNet::<f64>::glorot(0);
        let a = fooling_ascent(&net, 0, 0, 5e-3, 9).unwrap();
        assert_eq!(a.probs.len(), 1);
        assert!(a.image.iter().all(|&v| (0.5..0.6).contains(&v)));
    }

    #[test]
    fn margin_in_unit_interval() {
        let net = ConvNet::<f32>::glorot(2);
        let pts = fooling_asr_sweep(&net, &[0.0, 0.1, 1.0], 3, None, 0).unwrap();
        for p in pts {
            assert!((0.0..=1.0).contains(&p.margin));
            assert!((0.0..=1.0).contains(&p.asr));
        }
    }
}
