use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Weight penalty added to the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayNorm {
    None,
    /// `lambda * ||w||_1`
    L1,
    /// `lambda * ||w||_1 / d`, the mean absolute weight.
    L1Mean,
    /// `lambda * ||w||_2`; the gradient at `w = 0` is taken as zero.
    L2,
    /// `lambda / 2 * ||w||_2^2`, gradient `lambda * w`.
    L2Squared,
}

impl DecayNorm {
    pub fn name(&self) -> &'static str {
        match self {
            DecayNorm::None => "none",
            DecayNorm::L1 => "l1",
            DecayNorm::L1Mean => "l1-mean",
            DecayNorm::L2 => "l2",
            DecayNorm::L2Squared => "l2-squared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => DecayNorm::None,
            "l1" => DecayNorm::L1,
            "l1-mean" => DecayNorm::L1Mean,
            "l2" => DecayNorm::L2,
            "l2-squared" => DecayNorm::L2Squared,
            _ => return None,
        })
    }
}

/// Penalty applied jointly to every weight (biases are never decayed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySpec {
    pub norm: DecayNorm,
    pub lambda: f64,
}

impl DecaySpec {
    pub const NONE: DecaySpec = DecaySpec {
        norm: DecayNorm::None,
        lambda: 0.0,
    };

    pub fn new(norm: DecayNorm, lambda: f64) -> Result<Self> {
        let s = Self { norm, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.norm != DecayNorm::None && self.lambda > 0.0
    }

    /// Penalty value over a set of weight buffers.
    pub fn penalty<T: Scalar>(&self, weights: &[&[T]]) -> f64 {
        let count: usize = weights.iter().map(|w| w.len()).sum();
        let l1 = || -> f64 { weights.iter().flat_map(|w| w.iter()).map(|v| v.f64().abs()).sum() };
        let sq = || -> f64 {
            weights
                .iter()
                .flat_map(|w| w.iter())
                .map(|v| v.f64() * v.f64())
                .sum()
        };
        match self.norm {
            DecayNorm::None => 0.0,
            DecayNorm::L1 => self.lambda * l1(),
            DecayNorm::L1Mean => self.lambda * l1() / count.max(1) as f64,
            DecayNorm::L2 => self.lambda * sq().sqrt(),
            DecayNorm::L2Squared => 0.5 * self.lambda * sq(),
        }
    }

    /// Add the penalty gradient to `grads` (same layout as `weights`).
    pub fn add_gradient<T: Scalar>(&self, weights: &[&[T]], grads: &mut [&mut [T]]) {
        if !self.is_active() {
            return;
        }
        let count: usize = weights.iter().map(|w| w.len()).sum();
        let coef = match self.norm {
            DecayNorm::None => return,
            DecayNorm::L1 | DecayNorm::L2Squared => self.lambda,
            DecayNorm::L1Mean => self.lambda / count.max(1) as f64,
            DecayNorm::L2 => {
                let norm: f64 = weights
                    .iter()
                    .flat_map(|w| w.iter())
                    .map(|v| v.f64() * v.f64())
                    .sum::<f64>()
                    .sqrt();
                if norm == 0.0 {
                    return;
                }
                self.lambda / norm
            }
        };
        let c = T::of(coef);
        let signed = matches!(self.norm, DecayNorm::L1 | DecayNorm::L1Mean);
        for (w, g) in weights.iter().zip(grads.iter_mut()) {
            for (&wi, gi) in w.iter().zip(g.iter_mut()) {
                if signed {
                    if wi > T::ZERO {
                        *gi += c;
                    } else if wi < T::ZERO {
                        *gi -= c;
                    }
                } else {
                    *gi += c * wi;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad(spec: DecaySpec, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        spec.add_gradient(&[w], &mut [&mut g]);
        g
    }

    #[test]
    fn gradients() {
        let w = [3.0, -4.0, 0.0];
        assert_eq!(grad(DecaySpec::new(DecayNorm::L1, 2.0).unwrap(), &w), vec![2.0, -2.0, 0.0]);
        let g = grad(DecaySpec::new(DecayNorm::L2, 5.0).unwrap(), &w);
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 4.0).abs() < 1e-12);
        assert_eq!(grad(DecaySpec::new(DecayNorm::L2Squared, 0.5).unwrap(), &w), vec![1.5, -2.0, 0.0]);
        let g = grad(DecaySpec::new(DecayNorm::L1Mean, 3.0).unwrap(), &w);
        assert_eq!(g, vec![1.0, -1.0, 0.0]);
        assert_eq!(grad(DecaySpec::new(DecayNorm::L2, 1.0).unwrap(), &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn penalties() {
        let w = [3.0, -4.0];
        assert_eq!(DecaySpec::new(DecayNorm::L1, 1.0).unwrap().penalty(&[&w[..]]), 7.0);
        assert_eq!(DecaySpec::new(DecayNorm::L2, 1.0).unwrap().penalty(&[&w[..]]), 5.0);
        assert_eq!(DecaySpec::new(DecayNorm::L2Squared, 1.0).unwrap().penalty(&[&w[..]]), 12.5);
        assert_eq!(DecaySpec::NONE.penalty(&[&w[..]]), 0.0);
    }

    #[test]
    fn rejects_negative_lambda() {
        assert!(DecaySpec::new(DecayNorm::L1, -1.0).is_err());
    }
}
