use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr() > 0.0) || !self.lr().is_finite() {
            return Err(Error::arg(format!("learning rate must be positive, got {}", self.lr())));
        }
        if let Optimizer::Adam { beta1, beta2, eps, .. } = *self {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::arg("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Optimizer state for a fixed list of parameter buffers.
#[derive(Debug, Clone)]
pub struct OptState<T: Scalar> {
    opt: Optimizer,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(opt: Optimizer, sizes: &[usize]) -> Self {
        let (m, v) = match opt {
            Optimizer::Sgd { .. } => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (
                sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
                sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            ),
        };
        Self { opt, t: 0, m, v }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Apply one update to every buffer in place.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        self.t += 1;
        match self.opt {
            Optimizer::Sgd { lr } => {
                let lr = T::of(lr);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                        *pi -= lr * gi;
                    }
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let (b1, b2) = (T::of(beta1), T::of(beta2));
                let (ob1, ob2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
                let (ic1, ic2) = (T::of(1.0 / c1), T::of(1.0 / c2));
                let (lr, eps) = (T::of(lr), T::of(eps));
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.m[k];
                    let v = &mut self.v[k];
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = b1 * m[i] + ob1 * gi;
                        v[i] = b2 * v[i] + ob2 * gi * gi;
                        let mh = m[i] * ic1;
                        let vh = v[i] * ic2;
                        p[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut st = OptState::<f64>::new(Optimizer::adam(0.1), &[3]);
        let mut p = vec![1.0, 1.0, 1.0];
        st.step(&mut [&mut p], &[&[2.0, -0.5, 0.0]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn sgd_step() {
        let mut st = OptState::<f64>::new(Optimizer::Sgd { lr: 0.5 }, &[2]);
        let mut p = vec![1.0, 2.0];
        st.step(&mut [&mut p], &[&[1.0, -2.0]]);
        assert_eq!(p, vec![0.5, 3.0]);
    }

    #[test]
    fn validation() {
        assert!(Optimizer::adam(0.0).validate().is_err());
        assert!(Optimizer::Sgd { lr: -1.0 }.validate().is_err());
        assert!(Optimizer::adam(1e-3).validate().is_ok());
    }
}
