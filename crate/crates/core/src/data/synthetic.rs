use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BinaryView;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature standard deviation of each blob.
pub const SYNTHETIC_SIGMA: f64 = 0.1;

/// Two isotropic Gaussian blobs centred at `0.5 +- (separation / 2) u` for a
/// seeded random unit vector `u`, clipped to `[0, 1]`. The first `n / 2`
/// rows are `y = +1`. `separation` is measured in units of the blob
/// standard deviation.
pub fn make_synthetic(n: usize, d: usize, separation: f64, seed: u64) -> Result<BinaryView> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::arg(format!("n must be even and positive, got {n}")));
    }
    if d == 0 {
        return Err(Error::arg("d must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        u[0] = 1.0;
    } else {
        u.iter_mut().for_each(|v| *v /= norm);
    }
    let half = separation * SYNTHETIC_SIGMA / 2.0;
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let sign = if i < n / 2 { 1.0 } else { -1.0 };
        for &ui in &u {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let v = 0.5 + sign * half * ui + SYNTHETIC_SIGMA * noise;
            data.push(v.clamp(0.0, 1.0));
        }
        y.push(sign);
    }
    BinaryView::from_parts(Tensor::new(vec![n, d], data)?, y, 1, 0)
}
