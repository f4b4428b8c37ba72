use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::LinearLogistic;

/// Pick `round(ratio * d)` features uniformly without replacement and
/// permute their values uniformly at random. The multiset of values is
/// preserved exactly.
pub fn pixel_swap<R: Rng + ?Sized>(x: &[f64], ratio: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::arg(format!("ratio must be in [0, 1], got {ratio}")));
    }
    let d = x.len();
    let k = ((ratio * d as f64).round() as usize).min(d);
    let mut out = x.to_vec();
    if k < 2 {
        return Ok(out);
    }
    let idx = index::sample(rng, d, k).into_vec();
    let mut perm = idx.clone();
    perm.shuffle(rng);
    for (&dst, &src) in idx.iter().zip(&perm) {
        out[dst] = x[src];
    }
    Ok(out)
}

/// Black-box L0 attack on a linear model: set the features under the
/// smallest and largest weights to 1. The `ceil(k/2)` side goes to the
/// weights that hurt the true class (`y * w` most negative), the
/// `floor(k/2)` side to the opposite end.
pub fn top_weight_pixel(model: &LinearLogistic, x: &[f64], y: f64, k: usize) -> Result<Vec<f64>> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::dim(format!("{} features for a {d}-d model", x.len())));
    }
    if k > d {
        return Err(Error::arg(format!("k = {k} exceeds the {d} features")));
    }
    let w = model.w().data();
    let mut order: Vec<usize> = (0..d).collect();
    // ascending y * w; ties broken by index for determinism
    order.sort_by(|&a, &b| (y * w[a]).total_cmp(&(y * w[b])).then(a.cmp(&b)));
    let harm = k.div_ceil(2);
    let help = k / 2;
    let mut out = x.to_vec();
    for &i in order.iter().take(harm).chain(order.iter().rev().take(help)) {
        out[i] = 1.0;
    }
    Ok(out)
}
