use crate::error::{Error, Result};
use crate::models::{argmax, logit_jacobian, Classifier};

/// Candidate features kept per iteration before the pair search.
pub const JSMA_TOP_B: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct JsmaOutcome {
    pub x_adv: Vec<f64>,
    pub success: bool,
    pub features_changed: usize,
    pub iterations: usize,
}

/// Largest number of features a budget `gamma` allows, `round(gamma * d)`.
pub fn jsma_budget(gamma: f64, d: usize) -> usize {
    (gamma * d as f64).round() as usize
}

/// Targeted saliency-map attack that raises pairs of features to 1.
///
/// Each iteration takes the logit Jacobian, keeps the `JSMA_TOP_B` eligible
/// features with the largest `a_i - b_i` (`a` = target-logit gradient,
/// `b` = summed gradient of the other logits), and among their pairs picks
/// the one with `a > 0`, `b < 0` maximising `a * |b|`. Saturated and already
/// modified features are ineligible. Stops on reaching the target or when
/// another pair would exceed `round(gamma * d)` changed features.
pub fn jsma(
    model: &dyn Classifier,
    x: &[f64],
    true_label: usize,
    target: usize,
    gamma: f64,
) -> Result<JsmaOutcome> {
    let k = model.num_classes();
    let d = model.input_dim();
    if target >= k || true_label >= k {
        return Err(Error::arg(format!("class out of range for {k} classes")));
    }
    if target == true_label {
        return Err(Error::arg("jsma target must differ from the true label"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::arg(format!("gamma must be in [0, 1], got {gamma}")));
    }
    if x.len() != d {
        return Err(Error::dim(format!("expected {d} features, got {}", x.len())));
    }
    let budget = jsma_budget(gamma, d);
    let mut cur = x.to_vec();
    let mut eligible: Vec<bool> = cur.iter().map(|&v| v < 1.0).collect();
    let mut changed = 0;
    let mut iterations = 0;
    loop {
        let (z, jac) = logit_jacobian(model, &cur)?;
        if argmax(&z) == target {
            return Ok(JsmaOutcome {
                x_adv: cur,
                success: true,
                features_changed: changed,
                iterations,
            });
        }
        if changed + 2 > budget {
            break;
        }
        let a = jac.row(target);
        let mut b = vec![0.0; d];
        for j in (0..k).filter(|&j| j != target) {
            for (bi, v) in b.iter_mut().zip(jac.row(j)) {
                *bi += v;
            }
        }
        let mut cand: Vec<usize> = (0..d).filter(|&i| eligible[i]).collect();
        if cand.len() < 2 {
            break;
        }
        cand.sort_by(|&p, &q| (a[q] - b[q]).total_cmp(&(a[p] - b[p])).then(p.cmp(&q)));
        cand.truncate(JSMA_TOP_B);
        let mut best: Option<(usize, usize, f64)> = None;
        for (ii, &p) in cand.iter().enumerate() {
            for &q in &cand[ii + 1..] {
                let alpha = a[p] + a[q];
                let beta = b[p] + b[q];
                if alpha > 0.0 && beta < 0.0 {
                    let score = alpha * -beta;
                    if best.is_none_or(|(_, _, s)| score > s) {
                        best = Some((p, q, score));
                    }
                }
            }
        }
        let Some((p, q, _)) = best else { break };
        for i in [p, q] {
            cur[i] = 1.0;
            eligible[i] = false;
        }
        changed += 2;
        iterations += 1;
    }
    Ok(JsmaOutcome {
        x_adv: cur,
        success: false,
        features_changed: changed,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearLogistic;
    use crate::tensor::Tensor;

    fn lin() -> LinearLogistic {
        LinearLogistic::new(Tensor::from_vec(vec![1.0, -2.0, 0.5, -0.1, 3.0, -1.5]).unwrap(), 0.0)
            .unwrap()
    }

    #[test]
    fn zero_budget_fails_unchanged() {
        let x = vec![0.2; 6];
        // class 0 needs z > 0; target class 1 needs z < 0
        let o = jsma(&lin(), &x, 0, 1, 0.1).unwrap();
        assert!(!o.success);
        assert_eq!(o.x_adv, x);
        assert_eq!(o.features_changed, 0);
    }

    #[test]
    fn respects_budget_and_reaches_target() {
        let x = vec![0.0; 6];
        let m = LinearLogistic::new(lin().w().clone(), -1.0).unwrap();
        let o = jsma(&m, &x, 1, 0, 1.0).unwrap();
        assert!(o.success);
        assert!(o.features_changed <= 6);
        // the first pair raises the two most positive weights
        assert_eq!(o.x_adv[4], 1.0);
        assert_eq!(o.x_adv[0], 1.0);
    }

    #[test]
    fn rejects_same_target() {
        assert!(jsma(&lin(), &[0.0; 6], 1, 1, 0.5).is_err());
    }
}
