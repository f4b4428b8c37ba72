//! Independent oracles for the attacks: exhaustive search, Monte Carlo on
//! the sphere, brute-force JSMA on a tiny model and the first-order
//! probability bound on the CNN.

mod common;

use common::{rng, tensor, uniform};
use rand::Rng;
use robustlab::attacks::{
    attack_loss, fast_grad_l2, fgsm, fooling_asr_sweep, jsma, pgd, run_attack, AttackFamily,
    AttackSpec,
};
use robustlab::models::{argmax, losses, prob_input_grad, Classifier, ConvNet, LinearLogistic};
use robustlab::tensor::softmax;
use robustlab::Tensor;

fn loss_at(model: &dyn Classifier, x: &[f64], label: usize) -> f64 {
    let xs = Tensor::new(vec![1, x.len()], x.to_vec()).unwrap();
    losses(model, &xs, &[label], attack_loss()).unwrap()[0]
}

#[test]
fn fgsm_beats_every_vertex_of_the_cube() {
    let mut r = rng(30);
    for case in 0..60 {
        let d = r.random_range(1..=12);
        let m = common::linear(&mut r, d);
        let x = uniform(&mut r, d, 0.0, 1.0);
        let label = r.random_range(0..2);
        let eps = r.random_range(0.01..0.5);
        let xs = Tensor::new(vec![1, d], x.clone()).unwrap();
        let adv = fgsm(&m, &xs, &[label], eps, false).unwrap();
        let best = loss_at(&m, adv.row(0), label);
        for mask in 0u32..(1 << d) {
            let v: Vec<f64> = (0..d)
                .map(|i| x[i] + if mask >> i & 1 == 1 { eps } else { -eps })
                .collect();
            let l = loss_at(&m, &v, label);
            assert!(best >= l - 1e-12 * l.abs(), "case {case}: vertex {mask:b} has {l} > {best}");
        }
    }
}

#[test]
fn fgl2_beats_random_points_on_the_sphere() {
    let mut r = rng(31);
    for case in 0..20 {
        let d = r.random_range(2..=30);
        let m = common::linear(&mut r, d);
        let x = uniform(&mut r, d, 0.0, 1.0);
        let label = r.random_range(0..2);
        let eps = r.random_range(0.05..2.0);
        let xs = Tensor::new(vec![1, d], x.clone()).unwrap();
        let (adv, zero) = fast_grad_l2(&m, &xs, &[label], eps, false).unwrap();
        assert!(!zero[0]);
        let best = loss_at(&m, adv.row(0), label);
        let moved: f64 = adv.row(0).iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((moved - eps).abs() < 1e-12);
        for _ in 0..1000 {
            let g: Vec<f64> = (0..d).map(|_| rng_normal(&mut r)).collect();
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + eps * gi / n).collect();
            let l = loss_at(&m, &v, label);
            assert!(best >= l - 1e-12 * l.abs(), "case {case}: {l} > {best}");
        }
    }
}

fn rng_normal(r: &mut impl Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(r)
}

fn predicted(m: &LinearLogistic, x: &[f64]) -> usize {
    let xs = Tensor::new(vec![1, x.len()], x.to_vec()).unwrap();
    argmax(m.logits(&xs).unwrap().row(0))
}

/// Smallest number of disjoint pairs (at most two) that, set to 1, moves
/// the prediction to `target`; `None` if no such sequence exists.
fn exhaustive_pairs(m: &LinearLogistic, x: &[f64], target: usize) -> Option<usize> {
    let d = x.len();
    let set = |idx: &[usize]| {
        let mut v = x.to_vec();
        for &i in idx {
            v[i] = 1.0;
        }
        v
    };
    if predicted(m, x) == target {
        return Some(0);
    }
    let pairs: Vec<(usize, usize)> =
        (0..d).flat_map(|p| (p + 1..d).map(move |q| (p, q))).collect();
    if pairs.iter().any(|&(p, q)| predicted(m, &set(&[p, q])) == target) {
        return Some(1);
    }
    for &(p, q) in &pairs {
        for &(s, t) in &pairs {
            let idx = [p, q, s, t];
            let distinct = (0..4).all(|i| (i + 1..4).all(|j| idx[i] != idx[j]));
            if distinct && predicted(m, &set(&idx)) == target {
                return Some(2);
            }
        }
    }
    None
}

#[test]
fn jsma_matches_exhaustive_pair_search_on_a_tiny_model() {
    let mut r = rng(32);
    let mut outcomes = [0usize; 4];
    for case in 0..300 {
        let w = common::linear(&mut r, 6).w().clone();
        let b = r.random_range(-3.0..0.5);
        // class 1 is predicted at x = 0; aim for class 0
        let m = LinearLogistic::new(w, b).unwrap();
        let x = vec![0.0; 6];
        if predicted(&m, &x) == 0 {
            continue;
        }
        let out = jsma(&m, &x, 1, 0, 4.0 / 6.0).unwrap();
        let oracle = exhaustive_pairs(&m, &x, 0);
        assert_eq!(out.success, oracle.is_some(), "case {case}");
        if let Some(k) = oracle {
            assert_eq!(out.features_changed, 2 * k, "case {case}");
            outcomes[k] += 1;
        } else {
            outcomes[3] += 1;
        }
    }
    // every branch of the oracle was exercised
    assert!(outcomes[1] > 0 && outcomes[2] > 0 && outcomes[3] > 0, "{outcomes:?}");
}

#[test]
fn first_order_probability_bound_on_the_cnn() {
    let mut r = rng(33);
    for seed in 0..4 {
        let net = ConvNet::<f64>::glorot(seed);
        let xs = tensor(&mut r, &[8, 3072], 0.0, 1.0);
        let classes: Vec<usize> = (0..8).map(|_| r.random_range(0..10)).collect();
        let (p, g) = prob_input_grad(&net, &xs, &classes).unwrap();
        for eps in [1e-3, 5e-4, 1e-4] {
            let mut moved = xs.clone();
            for i in 0..8 {
                let gi = g.row(i);
                let n = gi.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (x, v) in moved.row_mut(i).iter_mut().zip(gi) {
                    *x -= eps * v / n;
                }
            }
            let z = net.logits(&moved).unwrap();
            for i in 0..8 {
                let n = g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let actual = softmax(z.row(i))[classes[i]];
                let predicted = p[i] - eps * n;
                assert!(
                    (actual - predicted).abs() <= 1e-4,
                    "seed {seed} eps {eps}: {actual} vs {predicted}"
                );
            }
        }
    }
}

#[test]
fn linear_attacks_never_lower_the_loss() {
    let mut r = rng(34);
    for _ in 0..200 {
        let d = r.random_range(1..=40);
        let m = common::linear(&mut r, d);
        let n = 4;
        let xs = tensor(&mut r, &[n, d], 0.0, 1.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        let eps = r.random_range(0.0..0.5);
        let clean = losses(&m, &xs, &labels, attack_loss()).unwrap();
        let a = fgsm(&m, &xs, &labels, eps, false).unwrap();
        let (b, _) = fast_grad_l2(&m, &xs, &labels, eps, false).unwrap();
        let c = pgd(&m, &xs, &labels, eps.max(1e-3), 5, eps.max(1e-3) / 4.0, true, 7).unwrap();
        for adv in [a, b] {
            let l = losses(&m, &adv, &labels, attack_loss()).unwrap();
            for (x, y) in l.iter().zip(&clean) {
                assert!(x >= y);
            }
        }
        // five steps of eps/4 carry every coordinate past x from any start
        let l = losses(&m, &c, &labels, attack_loss()).unwrap();
        for (x, y) in l.iter().zip(&clean) {
            assert!(x >= y);
        }
    }
}

#[test]
fn pgd_is_at_least_as_strong_as_fgsm_on_the_cnn() {
    let net = ConvNet::<f64>::glorot(5);
    let mut r = rng(35);
    let n = 64;
    let xs = tensor(&mut r, &[n, 3072], 0.0, 1.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let eps = 8.0 / 255.0;
    let f = fgsm(&net, &xs, &labels, eps, true).unwrap();
    let p = pgd(&net, &xs, &labels, eps, 20, 2.0 / 255.0, false, 0).unwrap();
    let lf = losses(&net, &f, &labels, attack_loss()).unwrap();
    let lp = losses(&net, &p, &labels, attack_loss()).unwrap();
    let wins = lp.iter().zip(&lf).filter(|(a, b)| a >= b).count();
    assert!(wins as f64 >= 0.95 * n as f64, "{wins} of {n}");
}

#[test]
fn clipped_attacks_stay_in_the_unit_box() {
    let net = ConvNet::<f64>::glorot(6);
    let mut r = rng(36);
    let xs = tensor(&mut r, &[6, 3072], 0.0, 1.0);
    let labels = vec![0, 1, 2, 3, 4, 5];
    for family in [
        AttackFamily::Fgsm,
        AttackFamily::FastGradL2,
        AttackFamily::ScaledClippedFgl2 { scale: 100.0 },
        AttackFamily::Pgd { steps: 3, step_size: 0.1, random_start: true },
        AttackFamily::PixelSwap { ratio: 0.3 },
    ] {
        let spec = AttackSpec::new(family, 0.5).with_seed(3);
        for res in run_attack(&net, &spec, &xs, &labels, None).unwrap() {
            assert!(res.x_adv.iter().all(|v| (0.0..=1.0).contains(v)), "{family:?}");
        }
    }
}

#[test]
fn fooling_success_at_zero_step_is_chance() {
    for seed in 0..3 {
        let net = ConvNet::<f64>::glorot(seed);
        let pts = fooling_asr_sweep(&net, &[0.0], 50, None, seed).unwrap();
        assert!((pts[0].asr - 0.1).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&pts[0].margin));
    }
}
