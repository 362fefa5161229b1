//! Independent oracles: brute force, direct formulas, extended precision.

mod common;

use common::{random_matrix, random_vec, reference_forward, rng, unpack};
use eaoa_core::density::{arrow_posterior, data_driven_eu, reverse_knn_arrows, ArrowCounts};
use eaoa_core::energy::{aleatoric_uncertainty, epistemic_uncertainty, free_energy};
use eaoa_core::fusion::{fit_gmm, fit_gmm_from, to_probabilistic, GmmConfig};
use eaoa_core::nn::Mlp;
use eaoa_core::Matrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Arrow counts by computing every cosine distance and fully sorting.
fn brute_force_arrows(
    labeled: &Matrix,
    labels: &[usize],
    unlabeled: &Matrix,
    k: usize,
    classes: usize,
) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; classes]; unlabeled.rows()];
    for (a, &y) in labeled.iter_rows().zip(labels) {
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut d: Vec<(f64, usize)> = unlabeled
            .iter_rows()
            .enumerate()
            .map(|(j, b)| {
                let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = a.iter().zip(b).map(|(x, z)| x * z).sum();
                (1.0 - dot / (na * nb), j)
            })
            .collect();
        d.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(p.1.cmp(&q.1)));
        for &(_, j) in &d[..k] {
            counts[j][y] += 1;
        }
    }
    counts
}

#[test]
fn reverse_knn_equals_brute_force() {
    let mut r = rng(10);
    for _ in 0..50 {
        let n_l = r.random_range(1..=200);
        let n_u = r.random_range(1..=200);
        let k = r.random_range(1..=50usize.min(n_u));
        let dim = r.random_range(2..10);
        let classes = r.random_range(2..8);
        let labeled = random_matrix(&mut r, n_l, dim, 1.0);
        let unlabeled = random_matrix(&mut r, n_u, dim, 1.0);
        let labels: Vec<usize> = (0..n_l).map(|_| r.random_range(0..classes)).collect();
        let fast = reverse_knn_arrows(&labeled, &labels, &unlabeled, k, classes).unwrap();
        let slow = brute_force_arrows(&labeled, &labels, &unlabeled, k, classes);
        for (i, row) in slow.iter().enumerate() {
            assert_eq!(fast.row(i), row.as_slice());
        }
        for y in 0..classes {
            assert_eq!(fast.received_from(y), (k * fast.totals()[y]) as u64);
        }
    }
}

#[test]
fn bayes_route_equals_arrow_fractions() {
    let mut r = rng(11);
    for _ in 0..200 {
        let classes = r.random_range(2..10);
        let totals: Vec<usize> = (0..classes).map(|_| r.random_range(1..40)).collect();
        let row: Vec<u32> = (0..classes).map(|_| r.random_range(0..30)).collect();
        if row.iter().all(|&c| c == 0) {
            continue;
        }
        let n: usize = totals.iter().sum();
        // p(x|y) = arrows_y / |X^y|, p(y) = |X^y| / N, normalised over classes.
        let joint: Vec<f64> = (0..classes)
            .map(|y| (row[y] as f64 / totals[y] as f64) * (totals[y] as f64 / n as f64))
            .collect();
        let z: f64 = joint.iter().sum();
        let fractions = arrow_posterior(&row);
        for y in 0..classes {
            assert!((joint[y] / z - fractions[y]).abs() < 1e-12);
        }
    }
}

#[test]
fn data_eu_direct_evaluation() {
    let row = vec![3u32, 0, 5, 7];
    let arrows = ArrowCounts::from_parts(4, row, vec![2, 2, 2, 2], 1).unwrap();
    let eu = data_driven_eu(&arrows, 1.0).unwrap()[0];
    let expected = -(4.0f64 + 1.0 + 6.0).ln() + (1.0f64 + 8.0).ln();
    assert!((eu - expected).abs() < 1e-12);
}

#[test]
fn energies_against_extended_precision() {
    // Reference values from 50-digit arithmetic.
    let fe = free_energy(&[0.7, -1.3, 2.9, 0.05, -4.2, 1.1]).unwrap();
    assert!((fe - -3.199_932_021_414_518_9).abs() < 1e-14);

    let b = epistemic_uncertainty(&[1.5, -0.25, 3.75, 0.5, -2.0, 2.25]).unwrap();
    assert!((b.e_known - -3.903_297_617_855_190_9).abs() < 1e-14);
    assert!((b.e_unknown - -2.350_206_558_916_747_2).abs() < 1e-14);
    assert!((b.eu - -1.553_091_058_938_443_7).abs() < 1e-14);

    let au = aleatoric_uncertainty(&[0.3, 2.2, -1.0, 2.1]).unwrap();
    assert!((au - -0.648_725_859_797_889_0).abs() < 1e-14);
}

/// Neumaier-compensated sum of `exp(f)` without any shift.
fn compensated_free_energy(v: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &x in v {
        let t = x.exp();
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    -(sum + c).ln()
}

#[test]
fn free_energy_matches_compensated_summation() {
    let mut r = rng(12);
    for _ in 0..1000 {
        let n = r.random_range(1..50);
        let v = random_vec(&mut r, n, 30.0);
        let fe = free_energy(&v).unwrap();
        assert!((fe - compensated_free_energy(&v)).abs() < 1e-12 * fe.abs().max(1.0));
    }
}

#[test]
fn forward_matches_reference_algebra() {
    let mut r = rng(13);
    for seed in 0..20 {
        let model = Mlp::new(&[4, 6, 3], seed).unwrap();
        let (w, b) = unpack(&model);
        let x = random_matrix(&mut r, 5, 4, 2.0);
        let out = model.forward(&x).unwrap();
        for i in 0..5 {
            let want = reference_forward(&w, &b, x.row(i));
            for (g, e) in out.row(i).iter().zip(&want) {
                assert!((g - e).abs() < 1e-12);
            }
        }
        let feats = model.penultimate(&x).unwrap();
        for i in 0..5 {
            let want = reference_forward(&w[..1], &b[..1], x.row(i));
            let relu: Vec<f64> = want.iter().map(|v| v.max(0.0)).collect();
            assert_eq!(feats.row(i), relu.as_slice());
        }
    }
}

#[test]
fn gmm_recovers_two_separated_gaussians() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let lo = Normal::new(-5.0, 1.0).unwrap();
        let hi = Normal::new(5.0, 1.0).unwrap();
        let mut scores: Vec<f64> = (0..200).map(|_| lo.sample(&mut r)).collect();
        scores.extend((0..200).map(|_| hi.sample(&mut r)));
        let fit = fit_gmm(&scores, &GmmConfig::default()).unwrap();
        let m = fit.model;
        let (l, h) = (m.low_component, m.high_component());
        assert!((m.means[l] + 5.0).abs() < 0.5, "{m:?}");
        assert!((m.means[h] - 5.0).abs() < 0.5, "{m:?}");
        assert!((m.weights[l] - 0.5).abs() < 0.1);
        assert!((m.weights[0] + m.weights[1] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn posterior_matches_direct_bayes_rule() {
    let mut r = rng(14);
    let scores = random_vec(&mut r, 300, 4.0);
    let fit = fit_gmm(&scores, &GmmConfig::default()).unwrap();
    let m = fit.model;
    let pdf = |x: f64, k: usize| {
        let v = m.variances[k];
        (-(x - m.means[k]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    };
    let probs = to_probabilistic(&m, &scores);
    let h = m.high_component();
    for (&x, &p) in scores.iter().zip(&probs) {
        let num = m.weights[h] * pdf(x, h);
        let den = num + m.weights[1 - h] * pdf(x, 1 - h);
        assert!((p - num / den).abs() < 1e-12);
    }
}

#[test]
fn em_log_likelihood_never_decreases() {
    let mut r = rng(15);
    for _ in 0..100 {
        let n = r.random_range(4..300);
        let shape = r.random_range(0..3);
        let scores: Vec<f64> = (0..n)
            .map(|_| match shape {
                0 => r.random_range(-3.0..3.0),
                1 => r.random_range(0.0f64..1.0).powi(4) * 20.0,
                _ => (if r.random_bool(0.3) { 4.0 } else { -1.0 }) + r.random_range(-0.5..0.5),
            })
            .collect();
        let fit = fit_gmm(&scores, &GmmConfig::default()).unwrap();
        for pair in fit.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "{:?}", pair);
        }
        let converged = *fit.log_likelihood.last().unwrap();
        assert!(
            (fit.model.log_likelihood(&scores) - converged).abs() < 1e-9 * converged.abs().max(1.0)
        );
        // Fixed point: one more run from the converged model barely moves it.
        let cfg = GmmConfig::default();
        let again = fit_gmm_from(fit.model, &scores, &cfg).unwrap();
        let moved = again.log_likelihood.last().unwrap() - converged;
        if fit.log_likelihood.len() <= cfg.max_iters {
            assert!(moved.abs() < cfg.tol, "moved {moved}");
        }
    }
}
