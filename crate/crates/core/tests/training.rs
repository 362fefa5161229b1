mod common;

use eaoa_core::energy::{epistemic_uncertainty, MarginConfig};
use eaoa_core::nn::{accuracy, train_epochs, SgdConfig};
use eaoa_core::pool::{generate_synthetic, OpenSetSpec, Pool, SplitConfig, SyntheticSpec};
use eaoa_core::training::{train_classifier, train_detector, CrossEntropy, ModelTemplate};
use eaoa_core::Matrix;
use rand::seq::index;
use rand_distr::{Distribution, Normal};

fn blobs(seed: u64, per_class: usize) -> (Matrix, Vec<usize>) {
    let mut rng = common::rng(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (label, center) in [(0usize, [-3.0, -3.0]), (1, [3.0, 3.0])] {
        for _ in 0..per_class {
            data.extend(center.iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(label);
        }
    }
    (Matrix::from_vec(labels.len(), 2, data).unwrap(), labels)
}

fn small_pool(seed: u64) -> Pool {
    generate_synthetic(&OpenSetSpec {
        synthetic: SyntheticSpec {
            total_classes: 6,
            per_class: 60,
            dim: 8,
            center_spread: 2.0,
            within_std: 1.0,
            seed,
        },
        split: SplitConfig {
            mismatch_ratio: 0.5,
            initial_fraction: 0.2,
            test_fraction: 0.2,
            seed,
        },
    })
    .unwrap()
}

/// Labels a seeded random draw from the unlabeled pool.
fn label_random(pool: &mut Pool, n: usize, seed: u64) {
    let ids = pool.unlabeled().to_vec();
    let picks: Vec<usize> = index::sample(&mut common::rng(seed), ids.len(), n)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    pool.oracle_label(&picks).unwrap();
}

fn quick_sgd() -> SgdConfig {
    SgdConfig {
        epochs: 30,
        batch_size: 32,
        lr_decay_every: 20,
        ..SgdConfig::default()
    }
}

#[test]
fn separable_blobs_fit_in_fifty_epochs() {
    let (x, y) = blobs(3, 50);
    let template = ModelTemplate { hidden: vec![16] };
    let model = template.instantiate(2, 2, 11).unwrap();
    let cfg = SgdConfig {
        epochs: 50,
        batch_size: 16,
        ..SgdConfig::default()
    };
    let out = train_epochs(model, &x, &y, &CrossEntropy, &cfg, 5).unwrap();
    assert_eq!(accuracy(&out.model, &x, &y).unwrap(), 1.0);
    assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
}

#[test]
fn training_is_deterministic() {
    let mut pool = small_pool(1);
    label_random(&mut pool, 40, 2);
    let t = ModelTemplate::default();
    let a = train_detector(&pool, &t, &quick_sgd(), &MarginConfig::default(), 9).unwrap();
    let b = train_detector(&pool, &t, &quick_sgd(), &MarginConfig::default(), 9).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_trace, b.loss_trace);
    let c = train_detector(&pool, &t, &quick_sgd(), &MarginConfig::default(), 10).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn classifier_ignores_unknown_labels() {
    let pool = small_pool(4);
    let t = ModelTemplate::default();
    let before = train_classifier(&pool, &t, &quick_sgd(), 3).unwrap();

    // Label only unknown examples; the classifier's inputs are unchanged.
    let mut with_unknowns = pool.clone();
    let (eval_x, eval_y) = pool.detector_eval_data();
    assert!(eval_x.rows() > 0 && eval_y.contains(&pool.class_count()));
    let unknown_ids: Vec<usize> = {
        let mut probe = pool.clone();
        let ids = probe.unlabeled().to_vec();
        let fb = probe.oracle_label(&ids).unwrap();
        ids.iter()
            .zip(&fb.labels)
            .filter(|(_, &l)| l == pool.class_count())
            .map(|(&id, _)| id)
            .take(20)
            .collect()
    };
    let fb = with_unknowns.oracle_label(&unknown_ids).unwrap();
    assert_eq!(fb.unknown, 20);
    let after = train_classifier(&with_unknowns, &t, &quick_sgd(), 3).unwrap();
    assert_eq!(before.model.parameters(), after.model.parameters());

    let det_before = train_detector(&pool, &t, &quick_sgd(), &MarginConfig::default(), 3).unwrap();
    let det_after = train_detector(
        &with_unknowns,
        &t,
        &quick_sgd(),
        &MarginConfig::default(),
        3,
    )
    .unwrap();
    assert_ne!(det_before.model, det_after.model);
}

#[test]
fn energy_weight_changes_the_detector() {
    let mut pool = small_pool(5);
    label_random(&mut pool, 40, 6);
    let t = ModelTemplate::default();
    let with = train_detector(&pool, &t, &quick_sgd(), &MarginConfig::default(), 1).unwrap();
    let without = MarginConfig {
        lambda_e: 0.0,
        ..MarginConfig::default()
    };
    let plain = train_detector(&pool, &t, &quick_sgd(), &without, 1).unwrap();
    assert_ne!(with.model.parameters(), plain.model.parameters());
}

#[test]
fn detector_trains_without_labeled_unknowns() {
    let pool = small_pool(7);
    assert!(pool.labeled_unknown().is_empty());
    let out = train_detector(
        &pool,
        &ModelTemplate::default(),
        &quick_sgd(),
        &MarginConfig::default(),
        2,
    )
    .unwrap();
    assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    assert_eq!(out.model.output_dim(), pool.class_count() + 1);
}

#[test]
fn energy_separates_known_from_unknown() {
    for seed in 0..3 {
        let mut pool = small_pool(20 + seed);
        label_random(&mut pool, 80, seed);
        assert!(!pool.labeled_unknown().is_empty());
        let sgd = SgdConfig {
            epochs: 60,
            batch_size: 32,
            ..SgdConfig::default()
        };
        let det = train_detector(
            &pool,
            &ModelTemplate::default(),
            &sgd,
            &MarginConfig::default(),
            seed,
        )
        .unwrap();
        let mean_e = |ids: &[usize]| {
            let logits = det
                .model
                .forward(&pool.features().select_rows(ids))
                .unwrap();
            logits
                .iter_rows()
                .map(|r| epistemic_uncertainty(r).unwrap().e_known)
                .sum::<f64>()
                / ids.len() as f64
        };
        let known: Vec<usize> = pool.labeled_known().iter().map(|p| p.0).collect();
        let (k, u) = (mean_e(&known), mean_e(pool.labeled_unknown()));
        assert!(k < u, "seed {seed}: known {k} vs unknown {u}");
    }
}
