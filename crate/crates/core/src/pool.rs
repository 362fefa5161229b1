//! Open-set datasets, pool bookkeeping and the simulated oracle.
//!
//! A [`Dataset`] holds raw features and original class ids. A [`Pool`]
//! splits it into known and unknown classes and into partitions:
//! labeled-known, labeled-unknown, unlabeled, a known-only test split and a
//! held-out unknown split used to evaluate the detector. Ground truth of the
//! unlabeled partition is private and only revealed through
//! [`Pool::oracle_label`].

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Normal};

use crate::math::floor;
use crate::{seed, Error, Matrix, Result};

/// Features with their original class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Shape {
                context: "dataset labels",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if let Some(row) = features.first_non_finite_row() {
            return Err(Error::NonFinite {
                what: "features",
                row,
            });
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Isotropic Gaussian class clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub total_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of the class centres around the origin.
    pub center_spread: f64,
    /// Standard deviation of examples around their class centre.
    pub within_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            total_classes: 10,
            per_class: 200,
            dim: 64,
            center_spread: 0.4,
            within_std: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if self.total_classes < 2 {
            return bad("total_classes", "need at least 2 classes");
        }
        if self.per_class == 0 {
            return bad("per_class", "must be positive");
        }
        if self.dim == 0 {
            return bad("dim", "must be positive");
        }
        if !(self.center_spread >= 0.0 && self.center_spread.is_finite()) {
            return bad("center_spread", "must be non-negative");
        }
        if !(self.within_std > 0.0 && self.within_std.is_finite()) {
            return bad("within_std", "must be positive");
        }
        Ok(())
    }
}

/// Draws a class-major synthetic dataset. A zero spread puts every centre
/// at the origin.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let centers: Vec<Vec<f64>> = (0..spec.total_classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| spec.center_spread * unit.sample(&mut rng))
                .collect()
        })
        .collect();
    let n = spec.total_classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class {
            data.extend(
                center
                    .iter()
                    .map(|m| m + spec.within_std * unit.sample(&mut rng)),
            );
            labels.push(c);
        }
    }
    Dataset::new(
        Matrix::from_vec(n, spec.dim, data)?,
        labels,
        spec.total_classes,
    )
}

/// How a dataset is turned into an open-set pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    /// Fraction of classes treated as known.
    pub mismatch_ratio: f64,
    /// Fraction of each known class's training examples labeled up front.
    pub initial_fraction: f64,
    /// Fraction of every class held out for evaluation.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mismatch_ratio: 0.4,
            initial_fraction: 0.01,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SplitConfig {
    /// Number of known classes out of `total`.
    pub fn known_count(&self, total: usize) -> usize {
        floor(self.mismatch_ratio * total as f64 + 1e-9) as usize
    }

    pub fn validate(&self, total_classes: usize) -> Result<()> {
        let bad =
            |field, reason: alloc::string::String| Err(Error::InvalidParameter { field, reason });
        if !(self.mismatch_ratio > 0.0 && self.mismatch_ratio <= 1.0) {
            return bad("mismatch_ratio", "must lie in (0, 1]".to_string());
        }
        if self.known_count(total_classes) < 2 {
            return bad(
                "mismatch_ratio",
                format!("yields fewer than 2 known classes out of {total_classes}"),
            );
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction <= 1.0) {
            return bad("initial_fraction", "must lie in (0, 1]".to_string());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction", "must lie in [0, 1)".to_string());
        }
        Ok(())
    }
}

/// Synthetic data plus the split applied to it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenSetSpec {
    pub synthetic: SyntheticSpec,
    pub split: SplitConfig,
}

pub fn generate_synthetic(spec: &OpenSetSpec) -> Result<Pool> {
    Pool::from_dataset(synthetic_dataset(&spec.synthetic)?, &spec.split)
}

/// What the oracle revealed for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFeedback {
    /// Revealed labels in query order; `C` marks unknown.
    pub labels: Vec<usize>,
    pub known: usize,
    pub unknown: usize,
    /// Fraction of the query that belonged to known classes.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    features: Matrix,
    known_classes: Vec<usize>,
    total_classes: usize,
    truth: Vec<usize>,
    labeled_known: Vec<(usize, usize)>,
    labeled_unknown: Vec<usize>,
    unlabeled: Vec<usize>,
    test: Vec<(usize, usize)>,
    holdout_unknown: Vec<usize>,
}

impl Pool {
    /// Splits a dataset. Known classes are a seeded draw; every class is
    /// shuffled and its first `test_fraction` goes to evaluation; each
    /// known class then labels `max(1, ceil(initial_fraction * n))` of its
    /// remaining examples.
    pub fn from_dataset(dataset: Dataset, split: &SplitConfig) -> Result<Self> {
        split.validate(dataset.classes)?;
        let total = dataset.classes;
        let mut rng = seed::rng(split.seed);
        let mut known_classes = index::sample(&mut rng, total, split.known_count(total)).into_vec();
        known_classes.sort_unstable();
        let c = known_classes.len();
        let mut mapping = vec![c; total];
        for (k, &orig) in known_classes.iter().enumerate() {
            mapping[orig] = k;
        }
        let truth: Vec<usize> = dataset.labels.iter().map(|&l| mapping[l]).collect();

        let mut by_class = vec![Vec::new(); total];
        for (id, &l) in dataset.labels.iter().enumerate() {
            by_class[l].push(id);
        }
        let mut labeled_known = Vec::new();
        let mut unlabeled = Vec::new();
        let mut test = Vec::new();
        let mut holdout_unknown = Vec::new();
        for (orig, ids) in by_class.iter_mut().enumerate() {
            ids.shuffle(&mut rng);
            let n_test = libm::round(split.test_fraction * ids.len() as f64) as usize;
            let (held, rest) = ids.split_at(n_test.min(ids.len()));
            let label = mapping[orig];
            if label < c {
                test.extend(held.iter().map(|&id| (id, label)));
                let n_init = (libm::ceil(split.initial_fraction * rest.len() as f64) as usize)
                    .max(1)
                    .min(rest.len());
                labeled_known.extend(rest[..n_init].iter().map(|&id| (id, label)));
                unlabeled.extend_from_slice(&rest[n_init..]);
            } else {
                holdout_unknown.extend_from_slice(held);
                unlabeled.extend_from_slice(rest);
            }
        }
        labeled_known.sort_unstable();
        unlabeled.sort_unstable();
        test.sort_unstable();
        holdout_unknown.sort_unstable();
        Ok(Self {
            features: dataset.features,
            known_classes,
            total_classes: total,
            truth,
            labeled_known,
            labeled_unknown: Vec::new(),
            unlabeled,
            test,
            holdout_unknown,
        })
    }

    /// Features of every example, indexed by example id.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of known classes `C`.
    pub fn class_count(&self) -> usize {
        self.known_classes.len()
    }

    /// Original ids of the known classes; position is the known label.
    pub fn known_classes(&self) -> &[usize] {
        &self.known_classes
    }

    pub fn total_classes(&self) -> usize {
        self.total_classes
    }

    pub fn total_examples(&self) -> usize {
        self.features.rows()
    }

    /// `(id, label)` pairs in labeling order.
    pub fn labeled_known(&self) -> &[(usize, usize)] {
        &self.labeled_known
    }

    pub fn labeled_unknown(&self) -> &[usize] {
        &self.labeled_unknown
    }

    /// Unlabeled ids in ascending order.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// Known-class evaluation examples, `(id, label)`.
    pub fn test(&self) -> &[(usize, usize)] {
        &self.test
    }

    pub fn holdout_unknown(&self) -> &[usize] {
        &self.holdout_unknown
    }

    /// Known-class training data for the target classifier.
    pub fn classifier_training_data(&self) -> (Matrix, Vec<usize>) {
        let ids: Vec<usize> = self.labeled_known.iter().map(|p| p.0).collect();
        let labels = self.labeled_known.iter().map(|p| p.1).collect();
        (self.features.select_rows(&ids), labels)
    }

    /// All labeled data with unknowns collapsed to class `C`: known first,
    /// then unknown.
    pub fn detector_training_data(&self) -> (Vec<usize>, Vec<usize>) {
        let c = self.class_count();
        let mut ids: Vec<usize> = self.labeled_known.iter().map(|p| p.0).collect();
        let mut labels: Vec<usize> = self.labeled_known.iter().map(|p| p.1).collect();
        ids.extend_from_slice(&self.labeled_unknown);
        labels.extend(core::iter::repeat_n(c, self.labeled_unknown.len()));
        (ids, labels)
    }

    pub fn test_data(&self) -> (Matrix, Vec<usize>) {
        let ids: Vec<usize> = self.test.iter().map(|p| p.0).collect();
        (
            self.features.select_rows(&ids),
            self.test.iter().map(|p| p.1).collect(),
        )
    }

    /// Mixed evaluation split for the detector: the test split plus the
    /// held-out unknowns labeled `C`.
    pub fn detector_eval_data(&self) -> (Matrix, Vec<usize>) {
        let c = self.class_count();
        let mut ids: Vec<usize> = self.test.iter().map(|p| p.0).collect();
        let mut labels: Vec<usize> = self.test.iter().map(|p| p.1).collect();
        ids.extend_from_slice(&self.holdout_unknown);
        labels.extend(core::iter::repeat_n(c, self.holdout_unknown.len()));
        (self.features.select_rows(&ids), labels)
    }

    /// Reveals the labels of unlabeled examples and moves them into the
    /// labeled partitions. Nothing changes if any id is invalid.
    pub fn oracle_label(&mut self, ids: &[usize]) -> Result<OracleFeedback> {
        let mut seen = Vec::with_capacity(ids.len());
        for &id in ids {
            if self.unlabeled.binary_search(&id).is_err() || seen.contains(&id) {
                return Err(Error::NotUnlabeled(id));
            }
            seen.push(id);
        }
        let c = self.class_count();
        let mut labels = Vec::with_capacity(ids.len());
        let mut known = 0;
        for &id in ids {
            let label = self.truth[id];
            if label < c {
                known += 1;
                self.labeled_known.push((id, label));
            } else {
                self.labeled_unknown.push(id);
            }
            labels.push(label);
        }
        self.unlabeled.retain(|id| !ids.contains(id));
        let precision = if ids.is_empty() {
            0.0
        } else {
            known as f64 / ids.len() as f64
        };
        Ok(OracleFeedback {
            labels,
            known,
            unknown: ids.len() - known,
            precision,
        })
    }
}
