//! Data-driven epistemic uncertainty from reverse k-nearest-neighbour
//! arrows.
//!
//! Every labeled example sends one arrow to each of its `K` nearest
//! unlabeled examples under cosine distance. The number of arrows an
//! unlabeled example receives from class `y` approximates its density
//! under that class, which gives a data-driven energy per class.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math::{log, sqrt};
use crate::nn::Mlp;
use crate::{Error, Matrix, Result};

/// Detector features for a batch: post-rectifier activations of the last
/// hidden layer.
pub fn extract_features(model: &Mlp, batch: &Matrix) -> Result<Matrix> {
    model.penultimate(batch)
}

/// Arrows received by each unlabeled example, per labeled class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowCounts {
    classes: usize,
    counts: Vec<u32>,
    totals: Vec<usize>,
    k: usize,
}

impl ArrowCounts {
    /// Assembles counts directly, e.g. from an external computation.
    pub fn from_parts(
        classes: usize,
        counts: Vec<u32>,
        totals: Vec<usize>,
        k: usize,
    ) -> Result<Self> {
        if totals.len() != classes {
            return Err(Error::Shape {
                context: "class totals",
                expected: classes,
                actual: totals.len(),
            });
        }
        if classes == 0 || !counts.len().is_multiple_of(classes) {
            return Err(Error::Shape {
                context: "arrow counts",
                expected: classes,
                actual: counts.len(),
            });
        }
        Ok(Self {
            classes,
            counts,
            totals,
            k,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Arrows received by unlabeled example `i`, one entry per class.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.classes..(i + 1) * self.classes]
    }

    /// Number of labeled examples per class.
    pub fn totals(&self) -> &[usize] {
        &self.totals
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Arrows received from class `y`, summed over the unlabeled pool.
    pub fn received_from(&self, y: usize) -> u64 {
        (0..self.len()).map(|i| u64::from(self.row(i)[y])).sum()
    }
}

fn normalized(features: &Matrix, set: &'static str) -> Result<Matrix> {
    let mut out = features.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: set, row: r });
        }
        let norm = sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::ZeroNormFeature { set, row: r });
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Exact reverse k-NN arrow counting under cosine distance.
///
/// Features are L2-normalised first; distance ties go to the lower
/// unlabeled index. `classes` is the number of label values, `C + 1` for
/// the detector.
pub fn reverse_knn_arrows(
    labeled: &Matrix,
    labels: &[usize],
    unlabeled: &Matrix,
    k: usize,
    classes: usize,
) -> Result<ArrowCounts> {
    if labels.len() != labeled.rows() {
        return Err(Error::Shape {
            context: "labeled labels",
            expected: labeled.rows(),
            actual: labels.len(),
        });
    }
    if labeled.cols() != unlabeled.cols() {
        return Err(Error::Shape {
            context: "feature dimension",
            expected: labeled.cols(),
            actual: unlabeled.cols(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter {
            field: "K",
            reason: "must be positive".into(),
        });
    }
    if k > unlabeled.rows() {
        return Err(Error::TooManyNeighbors {
            k,
            available: unlabeled.rows(),
        });
    }
    let mut totals = vec![0usize; classes];
    for &y in labels {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        totals[y] += 1;
    }
    let labeled = normalized(labeled, "labeled")?;
    let unlabeled = normalized(unlabeled, "unlabeled")?;

    let n_u = unlabeled.rows();
    let mut counts = vec![0u32; n_u * classes];
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(n_u);
    for (row, &y) in labeled.iter_rows().zip(labels) {
        ranked.clear();
        ranked.extend(unlabeled.iter_rows().enumerate().map(|(j, u)| {
            let cos: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
            (1.0 - cos, j)
        }));
        if k < n_u {
            ranked.select_nth_unstable_by(k - 1, by_distance_then_index);
        }
        for &(_, j) in &ranked[..k] {
            counts[j * classes + y] += 1;
        }
    }
    Ok(ArrowCounts {
        classes,
        counts,
        totals,
        k,
    })
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Data-driven epistemic score of every unlabeled example.
///
/// With smoothed counts `n_y = arrows_y + smoothing`, the class energy is
/// `-log n_y`, and the score mirrors the detector's:
/// `-log Σ_{c<C} n_c + log(1 + n_C)`.
pub fn data_driven_eu(arrows: &ArrowCounts, smoothing: f64) -> Result<Vec<f64>> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "smoothing",
            reason: "must be non-negative".into(),
        });
    }
    if arrows.classes() < 2 {
        return Err(Error::Shape {
            context: "arrow classes (need C + 1 >= 2)",
            expected: 2,
            actual: arrows.classes(),
        });
    }
    let unknown = arrows.classes() - 1;
    (0..arrows.len())
        .map(|i| {
            let row = arrows.row(i);
            if smoothing == 0.0 {
                if let Some(class) = row.iter().position(|&c| c == 0) {
                    return Err(Error::ZeroCount { row: i, class });
                }
            }
            let known: f64 = row[..unknown]
                .iter()
                .map(|&c| f64::from(c) + smoothing)
                .sum();
            let unk = f64::from(row[unknown]) + smoothing;
            Ok(-log(known) + libm::log1p(unk))
        })
        .collect()
}

/// Class distribution of one unlabeled example as normalised arrow
/// fractions. All-zero rows give a uniform distribution.
pub fn arrow_posterior(row: &[u32]) -> Vec<f64> {
    let total: u64 = row.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return vec![1.0 / row.len() as f64; row.len()];
    }
    row.iter().map(|&c| f64::from(c) / total as f64).collect()
}
