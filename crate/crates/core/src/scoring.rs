//! Per-round uncertainty scores of the unlabeled pool.

use alloc::vec::Vec;

use crate::density::{data_driven_eu, reverse_knn_arrows, ArrowCounts};
use crate::energy::{aleatoric_uncertainty, epistemic_uncertainty};
use crate::fusion::{fit_gmm, GmmConfig};
use crate::math::softplus;
use crate::nn::Mlp;
use crate::pool::Pool;
use crate::{Error, Matrix, Result};

/// Scores of every unlabeled example for one round.
///
/// `eu_key` and `au_key` are the ranking keys used by the sampler. When the
/// mixtures fit, `eu_key` is `log(fused_eu)` computed in log space and
/// `au_key` is the log-odds of the high-AU component; both order examples
/// exactly like the probabilities but do not saturate at 0 or 1. When a
/// mixture cannot be fitted the keys fall back to raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<usize>,
    pub eu_learning: Vec<f64>,
    pub eu_data: Vec<f64>,
    pub eu_learning_prob: Vec<f64>,
    pub eu_data_prob: Vec<f64>,
    pub fused_eu: Vec<f64>,
    pub au: Vec<f64>,
    pub au_prob: Vec<f64>,
    pub eu_key: Vec<f64>,
    pub au_key: Vec<f64>,
}

/// `(probability, log-odds)` of the high component, or `None` when the
/// scores carry no spread.
fn calibrate(scores: &[f64], cfg: &GmmConfig) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    match fit_gmm(scores, cfg) {
        Ok(fit) => Ok(Some((
            scores
                .iter()
                .map(|&x| fit.model.posterior_high(x))
                .collect(),
            scores.iter().map(|&x| fit.model.log_odds_high(x)).collect(),
        ))),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_len(ids: &[usize], v: &[f64]) -> Result<()> {
    if v.len() != ids.len() {
        return Err(Error::Shape {
            context: "score table column",
            expected: ids.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

impl ScoreTable {
    /// Calibrates raw scores with one mixture per score set and fuses the
    /// two epistemic probabilities.
    pub fn from_raw(
        ids: Vec<usize>,
        eu_learning: Vec<f64>,
        eu_data: Vec<f64>,
        au: Vec<f64>,
        gmm: &GmmConfig,
    ) -> Result<Self> {
        check_len(&ids, &eu_learning)?;
        check_len(&ids, &eu_data)?;
        check_len(&ids, &au)?;
        let n = ids.len();
        let ones = || alloc::vec![1.0; n];
        let learning = calibrate(&eu_learning, gmm)?;
        let data = calibrate(&eu_data, gmm)?;
        // log p = -softplus(-log_odds)
        let log_prob = |odds: &[f64]| odds.iter().map(|&o| -softplus(-o)).collect::<Vec<f64>>();
        let (eu_learning_prob, lp_learning) = match &learning {
            Some((p, o)) => (p.clone(), Some(log_prob(o))),
            None => (ones(), None),
        };
        let (eu_data_prob, lp_data) = match &data {
            Some((p, o)) => (p.clone(), Some(log_prob(o))),
            None => (ones(), None),
        };
        let fused_eu = crate::fusion::fuse_eu(&eu_learning_prob, &eu_data_prob)?;
        let eu_key = match (lp_learning, lp_data) {
            (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| x + y).collect(),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => eu_learning.clone(),
        };
        let (au_prob, au_key) = match calibrate(&au, gmm)? {
            Some((p, o)) => (p, o),
            None => (alloc::vec![0.5; n], au.clone()),
        };
        Ok(Self {
            ids,
            eu_learning,
            eu_data,
            eu_learning_prob,
            eu_data_prob,
            fused_eu,
            au,
            au_prob,
            eu_key,
            au_key,
        })
    }

    /// A table built straight from ranking keys. The keys double as the
    /// raw and probability columns.
    pub fn from_keys(ids: Vec<usize>, eu_key: Vec<f64>, au_key: Vec<f64>) -> Result<Self> {
        check_len(&ids, &eu_key)?;
        check_len(&ids, &au_key)?;
        Ok(Self {
            eu_learning: eu_key.clone(),
            eu_data: eu_key.clone(),
            eu_learning_prob: eu_key.clone(),
            eu_data_prob: eu_key.clone(),
            fused_eu: eu_key.clone(),
            au: au_key.clone(),
            au_prob: au_key.clone(),
            ids,
            eu_key,
            au_key,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Settings for [`score_pool`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    /// Arrows emitted per labeled example.
    pub k_neighbors: usize,
    pub smoothing: f64,
    pub gmm: GmmConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 250,
            smoothing: 1.0,
            gmm: GmmConfig::default(),
        }
    }
}

/// Learning-based epistemic score of each row from detector logits.
pub fn learning_eu(detector: &Mlp, inputs: &Matrix) -> Result<Vec<f64>> {
    let logits = detector.forward(inputs)?;
    logits
        .iter_rows()
        .map(|row| epistemic_uncertainty(row).map(|b| b.eu))
        .collect()
}

/// Aleatoric score of each row from classifier logits.
pub fn aleatoric(classifier: &Mlp, inputs: &Matrix) -> Result<Vec<f64>> {
    let logits = classifier.forward(inputs)?;
    logits.iter_rows().map(aleatoric_uncertainty).collect()
}

fn nonzero_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .filter(|&r| m.row(r).iter().any(|&v| v != 0.0))
        .collect()
}

/// Arrow counts in detector feature space between the labeled and
/// unlabeled partitions.
///
/// Rows whose features are all zero (dead rectifiers) have no direction;
/// labeled ones emit no arrows and unlabeled ones receive none. `K` is
/// capped at the number of usable unlabeled rows.
pub fn pool_arrows(detector: &Mlp, pool: &Pool, k: usize) -> Result<ArrowCounts> {
    let classes = pool.class_count() + 1;
    let (labeled_ids, labels) = pool.detector_training_data();
    let lf = detector.penultimate(&pool.features().select_rows(&labeled_ids))?;
    let uf = detector.penultimate(&pool.features().select_rows(pool.unlabeled()))?;
    let keep_l = nonzero_rows(&lf);
    let keep_u = nonzero_rows(&uf);
    let n_u = uf.rows();
    if keep_l.is_empty() || keep_u.is_empty() {
        let mut totals = alloc::vec![0usize; classes];
        for &y in &labels {
            totals[y] += 1;
        }
        return ArrowCounts::from_parts(classes, alloc::vec![0; n_u * classes], totals, 0);
    }
    let kept_labels: Vec<usize> = keep_l.iter().map(|&r| labels[r]).collect();
    let k = k.min(keep_u.len());
    let partial = reverse_knn_arrows(
        &lf.select_rows(&keep_l),
        &kept_labels,
        &uf.select_rows(&keep_u),
        k,
        classes,
    )?;
    if keep_u.len() == n_u {
        return Ok(partial);
    }
    let mut counts = alloc::vec![0u32; n_u * classes];
    for (pos, &r) in keep_u.iter().enumerate() {
        counts[r * classes..(r + 1) * classes].copy_from_slice(partial.row(pos));
    }
    ArrowCounts::from_parts(classes, counts, partial.totals().to_vec(), k)
}

/// Scores the whole unlabeled pool with a trained detector and classifier.
pub fn score_pool(
    detector: &Mlp,
    classifier: &Mlp,
    pool: &Pool,
    cfg: &ScoringConfig,
) -> Result<ScoreTable> {
    let ids = pool.unlabeled().to_vec();
    if ids.is_empty() {
        return Err(Error::Empty {
            what: "unlabeled pool",
        });
    }
    let inputs = pool.features().select_rows(&ids);
    let eu_learning = learning_eu(detector, &inputs)?;
    let arrows = pool_arrows(detector, pool, cfg.k_neighbors)?;
    let eu_data = data_driven_eu(&arrows, cfg.smoothing)?;
    let au = aleatoric(classifier, &inputs)?;
    ScoreTable::from_raw(ids, eu_learning, eu_data, au, &cfg.gmm)
}
