//! Target-driven two-stage sampling.
//!
//! Stage one keeps the `floor(k * b)` examples with the lowest fused
//! epistemic score; stage two queries the `b` candidates with the highest
//! aleatoric score. After the oracle answers, `k` moves by `±a` whenever the
//! realised query precision misses the target by more than `z`.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::math::floor;
use crate::scoring::ScoreTable;
use crate::{Error, Result};

/// Hyper-parameters of the adaptive candidate multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Initial multiplier `k_1`.
    pub initial_k: f64,
    /// Target query precision `tP`.
    pub target_precision: f64,
    /// Step `a` applied to `k`.
    pub amplitude: f64,
    /// Dead band `z` around the target.
    pub threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            initial_k: 5.0,
            target_precision: 0.6,
            amplitude: 1.0,
            threshold: 0.05,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.target_precision > 0.0 && self.target_precision < 1.0) {
            return bad("tP", "must lie in (0, 1)");
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad("a", "must be positive");
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return bad("z", "must be non-negative");
        }
        if !(self.initial_k >= 1.0 && self.initial_k.is_finite()) {
            return bad("k1", "must be at least 1");
        }
        Ok(())
    }
}

/// One round of the `k` history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KRecord {
    pub round: usize,
    /// Multiplier used for the round's selection.
    pub k: f64,
    pub realized_precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub k: f64,
    pub target_precision: f64,
    pub amplitude: f64,
    pub threshold: f64,
    pub history: Vec<KRecord>,
}

impl SamplerState {
    pub fn new(cfg: &SamplerConfig) -> Self {
        Self {
            k: cfg.initial_k.max(1.0),
            target_precision: cfg.target_precision,
            amplitude: cfg.amplitude,
            threshold: cfg.threshold,
            history: Vec::new(),
        }
    }

    /// Adjusts `k` from the realised precision of the round just queried.
    pub fn update_k(&mut self, realized_precision: f64) {
        let used = self.k;
        if realized_precision - self.target_precision > self.threshold {
            self.k += self.amplitude;
        } else if self.target_precision - realized_precision > self.threshold {
            self.k -= self.amplitude;
        }
        self.k = self.k.max(1.0);
        self.history.push(KRecord {
            round: self.history.len() + 1,
            k: used,
            realized_precision,
        });
    }

    /// Stage-one size `floor(k * b)` clamped to `[b, pool]`.
    pub fn candidate_size(&self, budget: usize, pool: usize) -> usize {
        let raw = floor(self.k * budget as f64);
        let raw = if raw.is_finite() && raw > 0.0 {
            raw as usize
        } else {
            0
        };
        raw.max(budget).min(pool)
    }
}

/// The outcome of a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    /// Example ids to send to the oracle.
    pub indices: Vec<usize>,
    /// Ids that survived the first stage.
    pub stage1_indices: Vec<usize>,
    /// Stage-one ranking keys of `stage1_indices`.
    pub stage1_scores: Vec<f64>,
    /// Stage-two ranking keys of `indices`.
    pub stage2_scores: Vec<f64>,
}

/// Positions of the `n` smallest keys, ascending; ties go to the lower
/// position.
pub fn lowest(keys: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Positions of the `n` largest keys, descending; ties go to the lower
/// position.
pub fn highest(keys: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Two-stage selection over a round's score table.
pub fn select(scores: &ScoreTable, state: &SamplerState, budget: usize) -> Result<QuerySet> {
    let pool = scores.len();
    if pool == 0 {
        return Err(Error::Empty {
            what: "unlabeled pool",
        });
    }
    if budget == 0 {
        return Err(Error::InvalidParameter {
            field: "budget",
            reason: "must be positive".to_string(),
        });
    }
    let budget = budget.min(pool);
    let candidates = lowest(&scores.eu_key, state.candidate_size(budget, pool));
    let au: Vec<f64> = candidates.iter().map(|&p| scores.au_key[p]).collect();
    let chosen = highest(&au, budget);
    Ok(QuerySet {
        indices: chosen.iter().map(|&c| scores.ids[candidates[c]]).collect(),
        stage2_scores: chosen.iter().map(|&c| au[c]).collect(),
        stage1_scores: candidates.iter().map(|&p| scores.eu_key[p]).collect(),
        stage1_indices: candidates.iter().map(|&p| scores.ids[p]).collect(),
    })
}
