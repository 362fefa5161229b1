//! Baseline query strategies.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;

use crate::math::{log_sum_exp, softmax_into};
use crate::nn::Mlp;
use crate::pool::Pool;
use crate::sampler::{highest, lowest, QuerySet};
use crate::{seed, Error, Result};

/// Query strategies the harness knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Uniform draw from the unlabeled pool.
    Random,
    /// Highest classifier softmax entropy.
    Uncertainty,
    /// Lowest classifier softmax entropy.
    Certainty,
    /// Largest detector activation among the known classes.
    Mav,
    /// Energy-based two-stage sampling.
    Eaoa,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Uncertainty,
        Strategy::Certainty,
        Strategy::Mav,
        Strategy::Eaoa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Certainty => "certainty",
            Strategy::Mav => "mav",
            Strategy::Eaoa => "eaoa",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                field: "strategy",
                reason: unknown_strategy(s),
            })
    }
}

fn unknown_strategy(s: &str) -> String {
    let mut msg = String::from("unknown strategy `");
    msg.push_str(s);
    msg.push_str("`, expected one of random, uncertainty, certainty, mav, eaoa");
    msg
}

/// Shannon entropy (nats) of `softmax(logits)`.
pub fn entropy(logits: &[f64]) -> f64 {
    let mut p = alloc::vec![0.0; logits.len()];
    softmax_into(logits, &mut p);
    let lse = log_sum_exp(logits);
    // -Σ p log p with log p = f - lse
    -p.iter()
        .zip(logits)
        .map(|(&pi, &f)| pi * (f - lse))
        .sum::<f64>()
}

/// Picks `budget` unlabeled ids with a baseline strategy.
///
/// Uncertainty and certainty rank by classifier entropy, mav by the largest
/// known-class detector logit. Ties go to the lower id; random draws are
/// returned in ascending id order.
pub fn baseline_select(
    strategy: Strategy,
    pool: &Pool,
    detector: &Mlp,
    classifier: &Mlp,
    budget: usize,
    seed: u64,
) -> Result<QuerySet> {
    let ids = pool.unlabeled();
    if ids.is_empty() {
        return Err(Error::Empty {
            what: "unlabeled pool",
        });
    }
    let budget = budget.min(ids.len());
    let (picked, keys): (Vec<usize>, Vec<f64>) = match strategy {
        Strategy::Random => {
            let mut rng = seed::rng(seed);
            let mut picked = index::sample(&mut rng, ids.len(), budget).into_vec();
            picked.sort_unstable();
            (picked, Vec::new())
        }
        Strategy::Uncertainty | Strategy::Certainty => {
            let logits = classifier.forward(&pool.features().select_rows(ids))?;
            let keys: Vec<f64> = logits.iter_rows().map(entropy).collect();
            let picked = if strategy == Strategy::Uncertainty {
                highest(&keys, budget)
            } else {
                lowest(&keys, budget)
            };
            (picked, keys)
        }
        Strategy::Mav => {
            let logits = detector.forward(&pool.features().select_rows(ids))?;
            let known = pool.class_count();
            let keys: Vec<f64> = logits
                .iter_rows()
                .map(|row| {
                    row[..known]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            (highest(&keys, budget), keys)
        }
        Strategy::Eaoa => {
            return Err(Error::InvalidParameter {
                field: "strategy",
                reason: "eaoa is not a baseline strategy".to_string(),
            })
        }
    };
    Ok(QuerySet {
        indices: picked.iter().map(|&p| ids[p]).collect(),
        stage1_indices: ids.to_vec(),
        stage1_scores: keys.clone(),
        stage2_scores: picked
            .iter()
            .filter_map(|&p| keys.get(p).copied())
            .collect(),
    })
}
