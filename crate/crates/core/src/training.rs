//! Detector and target-classifier objectives.
//!
//! The detector sees every labeled example, unknowns collapsed into class
//! `C`, and minimises cross-entropy plus `lambda_e` times the margin energy
//! loss. The target classifier sees labeled known examples only and
//! minimises plain cross-entropy. Both are re-initialised from a template
//! on every call.

use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{margin_energy_loss, MarginConfig};
use crate::math::{log_sum_exp, softmax_into};
use crate::nn::{train_epochs, ExampleLoss, Mlp, SgdConfig, TrainOutcome};
use crate::pool::Pool;
use crate::{seed, Error, Result};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5eed;

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let loss = CrossEntropy.evaluate(logits, label, &mut grad)?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl ExampleLoss for CrossEntropy {
    fn evaluate(&self, logits: &[f64], label: usize, grad: &mut [f64]) -> Result<f64> {
        if label >= logits.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: logits.len(),
            });
        }
        softmax_into(logits, grad);
        grad[label] -= 1.0;
        Ok(log_sum_exp(logits) - logits[label])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorLossConfig {
    pub margin: MarginConfig,
    /// `C + 1`.
    pub class_count: usize,
}

impl DetectorLossConfig {
    pub fn validate(&self) -> Result<()> {
        self.margin.validate()?;
        if self.class_count < 2 {
            return Err(Error::InvalidParameter {
                field: "class_count",
                reason: "detector needs at least 2 outputs".into(),
            });
        }
        Ok(())
    }
}

/// Cross-entropy plus weighted margin energy loss for one example.
pub fn detector_loss(
    logits: &[f64],
    label: usize,
    cfg: &DetectorLossConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let loss = cfg.evaluate(logits, label, &mut grad)?;
    Ok((loss, grad))
}

impl ExampleLoss for DetectorLossConfig {
    fn evaluate(&self, logits: &[f64], label: usize, grad: &mut [f64]) -> Result<f64> {
        if logits.len() != self.class_count {
            return Err(Error::Shape {
                context: "detector logits",
                expected: self.class_count,
                actual: logits.len(),
            });
        }
        let ce = CrossEntropy.evaluate(logits, label, grad)?;
        if self.margin.lambda_e == 0.0 {
            return Ok(ce);
        }
        let is_known = label + 1 < self.class_count;
        let (energy, energy_grad) = margin_energy_loss(logits, is_known, &self.margin)?;
        for (g, e) in grad.iter_mut().zip(&energy_grad) {
            *g += self.margin.lambda_e * e;
        }
        Ok(ce + self.margin.lambda_e * energy)
    }
}

/// Hidden layer widths; input and output widths come from the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTemplate {
    pub hidden: Vec<usize>,
}

impl Default for ModelTemplate {
    fn default() -> Self {
        Self { hidden: vec![64] }
    }
}

impl ModelTemplate {
    pub fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(&self.hidden);
        dims.push(output);
        dims
    }

    pub fn instantiate(&self, input: usize, output: usize, seed: u64) -> Result<Mlp> {
        Mlp::new(
            &self.dims(input, output),
            seed::derive(seed, INIT_STREAM, 0),
        )
    }
}

/// Trains a fresh `(C + 1)`-output detector on all labeled data.
pub fn train_detector(
    pool: &Pool,
    template: &ModelTemplate,
    sgd: &SgdConfig,
    margin: &MarginConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let cfg = DetectorLossConfig {
        margin: *margin,
        class_count: pool.class_count() + 1,
    };
    cfg.validate()?;
    let (ids, labels) = pool.detector_training_data();
    if ids.is_empty() {
        return Err(Error::Empty {
            what: "labeled pool",
        });
    }
    let inputs = pool.features().select_rows(&ids);
    let model = template.instantiate(pool.feature_dim(), cfg.class_count, seed)?;
    train_epochs(
        model,
        &inputs,
        &labels,
        &cfg,
        sgd,
        seed::derive(seed, SHUFFLE_STREAM, 0),
    )
}

/// Trains a fresh `C`-output classifier on labeled known data only.
pub fn train_classifier(
    pool: &Pool,
    template: &ModelTemplate,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let (inputs, labels) = pool.classifier_training_data();
    if labels.is_empty() {
        return Err(Error::Empty {
            what: "labeled known pool",
        });
    }
    let model = template.instantiate(pool.feature_dim(), pool.class_count(), seed)?;
    train_epochs(
        model,
        &inputs,
        &labels,
        &CrossEntropy,
        sgd,
        seed::derive(seed, SHUFFLE_STREAM, 0),
    )
}
