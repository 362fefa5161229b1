//! Free-energy scores.
//!
//! With logits `f`, the energy of class `c` is `-f_c` and the free energy is
//! `-log Σ_c exp(f_c)`. The detector has `C + 1` outputs, the last one
//! standing for every unknown class.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{argmax, log_sum_exp, sigmoid, softmax_into, softplus};
use crate::{Error, Result};

/// Free energy `-log Σ exp(f_c)`.
pub fn free_energy(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty { what: "logits" });
    }
    Ok(-log_sum_exp(logits))
}

/// Label-wise free energy `-log(1 + exp(f))` of a single class.
pub fn label_wise_free_energy(logit: f64) -> f64 {
    -softplus(logit)
}

/// Energy terms of a detector prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// Free energy over the known classes.
    pub e_known: f64,
    /// Label-wise free energy of the unknown class; never positive.
    pub e_unknown: f64,
    /// Epistemic uncertainty, `e_known - e_unknown`.
    pub eu: f64,
}

/// Epistemic uncertainty of a `(C + 1)`-logit detector output.
///
/// Higher values mean the example sits in a region dense with unknowns.
pub fn epistemic_uncertainty(detector_logits: &[f64]) -> Result<EnergyBreakdown> {
    if detector_logits.len() < 2 {
        return Err(Error::Shape {
            context: "detector logits (need C + 1 >= 2)",
            expected: 2,
            actual: detector_logits.len(),
        });
    }
    let (known, unknown) = detector_logits.split_at(detector_logits.len() - 1);
    let e_known = -log_sum_exp(known);
    let e_unknown = label_wise_free_energy(unknown[0]);
    Ok(EnergyBreakdown {
        e_known,
        e_unknown,
        eu: e_known - e_unknown,
    })
}

/// Aleatoric uncertainty: free energy over all classes minus the free
/// energy over every class but the most probable one.
///
/// Equals `log(1 - p_max)`, so it is always negative and peaks at
/// `log((C - 1) / C)` for uniform logits.
pub fn aleatoric_uncertainty(classifier_logits: &[f64]) -> Result<f64> {
    let n = classifier_logits.len();
    if n < 2 {
        return Err(Error::Shape {
            context: "classifier logits (need C >= 2)",
            expected: 2,
            actual: n,
        });
    }
    let top = argmax(classifier_logits);
    let max = classifier_logits[top];
    let mut all = 0.0;
    let mut secondary = 0.0;
    for (c, &f) in classifier_logits.iter().enumerate() {
        let e = libm::exp(f - max);
        all += e;
        if c != top {
            secondary += e;
        }
    }
    Ok(libm::log(secondary) - libm::log(all))
}

/// Margins and weight of the margin-based energy loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    /// Known examples are pushed to free energy below this.
    pub m_known: f64,
    /// Unknown examples are pushed to free energy above this.
    pub m_unknown: f64,
    pub lambda_e: f64,
    /// Apply the hinge to the epistemic score instead of the known-class
    /// free energy.
    pub use_eu: bool,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self {
            m_known: -25.0,
            m_unknown: -7.0,
            lambda_e: 0.01,
            use_eu: false,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_known < self.m_unknown) {
            return Err(Error::InvalidParameter {
                field: "m_kno",
                reason: "must be below m_unk".to_string(),
            });
        }
        if !(self.lambda_e >= 0.0 && self.lambda_e.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "lambda_e",
                reason: "must be non-negative".to_string(),
            });
        }
        Ok(())
    }
}

/// Squared-hinge energy loss and its gradient on the detector logits.
///
/// Known: `max(0, E - m_known)^2`. Unknown: `max(0, m_unknown - E)^2`, where
/// `E` is the known-class free energy (or the epistemic score when
/// `use_eu` is set). `lambda_e` is not applied here.
pub fn margin_energy_loss(
    detector_logits: &[f64],
    is_known: bool,
    cfg: &MarginConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = detector_logits.len();
    if let Some(row) = detector_logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "detector logits",
            row,
        });
    }
    let breakdown = epistemic_uncertainty(detector_logits)?;
    let energy = if cfg.use_eu {
        breakdown.eu
    } else {
        breakdown.e_known
    };
    // d loss / d energy
    let (loss, slope) = if is_known {
        let gap = energy - cfg.m_known;
        if gap > 0.0 {
            (gap * gap, 2.0 * gap)
        } else {
            (0.0, 0.0)
        }
    } else {
        let gap = cfg.m_unknown - energy;
        if gap > 0.0 {
            (gap * gap, -2.0 * gap)
        } else {
            (0.0, 0.0)
        }
    };
    let mut grad = vec![0.0; n];
    if slope != 0.0 {
        // dE_known/df_c = -softmax_c over the known logits.
        softmax_into(&detector_logits[..n - 1], &mut grad[..n - 1]);
        for g in &mut grad[..n - 1] {
            *g *= -slope;
        }
        if cfg.use_eu {
            // d(-E_unknown)/df = sigmoid(f)
            grad[n - 1] = slope * sigmoid(detector_logits[n - 1]);
        }
    }
    Ok((loss, grad))
}
