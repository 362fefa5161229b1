//! Two-component 1-D Gaussian mixtures and score fusion.
//!
//! Raw uncertainty scores live on arbitrary scales. A two-component mixture
//! fitted by EM turns each score into the posterior probability that it
//! belongs to the higher-mean ("high uncertainty") component, and the two
//! epistemic probabilities are then fused by an element-wise product.

use alloc::vec::Vec;

use crate::math::{exp, log, log_sum_exp};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Settings for [`fit_gmm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iters: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-8,
            variance_floor: 1e-6,
        }
    }
}

/// A two-component mixture of 1-D Gaussians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gmm1d {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Index of the component with the lower mean.
    pub low_component: usize,
}

impl Gmm1d {
    /// Builds a mixture, normalising nothing; `low_component` is derived.
    pub fn new(weights: [f64; 2], means: [f64; 2], variances: [f64; 2]) -> Self {
        Self {
            weights,
            means,
            variances,
            low_component: usize::from(means[1] < means[0]),
        }
    }

    pub fn high_component(&self) -> usize {
        1 - self.low_component
    }

    /// `log(w_k N(x; mu_k, var_k))` for both components.
    fn log_joint(&self, x: f64) -> [f64; 2] {
        let f = |k: usize| {
            let d = x - self.means[k];
            log(self.weights[k])
                - LN_SQRT_2PI
                - 0.5 * log(self.variances[k])
                - 0.5 * d * d / self.variances[k]
        };
        [f(0), f(1)]
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_sum_exp(&self.log_joint(x))
    }

    /// Posterior responsibilities of both components.
    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        let lj = self.log_joint(x);
        let norm = log_sum_exp(&lj);
        [exp(lj[0] - norm), exp(lj[1] - norm)]
    }

    /// Posterior probability of the higher-mean component.
    pub fn posterior_high(&self, x: f64) -> f64 {
        self.responsibilities(x)[self.high_component()]
    }

    /// `log p(high | x) - log p(low | x)`. Monotone in the posterior but
    /// does not saturate in the tails.
    pub fn log_odds_high(&self, x: f64) -> f64 {
        let lj = self.log_joint(x);
        lj[self.high_component()] - lj[self.low_component]
    }

    pub fn log_likelihood(&self, scores: &[f64]) -> f64 {
        scores.iter().map(|&x| self.log_density(x)).sum()
    }
}

/// A fitted mixture and the log-likelihood after initialisation and after
/// every EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: Gmm1d,
    pub log_likelihood: Vec<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fits a two-component mixture by EM.
///
/// Initial means sit at the 25th and 75th percentiles (or the extremes when
/// those coincide), weights are equal and both variances equal the sample
/// variance. The procedure is deterministic.
pub fn fit_gmm(scores: &[f64], cfg: &GmmConfig) -> Result<GmmFit> {
    if scores.len() < 4 {
        return Err(Error::Degenerate("need at least 4 scores"));
    }
    if let Some(row) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "scores",
            row,
        });
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Degenerate("all scores are identical"));
    }
    let (mut lo, mut hi) = (percentile(&sorted, 0.25), percentile(&sorted, 0.75));
    if lo == hi {
        lo = sorted[0];
        hi = sorted[sorted.len() - 1];
    }
    let v0 = var.max(cfg.variance_floor);
    fit_gmm_from(Gmm1d::new([0.5, 0.5], [lo, hi], [v0, v0]), scores, cfg)
}

/// Runs EM starting from `initial`.
pub fn fit_gmm_from(initial: Gmm1d, scores: &[f64], cfg: &GmmConfig) -> Result<GmmFit> {
    if let Some(row) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "scores",
            row,
        });
    }
    let mut model = initial;
    let mut resp = Vec::with_capacity(scores.len());
    let mut trace = Vec::new();
    let mut ll = e_step(&model, scores, &mut resp);
    trace.push(ll);
    for _ in 0..cfg.max_iters {
        let next = m_step(&model, scores, &resp, cfg.variance_floor);
        let next_ll = e_step(&next, scores, &mut resp);
        model = next;
        trace.push(next_ll);
        let gain = next_ll - ll;
        ll = next_ll;
        if gain < cfg.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
    })
}

fn e_step(model: &Gmm1d, scores: &[f64], resp: &mut Vec<[f64; 2]>) -> f64 {
    resp.clear();
    let mut ll = 0.0;
    for &x in scores {
        let lj = model.log_joint(x);
        let norm = log_sum_exp(&lj);
        ll += norm;
        resp.push([exp(lj[0] - norm), exp(lj[1] - norm)]);
    }
    ll
}

fn m_step(prev: &Gmm1d, scores: &[f64], resp: &[[f64; 2]], floor: f64) -> Gmm1d {
    let n = scores.len() as f64;
    let mut weights = prev.weights;
    let mut means = prev.means;
    let mut variances = prev.variances;
    for k in 0..2 {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if nk <= f64::MIN_POSITIVE {
            // Component starved of data: keep its shape, give it a token weight.
            weights[k] = f64::MIN_POSITIVE;
            continue;
        }
        let mu = resp.iter().zip(scores).map(|(r, x)| r[k] * x).sum::<f64>() / nk;
        let v = resp
            .iter()
            .zip(scores)
            .map(|(r, x)| r[k] * (x - mu) * (x - mu))
            .sum::<f64>()
            / nk;
        weights[k] = nk / n;
        means[k] = mu;
        variances[k] = v.max(floor);
    }
    let total = weights[0] + weights[1];
    Gmm1d::new([weights[0] / total, weights[1] / total], means, variances)
}

/// Posterior probability of the higher-mean component for every score.
pub fn to_probabilistic(model: &Gmm1d, scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&x| model.posterior_high(x)).collect()
}

/// Element-wise product of two probability vectors.
pub fn fuse_eu(learning: &[f64], data: &[f64]) -> Result<Vec<f64>> {
    if learning.len() != data.len() {
        return Err(Error::Shape {
            context: "fused score vectors",
            expected: learning.len(),
            actual: data.len(),
        });
    }
    Ok(learning.iter().zip(data).map(|(a, b)| a * b).collect())
}
