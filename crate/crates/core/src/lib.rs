//! Energy-based active open-set annotation.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithmic
//! piece of the active learning loop:
//!
//! - [`nn`]: a small feed-forward network with manual backpropagation and
//!   SGD with momentum, used for both the (C+1)-class detector and the
//!   C-class target classifier.
//! - [`energy`]: free energy, epistemic and aleatoric uncertainty, and the
//!   margin-based energy loss.
//! - [`density`]: reverse k-nearest-neighbour arrow counting and the
//!   data-driven epistemic score.
//! - [`fusion`]: two-component 1-D Gaussian mixtures fitted by EM, used to
//!   turn raw scores into probabilities before fusing them.
//! - [`sampler`]: target-driven two-stage selection with an adaptive
//!   candidate multiplier.
//! - [`pool`]: open-set datasets, pool bookkeeping and the simulated oracle.
//! - [`training`]: detector and classifier objectives and trainers.
//! - [`scoring`] and [`baseline`]: per-round score tables and the baseline
//!   query strategies.
//!
//! Class labels are zero based. With `C` known classes, known labels are
//! `0..C` and the collapsed unknown class is `C`.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod density;
pub mod energy;
mod error;
pub mod fusion;
pub mod math;
pub mod matrix;
pub mod nn;
pub mod pool;
pub mod sampler;
pub mod scoring;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
