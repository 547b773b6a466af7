//! Markov chains on the half-strip `Z+ x S`.
//!
//! The chain `(X_n, eta_n)` moves on non-negative heights crossed with a
//! finite set of lines. This crate defines such kernels ([`model`]),
//! computes the limit line-transition matrix and its stationary
//! distribution ([`stationary`]), classifies the walk as transient /
//! null-recurrent / positive-recurrent from per-line drift constants
//! ([`classify`]), and validates the classification and the `sqrt(n)`
//! weak limit by simulation ([`simulate`], [`coupling`], [`weaklimit`]).
//!
//! ```
//! use halfstrip::model::CorrelatedWalkModel;
//! use halfstrip::classify::{classify_model, Verdict};
//! use halfstrip::model::DriftMode;
//!
//! let walk = CorrelatedWalkModel::new(1.0);
//! let result = classify_model(&walk, DriftMode::Lamperti, &[100, 1000, 10000]).unwrap();
//! assert_eq!(result.result.verdict, Verdict::Transient);
//! ```

pub mod classify;
pub mod config;
pub mod coupling;
pub mod model;
pub mod simulate;
pub mod stationary;
pub mod weaklimit;

mod extrapolate;
mod rng;
mod special;

pub use rng::trial_stream;
