//! Estimating the number of non-Gaussian structural shocks in an SVARMA
//! model from higher-order cumulant spectra of VAR residuals.
//!
//! The pipeline runs bottom-up:
//!
//! * [`cumulant`]: joint cumulants, index bookkeeping, matricization.
//! * [`varma`]: SVARMA simulation (causal or not), VAR fitting, rebuilds.
//! * [`polyspectra`]: smoothed residual polyspectra and target matrices.
//! * [`rank_test`]: the KP rank statistic.
//! * [`bootstrap`]: stationary and restricted bootstrap plus the sequential
//!   test for the non-Gaussian dimension.
//! * [`harness`]: CSV ingestion, end-to-end runs and Monte Carlo tables.

pub mod bootstrap;
pub mod cumulant;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod polyspectra;
pub mod rank_test;
pub mod rng;
pub mod series;
pub mod shocks;
pub mod varma;

pub use error::{Error, Result};
pub use series::TimeSeriesMatrix;
pub use shocks::ShockDistribution;
