//! Mallows' Cp selection over totally ordered families of linear smoothers,
//! with a Monte Carlo harness that checks the oracle inequality for the
//! selected smoother together with every supporting bound: Gaussian tail
//! lemmas, increment envelopes, packing numbers, chaining nets and the
//! deterministic argument on the high-probability event.

pub mod chaining;
pub mod cli;
pub mod concentration;
pub mod descriptor;
pub mod error;
pub mod experiment;
pub mod family;
pub mod output;
pub mod packing;
pub mod risk;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use family::{build_interpolated_family, ridge_family, verify_family, EigencurveFamily};
pub use risk::{minimize_m, select_cp, RiskPoint, SpectralInstance};
