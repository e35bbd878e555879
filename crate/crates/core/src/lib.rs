//! Data assimilation for a seasonally forced SIRS influenza model, with
//! space re-probing for particle and ensemble filters.
//!
//! The pieces, bottom up:
//!
//! - [`model`]: the SIRS dynamics, integrated with RK4 in weekly blocks.
//! - [`ensemble`]: weighted member sets, resampling, regularization, inflation.
//! - [`reprobe`]: random redraws of selected dimensions in a few members.
//! - [`filters`]: PF, MIF, PMCMC, EnKF, EAKF and RHF cycles.
//! - [`truth`]: synthetic outbreaks and noisy observations.
//! - [`harness`]: forecasts, RMS error, peak accuracy, paired comparisons.
//! - [`config`], [`output`]: text configuration and CSV/JSON writers.
//!
//! ```
//! use srassim::filters::{run_filter_season, FilterConfig, FilterKind};
//! use srassim::model::ModelConfig;
//! use srassim::truth::{generate_observations, generate_truth, ObservationNoise, TruthScenario};
//!
//! let model = ModelConfig::default();
//! let truth = generate_truth(&TruthScenario::two_strain(1e5), &model).unwrap();
//! let obs = generate_observations(&truth.incidence, &ObservationNoise::default(), 40, 7).unwrap();
//! let mut cfg = FilterConfig::new(FilterKind::Eakf, 1e5);
//! cfg.n_members = 50;
//! let run = run_filter_season(&obs, &cfg, &model).unwrap();
//! assert_eq!(run.records.len(), 52);
//! ```

pub mod config;
pub mod ensemble;
pub mod error;
pub mod filters;
pub mod harness;
pub mod model;
pub mod output;
pub mod reprobe;
pub mod rng;
pub mod stats;
pub mod truth;

pub use error::{Error, Result};

/// Crate version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
