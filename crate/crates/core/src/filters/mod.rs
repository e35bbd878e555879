//! Weekly prediction-update engines over the SIRS model.
//!
//! Three particle schemes (PF, MIF, PMCMC) and three ensemble schemes
//! (EnKF, EAKF, RHF), each optionally followed by space re-probing.

mod cycle;
pub mod kernels;
mod mif;
mod pmcmc;
mod season;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, MemberValues, PriorRanges};
use crate::error::{Error, Result};
use crate::model::Dimension;
use crate::reprobe::ReprobeConfig;

pub use cycle::{eakf_update, enkf_update, pf_assimilate, rhf_update, CycleContext, EnsembleUpdate};
pub use mif::{mif_run, time_averaged_mean, MifResult};
pub use pmcmc::{pmcmc_run, PmcmcResult};
pub use season::{propagate, run_filter_from, run_filter_season, SeasonFilter, SeasonRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterKind {
    Pf,
    Mif,
    Pmcmc,
    Enkf,
    Eakf,
    Rhf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 6] = [
        FilterKind::Pf,
        FilterKind::Mif,
        FilterKind::Pmcmc,
        FilterKind::Enkf,
        FilterKind::Eakf,
        FilterKind::Rhf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Pf => "PF",
            FilterKind::Mif => "MIF",
            FilterKind::Pmcmc => "PMCMC",
            FilterKind::Enkf => "ENKF",
            FilterKind::Eakf => "EAKF",
            FilterKind::Rhf => "RHF",
        }
    }

    pub fn is_particle(self) -> bool {
        matches!(self, FilterKind::Pf | FilterKind::Mif | FilterKind::Pmcmc)
    }

    /// MIF and PMCMC hold parameters constant within a filtering pass.
    pub fn fixed_parameters(self) -> bool {
        matches!(self, FilterKind::Mif | FilterKind::Pmcmc)
    }

    /// Dimensions jittered by regularization or inflation.
    pub fn perturbed_dims(self) -> &'static [Dimension] {
        if self.fixed_parameters() {
            &Dimension::VARIABLES
        } else {
            &Dimension::ALL
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::FilterConfig(format!("unknown filter kind `{}`", s.trim())))
    }
}

/// Per-parameter values in [`Dimension::PARAMETERS`] order (L, D, R0max, R0min).
pub type ParameterVector = [f64; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub n_members: usize,
    pub reprobe: ReprobeConfig,
    pub inflation_lambda: f64,
    pub bandwidth_scale: f64,
    pub oev_base: f64,
    pub oev_rho: f64,
    pub mif_iterations: usize,
    pub mif_cooling: f64,
    /// Initial MIF perturbation sd per parameter.
    pub mif_tau0: ParameterVector,
    pub pmcmc_chain_length: usize,
    /// Random-walk proposal sd per parameter.
    pub pmcmc_proposal_scale: ParameterVector,
    pub priors: PriorRanges,
    pub rng_seed: u64,
    /// Keep a full posterior ensemble copy in every record.
    pub record_snapshots: bool,
}

/// Default member count: 300 for ensemble filters; 3000 particles with
/// re-probing and 10000 without.
pub fn default_members(kind: FilterKind, sr_active: bool) -> usize {
    match (kind.is_particle(), sr_active) {
        (false, _) => 300,
        (true, true) => 3000,
        (true, false) => 10_000,
    }
}

impl FilterConfig {
    pub fn new(kind: FilterKind, population: f64) -> Self {
        let priors = PriorRanges::default_for(population);
        let reprobe = ReprobeConfig::default_for(population);
        let width = |d: Dimension| priors.get(d).width();
        let params = Dimension::PARAMETERS;
        Self {
            kind,
            n_members: default_members(kind, reprobe.is_active()),
            reprobe,
            inflation_lambda: 1.02,
            bandwidth_scale: 0.9,
            oev_base: 1.0,
            oev_rho: 0.2,
            mif_iterations: 5,
            mif_cooling: 0.9,
            mif_tau0: params.map(|d| 0.05 * width(d)),
            pmcmc_chain_length: 500,
            pmcmc_proposal_scale: params.map(|d| 0.02 * width(d)),
            priors,
            rng_seed: 0,
            record_snapshots: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::FilterConfig(m.to_string()));
        if self.n_members < 2 {
            return bad("n_members must be at least 2");
        }
        if self.kind == FilterKind::Rhf && self.n_members < 3 {
            return bad("RHF needs at least 3 members");
        }
        if !(self.oev_base > 0.0 && self.oev_base.is_finite()) {
            return bad("oev_base must be positive");
        }
        if !(self.oev_rho >= 0.0 && self.oev_rho.is_finite()) {
            return bad("oev_rho must be nonnegative");
        }
        if !(self.mif_cooling > 0.0 && self.mif_cooling < 1.0) {
            return bad("mif_cooling must lie in (0, 1)");
        }
        if self.mif_iterations < 1 {
            return bad("mif_iterations must be at least 1");
        }
        if self.pmcmc_chain_length < 1 {
            return bad("pmcmc_chain_length must be at least 1");
        }
        if !(self.inflation_lambda >= 1.0 && self.inflation_lambda.is_finite()) {
            return bad("inflation_lambda must be >= 1");
        }
        if !(self.bandwidth_scale >= 0.0 && self.bandwidth_scale.is_finite()) {
            return bad("bandwidth_scale must be nonnegative");
        }
        if self.mif_tau0.iter().chain(&self.pmcmc_proposal_scale).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("perturbation scales must be finite and nonnegative");
        }
        self.priors.validate()?;
        self.reprobe.validate(self.priors.population())
    }

    /// Re-probe settings as applied by this kind: fixed-parameter kinds only
    /// re-probe model variables.
    pub fn effective_reprobe(&self) -> ReprobeConfig {
        if self.kind.fixed_parameters() {
            self.reprobe.restricted(|d| !d.is_parameter())
        } else {
            self.reprobe.clone()
        }
    }
}

/// Observation error variance `oev_base + (oev_rho * z)^2`.
pub fn obs_error_variance(z: f64, config: &FilterConfig) -> f64 {
    oev(z, config.oev_base, config.oev_rho)
}

pub fn oev(z: f64, base: f64, rho: f64) -> f64 {
    base + (rho * z).powi(2)
}

/// Weighted mean and sd of every state dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub mean: [f64; 6],
    pub sd: [f64; 6],
}

impl StateSummary {
    pub fn of(ensemble: &Ensemble) -> Self {
        Self {
            mean: Dimension::ALL.map(|d| ensemble.weighted_mean(d)),
            sd: Dimension::ALL.map(|d| ensemble.weighted_std(d)),
        }
    }
}

/// Everything kept about one assimilation cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssimilationRecord {
    pub week: usize,
    pub observation: f64,
    pub obs_variance: f64,
    pub prior_incidence: Vec<f64>,
    pub posterior_incidence: Vec<f64>,
    /// Posterior particle weights paired with `posterior_incidence`.
    pub weights: Option<Vec<f64>>,
    pub prior_summary: StateSummary,
    pub posterior_summary: StateSummary,
    pub snapshot: Option<Ensemble>,
    pub n_eff: Option<f64>,
    pub resampled: bool,
    /// Update skipped or weights reset (zero spread, underflow, ties).
    pub degenerate: bool,
    pub reprobed: usize,
    /// Log of the per-week likelihood estimate (particle kinds).
    pub log_evidence: Option<f64>,
}

impl AssimilationRecord {
    pub fn posterior_values(&self) -> MemberValues {
        MemberValues { values: self.posterior_incidence.clone(), weights: self.weights.clone() }
    }

    pub fn prior_values(&self) -> MemberValues {
        MemberValues { values: self.prior_incidence.clone(), weights: None }
    }

    pub fn posterior_mean(&self) -> f64 {
        self.posterior_values().mean()
    }
}
