use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::{initialize, Ensemble};
use crate::error::{Error, Result};
use crate::model::{observe, simulate_week, Dimension, ModelConfig};
use crate::reprobe::ReprobeConfig;
use crate::rng::{derive_seed, rng_from_seed, Stream};
use crate::truth::ObservationSeries;

use super::cycle::{ensemble_assimilate, pf_assimilate, CycleContext};
use super::{mif_run, pmcmc_run, AssimilationRecord, FilterConfig, FilterKind, ParameterVector};

/// Integrates every member through `week`; returns observed incidence per member.
pub fn propagate(ensemble: &mut Ensemble, week: usize, model: &ModelConfig) -> Result<Vec<f64>> {
    ensemble
        .members
        .par_iter_mut()
        .map(|m| {
            let (next, incidence) = simulate_week(m, week, model)?;
            *m = next;
            Ok(observe(incidence, model))
        })
        .collect()
}

/// Week-by-week driver for one filtering pass.
#[derive(Debug)]
pub struct SeasonFilter<'a> {
    config: &'a FilterConfig,
    model: &'a ModelConfig,
    reprobe: ReprobeConfig,
    ensemble: Ensemble,
    seed: u64,
    week: usize,
    records: Vec<AssimilationRecord>,
    parameter_noise: Option<ParameterVector>,
    log_likelihood: f64,
}

impl<'a> SeasonFilter<'a> {
    pub fn new(ensemble: Ensemble, config: &'a FilterConfig, model: &'a ModelConfig, seed: u64) -> Self {
        let ensemble = if config.kind.is_particle() {
            let weights = Some(ensemble.weights_or_uniform());
            Ensemble { weights, ..ensemble }
        } else {
            Ensemble { weights: None, ..ensemble }
        };
        Self {
            config,
            model,
            reprobe: config.effective_reprobe(),
            ensemble,
            seed,
            week: 0,
            records: Vec::new(),
            parameter_noise: None,
            log_likelihood: 0.0,
        }
    }

    /// Random-walk sd applied to every parameter before each prediction.
    pub fn with_parameter_noise(mut self, sd: ParameterVector) -> Self {
        self.parameter_noise = sd.iter().any(|&s| s > 0.0).then_some(sd);
        self
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn records(&self) -> &[AssimilationRecord] {
        &self.records
    }

    /// Index of the next week to be assimilated.
    pub fn week(&self) -> usize {
        self.week
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Predicts week `self.week()` and assimilates `z`.
    pub fn assimilate(&mut self, z: f64) -> Result<&AssimilationRecord> {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::FilterConfig(format!("observation must be finite and nonnegative, got {z}")));
        }
        let population = self.model.population_f64();
        if let Some(sd) = self.parameter_noise {
            let mut rng = rng_from_seed(derive_seed(self.seed, Stream::MifParams, self.week as u64));
            for m in &mut self.ensemble.members {
                for (dim, s) in Dimension::PARAMETERS.iter().zip(sd) {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    if s > 0.0 {
                        m.set(*dim, m.get(*dim) + s * e);
                    }
                }
                m.clamp(population);
            }
        }
        let predicted = propagate(&mut self.ensemble, self.week, self.model)?;
        let ctx = CycleContext {
            config: self.config,
            reprobe: &self.reprobe,
            population,
            week: self.week,
            seed: self.seed,
        };
        let (next, record) = if self.config.kind.is_particle() {
            pf_assimilate(&self.ensemble, &predicted, z, &ctx)?
        } else {
            ensemble_assimilate(&self.ensemble, &predicted, z, &ctx)?
        };
        self.ensemble = next;
        if let Some(le) = record.log_evidence {
            self.log_likelihood += le;
        }
        self.records.push(record);
        self.week += 1;
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn into_run(self) -> SeasonRun {
        SeasonRun { records: self.records, ensemble: self.ensemble, log_likelihood: self.log_likelihood }
    }
}

/// Records of a completed pass plus the final ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct SeasonRun {
    pub records: Vec<AssimilationRecord>,
    pub ensemble: Ensemble,
    /// Sum of per-week log likelihood estimates (particle kinds; 0 otherwise).
    pub log_likelihood: f64,
}

impl SeasonRun {
    /// Posterior mean observed incidence per assimilated week.
    pub fn posterior_mean_trajectory(&self) -> Vec<f64> {
        self.records.iter().map(AssimilationRecord::posterior_mean).collect()
    }
}

/// Runs one pass from a given starting ensemble, with parameters treated as
/// the kind dictates.
pub fn run_filter_from(ensemble: Ensemble, observations: &[f64], config: &FilterConfig, model: &ModelConfig, seed: u64) -> Result<SeasonRun> {
    let mut filter = SeasonFilter::new(ensemble, config, model, seed);
    for &z in observations {
        filter.assimilate(z)?;
    }
    Ok(filter.into_run())
}

/// Initial ensemble for a pass of `config`.
pub(super) fn initial_ensemble(config: &FilterConfig, index: u64) -> Result<Ensemble> {
    initialize(config.n_members, &config.priors, derive_seed(config.rng_seed, Stream::Init, index))
}

/// Assimilates a whole observation series with the configured filter.
///
/// PF and the ensemble filters run a single pass with time-varying
/// parameters. MIF returns its last pass at the estimated parameters; PMCMC
/// returns the run with the highest likelihood among accepted proposals.
pub fn run_filter_season(observations: &ObservationSeries, config: &FilterConfig, model: &ModelConfig) -> Result<SeasonRun> {
    if observations.observed.is_empty() {
        return Err(Error::FilterConfig("observation series is empty".into()));
    }
    run_filter_on(&observations.observed, config, model)
}

pub(crate) fn run_filter_on(observed: &[f64], config: &FilterConfig, model: &ModelConfig) -> Result<SeasonRun> {
    config.validate()?;
    model.validate()?;
    match config.kind {
        FilterKind::Mif => {
            let r = mif_run(observed, config, model)?;
            Ok(SeasonRun { records: r.records, ensemble: r.ensemble, log_likelihood: r.log_likelihood })
        }
        FilterKind::Pmcmc => {
            let r = pmcmc_run(observed, config, model)?;
            Ok(SeasonRun { records: r.records, ensemble: r.ensemble, log_likelihood: r.best_log_likelihood })
        }
        _ => {
            let ensemble = initial_ensemble(config, 0)?;
            run_filter_from(ensemble, observed, config, model, derive_seed(config.rng_seed, Stream::Filter, 0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelState;

    #[test]
    fn single_member_filter_is_a_plain_run() {
        let model = ModelConfig::default();
        let mut cfg = FilterConfig::new(FilterKind::Eakf, 1e5);
        cfg.reprobe.fraction = 0.0;
        cfg.inflation_lambda = 1.0;
        cfg.bandwidth_scale = 0.0;
        let start = ModelState { s: 60_000.0, i: 10.0, l: 1460.0, d: 3.0, r0max: 2.5, r0min: 1.1 };
        let obs: Vec<f64> = (0..20).map(|k| 5.0 * k as f64).collect();
        for kind in [FilterKind::Eakf, FilterKind::Enkf, FilterKind::Pf] {
            cfg.kind = kind;
            let run = run_filter_from(Ensemble::new(vec![start]).unwrap(), &obs, &cfg, &model, 1).unwrap();
            let mut st = start;
            for (week, rec) in run.records.iter().enumerate() {
                let (next, inc) = simulate_week(&st, week, &model).unwrap();
                st = next;
                assert_eq!(rec.posterior_incidence, vec![observe(inc, &model)]);
            }
            assert_eq!(run.ensemble.members[0], st);
        }
    }

    #[test]
    fn rejects_empty_and_bad_observations() {
        let model = ModelConfig::default();
        let cfg = FilterConfig::new(FilterKind::Eakf, 1e5);
        let empty = ObservationSeries::new(vec![], vec![], 40).unwrap();
        assert!(run_filter_season(&empty, &cfg, &model).is_err());
        let ens = initialize(10, &cfg.priors, 1).unwrap();
        assert!(run_filter_from(ens, &[f64::NAN], &cfg, &model, 1).is_err());
    }

    #[test]
    fn member_count_is_preserved() {
        let model = ModelConfig::default();
        let obs = vec![10.0, 20.0, 40.0, 80.0];
        for kind in [FilterKind::Pf, FilterKind::Enkf, FilterKind::Eakf, FilterKind::Rhf] {
            let mut cfg = FilterConfig::new(kind, 1e5);
            cfg.n_members = 64;
            let run = run_filter_on(&obs, &cfg, &model).unwrap();
            assert_eq!(run.ensemble.len(), 64);
            for rec in &run.records {
                assert_eq!(rec.prior_incidence.len(), 64);
                assert_eq!(rec.posterior_incidence.len(), 64);
                let snap = rec.snapshot.as_ref().unwrap();
                assert!(snap.members.iter().all(|m| m.satisfies_invariants(1e5)));
            }
        }
    }
}
