//! Particle marginal Metropolis-Hastings over the constant parameters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::model::{Dimension, ModelConfig};
use crate::rng::{derive_seed, rng_from_seed, Stream};

use super::mif::seed_parameters;
use super::season::{initial_ensemble, SeasonFilter, SeasonRun};
use super::{AssimilationRecord, FilterConfig, ParameterVector};

#[derive(Clone, Debug, PartialEq)]
pub struct PmcmcResult {
    /// Chain states, one per iteration including the start point.
    pub samples: Vec<ParameterVector>,
    pub log_likelihoods: Vec<f64>,
    pub accepted: usize,
    /// Accepted proposals over proposals made (0 for a single-state chain).
    pub acceptance_rate: f64,
    pub best_parameters: ParameterVector,
    pub best_log_likelihood: f64,
    /// Filtering records of the best chain state.
    pub records: Vec<AssimilationRecord>,
    pub ensemble: Ensemble,
}

impl PmcmcResult {
    /// Posterior median of each parameter over the second half of the chain.
    pub fn posterior_median(&self) -> ParameterVector {
        let tail = &self.samples[self.samples.len() / 2..];
        std::array::from_fn(|k| {
            let mut v: Vec<f64> = tail.iter().map(|s| s[k]).collect();
            v.sort_by(f64::total_cmp);
            let m = v.len();
            if m % 2 == 1 {
                v[m / 2]
            } else {
                0.5 * (v[m / 2 - 1] + v[m / 2])
            }
        })
    }
}

/// Particle-filter likelihood estimate at fixed parameters.
fn likelihood_run(observations: &[f64], theta: &ParameterVector, config: &FilterConfig, model: &ModelConfig, step: u64) -> Result<(f64, SeasonRun)> {
    let mut ensemble = initial_ensemble(config, step)?;
    seed_parameters(&mut ensemble, theta, &[0.0; 4], 0, model.population_f64());
    let mut filter = SeasonFilter::new(ensemble, config, model, derive_seed(config.rng_seed, Stream::PmcmcFilter, step));
    let mut degenerate = false;
    for &z in observations {
        degenerate |= filter.assimilate(z)?.degenerate;
    }
    let run = filter.into_run();
    let ll = if degenerate { f64::NEG_INFINITY } else { run.log_likelihood };
    Ok((ll, run))
}

/// Runs a random-walk PMMH chain with uniform priors on the configured
/// parameter ranges.
pub fn pmcmc_run(observations: &[f64], config: &FilterConfig, model: &ModelConfig) -> Result<PmcmcResult> {
    config.validate()?;
    let midpoint = config.priors.midpoint();
    let mut theta: ParameterVector = Dimension::PARAMETERS.map(|d| midpoint.get(d));
    let (mut ll, mut best_run) = likelihood_run(observations, &theta, config, model, 0)?;
    let mut best = (theta, ll);

    let mut propose_rng = rng_from_seed(derive_seed(config.rng_seed, Stream::PmcmcPropose, 0));
    let mut accept_rng = rng_from_seed(derive_seed(config.rng_seed, Stream::PmcmcAccept, 0));
    let mut samples = vec![theta];
    let mut log_likelihoods = vec![ll];
    let mut accepted = 0;

    for step in 1..config.pmcmc_chain_length {
        let mut proposal = theta;
        for (k, p) in proposal.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut propose_rng);
            *p += config.pmcmc_proposal_scale[k] * e;
        }
        let u: f64 = accept_rng.random();
        let in_support = Dimension::PARAMETERS
            .iter()
            .zip(&proposal)
            .all(|(d, v)| config.priors.get(*d).contains(*v));
        if in_support {
            let (ll_new, run) = likelihood_run(observations, &proposal, config, model, step as u64)?;
            if ll_new > f64::NEG_INFINITY && (ll_new >= ll || u.ln() < ll_new - ll) {
                theta = proposal;
                ll = ll_new;
                accepted += 1;
                if ll > best.1 {
                    best = (theta, ll);
                    best_run = run;
                }
            }
        }
        samples.push(theta);
        log_likelihoods.push(ll);
    }

    let proposals = config.pmcmc_chain_length - 1;
    Ok(PmcmcResult {
        samples,
        log_likelihoods,
        accepted,
        acceptance_rate: if proposals == 0 { 0.0 } else { accepted as f64 / proposals as f64 },
        best_parameters: best.0,
        best_log_likelihood: best.1,
        records: best_run.records,
        ensemble: best_run.ensemble,
    })
}
