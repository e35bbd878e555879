//! Iterated filtering for constant parameters.

use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::model::{Dimension, ModelConfig};
use crate::rng::{derive_seed, rng_from_seed, Stream};

use super::season::{initial_ensemble, SeasonFilter};
use super::{AssimilationRecord, FilterConfig, ParameterVector};

#[derive(Clone, Debug, PartialEq)]
pub struct MifResult {
    /// Parameter estimate after the last iteration.
    pub estimate: ParameterVector,
    /// Start point of each pass followed by the final estimate.
    pub trace: Vec<ParameterVector>,
    /// Records of the closing pass at `estimate`.
    pub records: Vec<AssimilationRecord>,
    pub ensemble: Ensemble,
    pub log_likelihood: f64,
}

/// Filtered parameter means averaged over the weeks of a pass. The sum is
/// taken relative to `origin`, so constant parameters come back exactly.
pub fn time_averaged_mean(records: &[AssimilationRecord], origin: &ParameterVector) -> ParameterVector {
    if records.is_empty() {
        return *origin;
    }
    let k = records.len() as f64;
    std::array::from_fn(|j| {
        let idx = Dimension::PARAMETERS[j].index();
        origin[j] + records.iter().map(|r| r.posterior_summary.mean[idx] - origin[j]).sum::<f64>() / k
    })
}

/// Sets every member's parameters to `theta` plus Gaussian noise of sd `tau`.
pub(super) fn seed_parameters(ensemble: &mut Ensemble, theta: &ParameterVector, tau: &ParameterVector, rng_seed: u64, population: f64) {
    let mut rng = rng_from_seed(rng_seed);
    for m in &mut ensemble.members {
        for (k, dim) in Dimension::PARAMETERS.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let value = if tau[k] > 0.0 { theta[k] + tau[k] * e } else { theta[k] };
            m.set(*dim, value);
        }
        m.clamp(population);
    }
}

/// Runs `mif_iterations` perturbed passes with geometrically cooled
/// perturbations. Each pass restarts from the previous pass's weighted
/// filtered parameter mean, averaged over weeks. A final unperturbed pass
/// runs at the estimate.
pub fn mif_run(observations: &[f64], config: &FilterConfig, model: &ModelConfig) -> Result<MifResult> {
    config.validate()?;
    let population = model.population_f64();
    let midpoint = config.priors.midpoint();
    let mut theta: ParameterVector = Dimension::PARAMETERS.map(|d| midpoint.get(d));
    let mut trace = vec![theta];

    for pass in 0..config.mif_iterations {
        let cooling = config.mif_cooling.powi(pass as i32);
        let tau = config.mif_tau0.map(|t| t * cooling);
        let mut ensemble = initial_ensemble(config, pass as u64)?;
        seed_parameters(&mut ensemble, &theta, &tau, derive_seed(config.rng_seed, Stream::MifInit, pass as u64), population);
        let pass_seed = derive_seed(config.rng_seed, Stream::Filter, pass as u64);
        let mut filter = SeasonFilter::new(ensemble, config, model, pass_seed).with_parameter_noise(tau);
        for &z in observations {
            filter.assimilate(z)?;
        }
        theta = time_averaged_mean(filter.records(), &theta);
        trace.push(theta);
    }

    let last = config.mif_iterations as u64;
    let mut ensemble = initial_ensemble(config, last)?;
    seed_parameters(&mut ensemble, &theta, &[0.0; 4], 0, population);
    let mut filter = SeasonFilter::new(ensemble, config, model, derive_seed(config.rng_seed, Stream::Filter, last));
    for &z in observations {
        filter.assimilate(z)?;
    }
    let run = filter.into_run();
    Ok(MifResult {
        estimate: theta,
        trace,
        records: run.records,
        ensemble: run.ensemble,
        log_likelihood: run.log_likelihood,
    })
}
