use crate::ensemble::{effective_sample_size, inflate, regularize, systematic_resample, Ensemble};
use crate::error::{Error, Result};
use crate::model::Dimension;
use crate::reprobe::{apply_reprobe_in_place, ReprobeConfig};
use crate::rng::{derive_seed, rng_from_seed, Stream};

use super::kernels::{eakf_increments, enkf_increments, pf_reweight, regression_coefficient, rhf_increments};
use super::{obs_error_variance, AssimilationRecord, FilterConfig, FilterKind, StateSummary};

/// What one cycle needs besides the ensemble and the observation.
#[derive(Clone, Copy, Debug)]
pub struct CycleContext<'a> {
    pub config: &'a FilterConfig,
    pub reprobe: &'a ReprobeConfig,
    pub population: f64,
    pub week: usize,
    /// Base seed of the current filtering pass.
    pub seed: u64,
}

impl CycleContext<'_> {
    fn seed_for(&self, stream: Stream) -> u64 {
        derive_seed(self.seed, stream, self.week as u64)
    }
}

fn check_lengths(ensemble: &Ensemble, predicted: &[f64]) -> Result<()> {
    if ensemble.len() != predicted.len() {
        return Err(Error::LengthMismatch(ensemble.len(), predicted.len()));
    }
    Ok(())
}

/// Particle-filter cycle: reweight, normalize, re-probe, then resample and
/// regularize if the effective sample size drops below `N/2`.
pub fn pf_assimilate(
    ensemble: &Ensemble,
    predicted: &[f64],
    z: f64,
    ctx: &CycleContext<'_>,
) -> Result<(Ensemble, AssimilationRecord)> {
    check_lengths(ensemble, predicted)?;
    let n = ensemble.len();
    let obs_var = obs_error_variance(z, ctx.config);
    let prior_summary = StateSummary::of(ensemble);

    let reweighted = pf_reweight(&ensemble.weights_or_uniform(), predicted, z, obs_var);
    let mut posterior = Ensemble { members: ensemble.members.clone(), weights: Some(reweighted.weights) };
    let reprobed = apply_reprobe_in_place(&mut posterior, ctx.reprobe, ctx.seed_for(Stream::Reprobe), ctx.population).len();
    let weights = posterior.weights.clone();

    let n_eff = effective_sample_size(weights.as_deref().unwrap_or(&[]))?;
    let resampled = n_eff < n as f64 / 2.0;
    if resampled {
        posterior = systematic_resample(&posterior, ctx.seed_for(Stream::Resample));
        posterior = regularize(
            &posterior,
            ctx.config.kind.perturbed_dims(),
            ctx.config.bandwidth_scale,
            ctx.seed_for(Stream::Regularize),
            ctx.population,
        );
    }

    let record = AssimilationRecord {
        week: ctx.week,
        observation: z,
        obs_variance: obs_var,
        prior_incidence: predicted.to_vec(),
        posterior_incidence: predicted.to_vec(),
        weights,
        prior_summary,
        posterior_summary: StateSummary::of(&posterior),
        snapshot: ctx.config.record_snapshots.then(|| posterior.clone()),
        n_eff: Some(n_eff),
        resampled,
        degenerate: reweighted.degenerate,
        reprobed,
        log_evidence: Some(reweighted.log_evidence),
    };
    Ok((posterior, record))
}

/// Output of an ensemble Kalman-type update.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleUpdate {
    pub ensemble: Ensemble,
    pub posterior_incidence: Vec<f64>,
    /// The update was skipped or ties had to be broken.
    pub degenerate: bool,
}

/// Moves every member by the regression of each state dimension on the
/// observed increments.
fn apply_increments(ensemble: &Ensemble, predicted: &[f64], increments: &[f64], population: f64) -> Ensemble {
    let coefficients = Dimension::ALL.map(|d| regression_coefficient(&ensemble.column(d), predicted));
    let mut out = Ensemble { members: ensemble.members.clone(), weights: None };
    for (member, inc) in out.members.iter_mut().zip(increments) {
        for (dim, b) in Dimension::ALL.iter().zip(coefficients) {
            if b != 0.0 {
                member.set(*dim, member.get(*dim) + b * inc);
            }
        }
        member.clamp(population);
    }
    out
}

fn finish_update(ensemble: &Ensemble, predicted: &[f64], increments: Option<Vec<f64>>, flagged: bool, population: f64) -> EnsembleUpdate {
    match increments {
        Some(inc) => EnsembleUpdate {
            ensemble: apply_increments(ensemble, predicted, &inc, population),
            posterior_incidence: predicted.iter().zip(&inc).map(|(y, d)| y + d).collect(),
            degenerate: flagged,
        },
        None => EnsembleUpdate {
            ensemble: Ensemble { members: ensemble.members.clone(), weights: None },
            posterior_incidence: predicted.to_vec(),
            degenerate: true,
        },
    }
}

/// Stochastic EnKF update with perturbed observations.
pub fn enkf_update(ensemble: &Ensemble, predicted: &[f64], z: f64, ctx: &CycleContext<'_>) -> Result<EnsembleUpdate> {
    check_lengths(ensemble, predicted)?;
    let obs_var = obs_error_variance(z, ctx.config);
    let mut rng = rng_from_seed(ctx.seed_for(Stream::Perturb));
    let inc = enkf_increments(predicted, z, obs_var, &mut rng);
    Ok(finish_update(ensemble, predicted, inc, false, ctx.population))
}

/// Deterministic EAKF update.
pub fn eakf_update(ensemble: &Ensemble, predicted: &[f64], z: f64, ctx: &CycleContext<'_>) -> Result<EnsembleUpdate> {
    check_lengths(ensemble, predicted)?;
    let obs_var = obs_error_variance(z, ctx.config);
    let inc = eakf_increments(predicted, z, obs_var);
    Ok(finish_update(ensemble, predicted, inc, false, ctx.population))
}

/// Rank histogram filter update.
pub fn rhf_update(ensemble: &Ensemble, predicted: &[f64], z: f64, ctx: &CycleContext<'_>) -> Result<EnsembleUpdate> {
    check_lengths(ensemble, predicted)?;
    if ensemble.len() < 3 {
        return Err(Error::FilterConfig("RHF needs at least 3 members".into()));
    }
    let obs_var = obs_error_variance(z, ctx.config);
    let up = rhf_increments(predicted, z, obs_var);
    let ties = up.as_ref().is_some_and(|u| u.ties_broken);
    Ok(finish_update(ensemble, predicted, up.map(|u| u.increments), ties, ctx.population))
}

/// Ensemble-filter cycle: update, inflate, re-probe.
pub(super) fn ensemble_assimilate(
    ensemble: &Ensemble,
    predicted: &[f64],
    z: f64,
    ctx: &CycleContext<'_>,
) -> Result<(Ensemble, AssimilationRecord)> {
    let prior_summary = StateSummary::of(ensemble);
    let update = match ctx.config.kind {
        FilterKind::Enkf => enkf_update(ensemble, predicted, z, ctx)?,
        FilterKind::Eakf => eakf_update(ensemble, predicted, z, ctx)?,
        FilterKind::Rhf => rhf_update(ensemble, predicted, z, ctx)?,
        other => return Err(Error::FilterConfig(format!("{other} is not an ensemble filter"))),
    };
    let mut posterior = inflate(&update.ensemble, ctx.config.inflation_lambda, ctx.config.kind.perturbed_dims(), ctx.population)?;
    let reprobed = apply_reprobe_in_place(&mut posterior, ctx.reprobe, ctx.seed_for(Stream::Reprobe), ctx.population).len();

    let record = AssimilationRecord {
        week: ctx.week,
        observation: z,
        obs_variance: obs_error_variance(z, ctx.config),
        prior_incidence: predicted.to_vec(),
        posterior_incidence: update.posterior_incidence,
        weights: None,
        prior_summary,
        posterior_summary: StateSummary::of(&posterior),
        snapshot: ctx.config.record_snapshots.then(|| posterior.clone()),
        n_eff: None,
        resampled: false,
        degenerate: update.degenerate,
        reprobed,
        log_evidence: None,
    };
    Ok((posterior, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelState;

    fn member(s: f64, d: f64) -> ModelState {
        ModelState { s, i: 10.0, l: 1000.0, d, r0max: 2.0, r0min: 1.0 }
    }

    fn ctx<'a>(cfg: &'a FilterConfig, reprobe: &'a ReprobeConfig) -> CycleContext<'a> {
        CycleContext { config: cfg, reprobe, population: 1e5, week: 0, seed: 9 }
    }

    fn cfg(kind: FilterKind, oev_base: f64) -> FilterConfig {
        let mut c = FilterConfig::new(kind, 1e5);
        c.oev_base = oev_base;
        c.oev_rho = 0.0;
        c
    }

    #[test]
    fn single_particle_keeps_unit_weight() {
        let c = cfg(FilterKind::Pf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::with_weights(vec![member(5e4, 3.0)], vec![1.0]).unwrap();
        for z in [0.0, 10.0, 1e4] {
            let (out, rec) = pf_assimilate(&ens, &[7.0], z, &ctx(&c, &off)).unwrap();
            assert_eq!(out.weights, Some(vec![1.0]));
            assert!(!rec.resampled);
        }
    }

    #[test]
    fn two_particle_weight_arithmetic() {
        let c = cfg(FilterKind::Pf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 3.0), member(6e4, 3.0)]).unwrap();
        let (_, rec) = pf_assimilate(&ens, &[2.0, 10.0], 2.0, &ctx(&c, &off)).unwrap();
        let w = rec.weights.unwrap();
        assert!((w[0] - 1.0).abs() < 1e-13);
        assert!((w[1] - 1.27e-14).abs() < 0.01e-14);
        let n_eff = rec.n_eff.unwrap();
        assert!((n_eff - 1.0).abs() < 1e-12);
        // with three particles the same collapse falls below N/2 and resamples
        let ens3 = Ensemble::new(vec![member(5e4, 3.0), member(6e4, 3.0), member(7e4, 3.0)]).unwrap();
        let (out, rec) = pf_assimilate(&ens3, &[2.0, 10.0, 10.0], 2.0, &ctx(&c, &off)).unwrap();
        assert!(rec.resampled);
        assert!(out.weights.unwrap().iter().all(|&w| w == 1.0 / 3.0));
    }

    #[test]
    fn exact_predictions_keep_uniform_weights() {
        let c = cfg(FilterKind::Pf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 3.0), member(6e4, 3.0)]).unwrap();
        let (out, rec) = pf_assimilate(&ens, &[4.0, 4.0], 4.0, &ctx(&c, &off)).unwrap();
        assert_eq!(out.weights, Some(vec![0.5, 0.5]));
        assert!(!rec.resampled);
    }

    #[test]
    fn eakf_zero_spread_is_skipped() {
        let c = cfg(FilterKind::Eakf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 3.0), member(6e4, 3.0)]).unwrap();
        let up = eakf_update(&ens, &[3.0, 3.0], 10.0, &ctx(&c, &off)).unwrap();
        assert!(up.degenerate);
        assert_eq!(up.ensemble.members, ens.members);
    }

    #[test]
    fn enkf_flat_limit_leaves_state() {
        let c = cfg(FilterKind::Enkf, 1e24);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 3.0), member(6e4, 4.0), member(7e4, 5.0)]).unwrap();
        let up = enkf_update(&ens, &[100.0, 200.0, 300.0], 1000.0, &ctx(&c, &off)).unwrap();
        for (a, b) in up.ensemble.members.iter().zip(&ens.members) {
            assert!((a.s - b.s).abs() <= 1e-6 * b.s);
            assert!((a.d - b.d).abs() <= 1e-6 * b.d);
        }
    }

    #[test]
    fn uncorrelated_dimension_untouched() {
        let c = cfg(FilterKind::Eakf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        // S is symmetric in the observed values, so cov(S, y) = 0
        let ens = Ensemble::new(vec![member(5e4, 2.0), member(1e4, 3.0), member(1e4, 4.0), member(5e4, 5.0)]).unwrap();
        let up = eakf_update(&ens, &[1.0, 2.0, 3.0, 4.0], 10.0, &ctx(&c, &off)).unwrap();
        for (a, b) in up.ensemble.members.iter().zip(&ens.members) {
            assert_eq!(a.s, b.s);
            assert_ne!(a.d, b.d);
        }
    }

    #[test]
    fn rhf_rejects_tiny_ensembles() {
        let c = cfg(FilterKind::Rhf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 2.0), member(1e4, 3.0)]).unwrap();
        assert!(rhf_update(&ens, &[1.0, 2.0], 1.0, &ctx(&c, &off)).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let c = cfg(FilterKind::Pf, 1.0);
        let off = ReprobeConfig::disabled(1e5);
        let ens = Ensemble::new(vec![member(5e4, 2.0), member(1e4, 3.0)]).unwrap();
        assert!(pf_assimilate(&ens, &[1.0], 1.0, &ctx(&c, &off)).is_err());
    }
}
