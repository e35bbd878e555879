//! Train-then-predict forecasting and evaluation metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{weighted_mean, Ensemble};
use crate::error::{Error, Result};
use crate::filters::{propagate, run_filter_season, FilterConfig, FilterKind, SeasonFilter, SeasonRun};
use crate::model::{Dimension, ModelConfig};
use crate::reprobe::ReprobeConfig;
use crate::rng::{derive_seed, Stream};
use crate::stats::{paired_t, PairedSummary};
use crate::truth::{generate_observations, generate_truth, ObservationNoise, ObservationSeries, TruthScenario, TruthSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub scenario: String,
    /// Last training week (0-based season week).
    pub forecast_week: usize,
    /// Fitted means through `forecast_week`, free-run means afterwards.
    pub trajectory: Vec<f64>,
    pub predicted_peak: usize,
    pub observed_peak: usize,
    pub accurate: bool,
    /// RMS of `trajectory` against the observations over the season.
    pub rms: f64,
    pub kind: FilterKind,
    pub sr_enabled: bool,
    pub seed: u64,
}

/// Root mean squared difference; errors on unequal lengths.
pub fn rms_error(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = predicted.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

/// Within one week of the observed peak.
pub fn peak_accuracy(predicted_peak: usize, observed_peak: usize) -> bool {
    predicted_peak.abs_diff(observed_peak) <= 1
}

/// Index of the largest value, earliest on ties.
pub fn peak_week(series: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in series.iter().enumerate() {
        if *v > series[best] {
            best = k;
        }
    }
    best
}

/// Weighted mean incidence of each free-run week after `from_week`.
fn free_run(mut ensemble: Ensemble, from_week: usize, model: &ModelConfig) -> Result<Vec<f64>> {
    let mut means = Vec::with_capacity(model.weeks_per_season.saturating_sub(from_week));
    for week in from_week..model.weeks_per_season {
        let predicted = propagate(&mut ensemble, week, model)?;
        means.push(weighted_mean(&predicted, ensemble.weights.as_deref()));
    }
    Ok(means)
}

fn build_result(fitted: Vec<f64>, free: Vec<f64>, observations: &ObservationSeries, config: &FilterConfig) -> Result<ForecastResult> {
    let forecast_week = fitted.len() - 1;
    let mut trajectory = fitted;
    trajectory.extend(free);
    let observed = &observations.observed;
    let rms = rms_error(&trajectory[..observed.len().min(trajectory.len())], &observed[..observed.len().min(trajectory.len())])?;
    let predicted_peak = peak_week(&trajectory);
    let observed_peak = peak_week(observed);
    Ok(ForecastResult {
        scenario: String::new(),
        forecast_week,
        trajectory,
        predicted_peak,
        observed_peak,
        accurate: peak_accuracy(predicted_peak, observed_peak),
        rms,
        kind: config.kind,
        sr_enabled: config.reprobe.is_active(),
        seed: config.rng_seed,
    })
}

fn check_training(observations: &ObservationSeries, week: usize, model: &ModelConfig) -> Result<()> {
    if week >= observations.len() || week >= model.weeks_per_season {
        return Err(Error::FilterConfig(format!(
            "training week {week} outside the {}-week observation range",
            observations.len().min(model.weeks_per_season)
        )));
    }
    Ok(())
}

/// Fits weeks `0..=train_through_week`, then integrates every member to
/// the end of the season with no further updates.
pub fn run_forecast(observations: &ObservationSeries, train_through_week: usize, config: &FilterConfig, model: &ModelConfig) -> Result<ForecastResult> {
    check_training(observations, train_through_week, model)?;
    let run = run_filter_season(&observations.truncated(train_through_week + 1), config, model)?;
    let fitted = run.posterior_mean_trajectory();
    let free = free_run(run.ensemble, train_through_week + 1, model)?;
    build_result(fitted, free, observations, config)
}

/// [`run_forecast`] for several training lengths. Single-pass kinds reuse
/// one filtering pass, which gives the same results as separate runs.
pub fn forecast_series(observations: &ObservationSeries, weeks: &[usize], config: &FilterConfig, model: &ModelConfig) -> Result<Vec<ForecastResult>> {
    for &w in weeks {
        check_training(observations, w, model)?;
    }
    if config.kind.fixed_parameters() {
        return weeks.iter().map(|&w| run_forecast(observations, w, config, model)).collect();
    }
    config.validate()?;
    model.validate()?;
    let last = weeks.iter().copied().max();
    let Some(last) = last else { return Ok(Vec::new()) };
    let ensemble = crate::ensemble::initialize(config.n_members, &config.priors, derive_seed(config.rng_seed, Stream::Init, 0))?;
    let mut filter = SeasonFilter::new(ensemble, config, model, derive_seed(config.rng_seed, Stream::Filter, 0));
    let mut snapshots: BTreeMap<usize, (Vec<f64>, Ensemble)> = BTreeMap::new();
    for week in 0..=last {
        filter.assimilate(observations.observed[week])?;
        if weeks.contains(&week) {
            let fitted = filter.records().iter().map(|r| r.posterior_mean()).collect();
            snapshots.insert(week, (fitted, filter.ensemble().clone()));
        }
    }
    weeks
        .iter()
        .map(|w| {
            let (fitted, ens) = snapshots[w].clone();
            let free = free_run(ens, w + 1, model)?;
            build_result(fitted, free, observations, config)
        })
        .collect()
}

/// RMS of the posterior mean against the observations over a fitted run.
pub fn fit_rms(run: &SeasonRun, observations: &[f64]) -> Result<f64> {
    rms_error(&run.posterior_mean_trajectory(), &observations[..run.records.len().min(observations.len())])
}

/// Truth and noisy observations for one scenario seed.
pub fn scenario_observations(scenario: &TruthScenario, model: &ModelConfig, noise: &ObservationNoise, seed: u64) -> Result<(TruthSeries, ObservationSeries)> {
    let truth = generate_truth(scenario, model)?;
    let obs_seed = derive_seed(seed ^ scenario.noise_seed, Stream::Observation, 0);
    let obs = generate_observations(&truth.incidence, noise, model.season_start_week, obs_seed)?;
    Ok((truth, obs))
}

/// Copy of `base` whose filter randomness is keyed to the trial seed.
pub fn seeded_config(base: &FilterConfig, seed: u64) -> FilterConfig {
    let mut cfg = base.clone();
    cfg.rng_seed = derive_seed(seed, Stream::Filter, 0);
    cfg
}

pub fn noise_of(config: &FilterConfig) -> ObservationNoise {
    ObservationNoise { oev_base: config.oev_base, oev_rho: config.oev_rho }
}

/// Fit RMS and forecasts for one (scenario, seed) trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub scenario: String,
    pub seed: u64,
    pub fit_rms: f64,
    pub forecasts: Vec<ForecastResult>,
}

impl TrialOutcome {
    pub fn mean_accuracy(&self) -> f64 {
        if self.forecasts.is_empty() {
            return f64::NAN;
        }
        self.forecasts.iter().filter(|f| f.accurate).count() as f64 / self.forecasts.len() as f64
    }
}

/// Runs the season fit and the forecasts at `weeks` for one trial.
pub fn evaluate_trial(scenario: &TruthScenario, base: &FilterConfig, model: &ModelConfig, seed: u64, weeks: &[usize]) -> Result<TrialOutcome> {
    let (_, obs) = scenario_observations(scenario, model, &noise_of(base), seed)?;
    let cfg = seeded_config(base, seed);
    let run = run_filter_season(&obs, &cfg, model)?;
    let fit = fit_rms(&run, &obs.observed)?;
    let mut forecasts = forecast_series(&obs, weeks, &cfg, model)?;
    for f in &mut forecasts {
        f.scenario = scenario.name().to_string();
        f.seed = seed;
    }
    Ok(TrialOutcome { scenario: scenario.name().to_string(), seed, fit_rms: fit, forecasts })
}

/// Forecast weeks `start..=end`, clipped to the season.
pub fn forecast_weeks(start: usize, end: usize, model: &ModelConfig) -> Vec<usize> {
    (start..=end.min(model.weeks_per_season.saturating_sub(1))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeekComparison {
    pub forecast_week: usize,
    pub summary: PairedSummary,
}

/// Paired accuracy comparison of re-probed against unmodified forecasts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Over all (scenario, week, seed) pairs.
    pub overall: PairedSummary,
    pub per_week: Vec<WeekComparison>,
    /// Over (scenario, week) cells after averaging accuracy across seeds.
    pub cell_means: PairedSummary,
}

type PairKey = (String, usize, u64);

fn keyed(results: &[ForecastResult]) -> Result<BTreeMap<PairKey, bool>> {
    let mut map = BTreeMap::new();
    for r in results {
        if map.insert((r.scenario.clone(), r.forecast_week, r.seed), r.accurate).is_some() {
            return Err(Error::Unpaired(format!("duplicate result for {} week {} seed {}", r.scenario, r.forecast_week, r.seed)));
        }
    }
    Ok(map)
}

fn acc(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

/// Pairs results by (scenario, forecast week, seed) and summarizes
/// `accuracy_sr - accuracy_unmod`.
pub fn compare_paired(results_sr: &[ForecastResult], results_unmod: &[ForecastResult]) -> Result<Comparison> {
    let a = keyed(results_sr)?;
    let b = keyed(results_unmod)?;
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)).or_else(|| b.keys().find(|k| !a.contains_key(*k))) {
        return Err(Error::Unpaired(format!("no partner for {} week {} seed {}", k.0, k.1, k.2)));
    }
    let diffs: BTreeMap<&PairKey, f64> = a.iter().map(|(k, v)| (k, acc(*v) - acc(b[k]))).collect();

    let mut weeks: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut cells: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for (k, d) in &diffs {
        weeks.entry(k.1).or_default().push(*d);
        cells.entry((k.0.as_str(), k.1)).or_default().push(*d);
    }
    let all: Vec<f64> = diffs.values().copied().collect();
    let cell_diffs: Vec<f64> = cells.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    Ok(Comparison {
        overall: paired_t(&all),
        per_week: weeks.into_iter().map(|(w, d)| WeekComparison { forecast_week: w, summary: paired_t(&d) }).collect(),
        cell_means: paired_t(&cell_diffs),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Fraction,
    Particles,
    Targets,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Fraction => "fraction",
            SweepAxis::Particles => "particles",
            SweepAxis::Targets => "targets",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::Fraction => &["0.01", "0.02", "0.04"],
            SweepAxis::Particles => &["300", "3000", "10000"],
            SweepAxis::Targets => &["S", "D", "R0max", "S+D", "S+R0max", "D+R0max", "S+D+R0max"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &FilterConfig, value: &str) -> Result<FilterConfig> {
        let mut cfg = base.clone();
        let bad = || Error::FilterConfig(format!("invalid {} value `{value}`", self.name()));
        match self {
            SweepAxis::Fraction => {
                cfg.reprobe.fraction = value.trim().parse().map_err(|_| bad())?;
            }
            SweepAxis::Particles => {
                cfg.n_members = value.trim().parse().map_err(|_| bad())?;
            }
            SweepAxis::Targets => {
                let dims = value.split('+').map(str::parse).collect::<Result<Vec<Dimension>>>()?;
                let t = ReprobeConfig::with_targets(cfg.priors.population(), &dims)?;
                cfg.reprobe.targets = t.targets;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fraction" => Ok(SweepAxis::Fraction),
            "particles" => Ok(SweepAxis::Particles),
            "targets" => Ok(SweepAxis::Targets),
            other => Err(Error::FilterConfig(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// One (axis value, scenario, seed) trial of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub scenario: String,
    pub seed: u64,
    pub fit_rms: f64,
    pub accuracy: f64,
}

/// Per-(value, scenario) means over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub scenario: String,
    pub n: usize,
    pub mean_rms: f64,
    pub mean_accuracy: f64,
}

/// Cartesian run over `values x scenarios x seeds`, rows in that order.
pub fn sweep(
    axis: SweepAxis,
    values: &[String],
    base: &FilterConfig,
    scenarios: &[TruthScenario],
    seeds: &[u64],
    weeks: &[usize],
    model: &ModelConfig,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || scenarios.is_empty() || seeds.is_empty() {
        return Err(Error::FilterConfig("sweep axes must be nonempty".into()));
    }
    let configs = values.iter().map(|v| axis.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (vi, _) in values.iter().enumerate() {
        for sc in scenarios {
            for &seed in seeds {
                jobs.push((vi, sc, seed));
            }
        }
    }
    jobs.par_iter()
        .map(|&(vi, sc, seed)| {
            let t = evaluate_trial(sc, &configs[vi], model, seed, weeks)?;
            Ok(SweepRow {
                axis,
                value: values[vi].clone(),
                scenario: t.scenario.clone(),
                seed,
                fit_rms: t.fit_rms,
                accuracy: t.mean_accuracy(),
            })
        })
        .collect()
}

/// Aggregates sweep rows into cells, keeping first-appearance order.
pub fn sweep_cells(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut cells: Vec<SweepCell> = Vec::new();
    for r in rows {
        let cell = match cells.iter_mut().find(|c| c.value == r.value && c.scenario == r.scenario) {
            Some(c) => c,
            None => {
                cells.push(SweepCell { value: r.value.clone(), scenario: r.scenario.clone(), n: 0, mean_rms: 0.0, mean_accuracy: 0.0 });
                cells.last_mut().expect("just pushed")
            }
        };
        cell.n += 1;
        cell.mean_rms += (r.fit_rms - cell.mean_rms) / cell.n as f64;
        cell.mean_accuracy += (r.accuracy - cell.mean_accuracy) / cell.n as f64;
    }
    cells
}
