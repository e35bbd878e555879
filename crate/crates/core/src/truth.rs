//! Synthetic outbreaks and noisy observation series.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::oev;
use crate::model::{observe, simulate_week, ModelConfig, ModelState};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    Unimodal,
    TwoStrain,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Unimodal => "unimodal",
            ScenarioKind::TwoStrain => "two_strain",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unimodal" => Ok(ScenarioKind::Unimodal),
            "two_strain" | "two-strain" | "twostrain" => Ok(ScenarioKind::TwoStrain),
            other => Err(Error::Scenario(format!("unknown scenario kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthScenario {
    pub kind: ScenarioKind,
    /// State at the start of the season.
    pub truth: ModelState,
    /// Week at whose start the susceptible pool is boosted (two-strain only).
    pub switch_week: usize,
    /// Fraction of the population moved back into S at the switch.
    pub susceptibility_boost: f64,
    /// Persons added to I at the switch.
    pub reseed_infected: f64,
    pub noise_seed: u64,
}

impl TruthScenario {
    pub fn unimodal(population: f64) -> Self {
        Self {
            kind: ScenarioKind::Unimodal,
            truth: ModelState {
                s: 0.6 * population,
                i: 1e-4 * population,
                l: 1460.0,
                d: 3.0,
                r0max: 2.5,
                r0min: 1.1,
            },
            switch_week: 13,
            susceptibility_boost: 0.0,
            reseed_infected: 0.0,
            noise_seed: 0,
        }
    }

    pub fn two_strain(population: f64) -> Self {
        Self {
            kind: ScenarioKind::TwoStrain,
            susceptibility_boost: 0.3,
            reseed_infected: 50.0,
            ..Self::unimodal(population)
        }
    }

    pub fn default_for(kind: ScenarioKind, population: f64) -> Self {
        match kind {
            ScenarioKind::Unimodal => Self::unimodal(population),
            ScenarioKind::TwoStrain => Self::two_strain(population),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let population = model.population_f64();
        if !self.truth.satisfies_invariants(population) {
            return Err(Error::Scenario("truth state violates model bounds".into()));
        }
        if self.kind == ScenarioKind::TwoStrain {
            if self.switch_week >= model.weeks_per_season {
                return Err(Error::Scenario(format!(
                    "switch_week {} outside a {}-week season",
                    self.switch_week, model.weeks_per_season
                )));
            }
            if !(0.0..=0.5).contains(&self.susceptibility_boost) {
                return Err(Error::Scenario("susceptibility_boost must lie in [0, 0.5]".into()));
            }
            if !(self.reseed_infected >= 0.0 && self.reseed_infected <= population) {
                return Err(Error::Scenario("reseed_infected must lie in [0, population]".into()));
            }
        }
        Ok(())
    }
}

/// True weekly incidence (per 100k) and the state at the end of each week.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSeries {
    pub incidence: Vec<f64>,
    pub states: Vec<ModelState>,
}

/// Integrates the scenario over one season. No randomness is involved.
pub fn generate_truth(scenario: &TruthScenario, model: &ModelConfig) -> Result<TruthSeries> {
    model.validate()?;
    scenario.validate(model)?;
    let population = model.population_f64();
    let mut state = scenario.truth;
    let mut incidence = Vec::with_capacity(model.weeks_per_season);
    let mut states = Vec::with_capacity(model.weeks_per_season);
    for week in 0..model.weeks_per_season {
        if scenario.kind == ScenarioKind::TwoStrain && week == scenario.switch_week {
            state.s = (state.s + scenario.susceptibility_boost * population).min(population - state.i);
            state.i += scenario.reseed_infected;
            state.clamp(population);
        }
        let (next, inc) = simulate_week(&state, week, model)?;
        state = next;
        incidence.push(observe(inc, model));
        states.push(state);
    }
    Ok(TruthSeries { incidence, states })
}

/// Observation error variance model used to corrupt the truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub oev_base: f64,
    pub oev_rho: f64,
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self { oev_base: 1.0, oev_rho: 0.2 }
    }
}

impl ObservationNoise {
    pub fn variance(&self, value: f64) -> f64 {
        oev(value, self.oev_base, self.oev_rho)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    /// Observed incidence per 100k, one value per week.
    pub observed: Vec<f64>,
    /// Variance used to generate each week's noise.
    pub oev: Vec<f64>,
    /// Calendar week of the first observation.
    pub start_week: u32,
}

impl ObservationSeries {
    pub fn new(observed: Vec<f64>, oev: Vec<f64>, start_week: u32) -> Result<Self> {
        if observed.len() != oev.len() {
            return Err(Error::LengthMismatch(observed.len(), oev.len()));
        }
        if observed.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Scenario("observations must be finite and nonnegative".into()));
        }
        if oev.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Scenario("observation error variances must be positive".into()));
        }
        Ok(Self { observed, oev, start_week })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// The first `weeks` observations.
    pub fn truncated(&self, weeks: usize) -> Self {
        let k = weeks.min(self.len());
        Self { observed: self.observed[..k].to_vec(), oev: self.oev[..k].to_vec(), start_week: self.start_week }
    }
}

/// Adds Gaussian noise with variance `noise.variance(true_k)` to each week,
/// flooring at zero.
pub fn generate_observations(true_incidence: &[f64], noise: &ObservationNoise, start_week: u32, rng_seed: u64) -> Result<ObservationSeries> {
    if true_incidence.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Scenario("true incidence must be finite and nonnegative".into()));
    }
    let mut rng: SimRng = rng_from_seed(rng_seed);
    let mut observed = Vec::with_capacity(true_incidence.len());
    let mut variances = Vec::with_capacity(true_incidence.len());
    for &truth in true_incidence {
        let var = noise.variance(truth);
        let e: f64 = StandardNormal.sample(&mut rng);
        observed.push((truth + var.sqrt() * e).max(0.0));
        variances.push(var);
    }
    ObservationSeries::new(observed, variances, start_week)
}

/// Indices of local maxima above `threshold * max`.
pub fn local_maxima(series: &[f64], threshold: f64) -> Vec<usize> {
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = series.len();
    (0..n)
        .filter(|&k| {
            let left = k == 0 || series[k] > series[k - 1];
            let right = k + 1 == n || series[k] >= series[k + 1];
            left && right && series[k] > threshold * max
        })
        .collect()
}
