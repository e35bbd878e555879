//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! model.population = 100000
//! filter.kind = EAKF
//! reprobe.targets = S, D
//! filter.prior_s = 40000, 90000
//! ```
//!
//! Every key is optional. Unknown keys, malformed values and violated
//! invariants are errors carrying the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{Interval, PriorRanges};
use crate::error::{Error, Result};
use crate::filters::{default_members, FilterConfig, FilterKind};
use crate::harness::{forecast_weeks, SweepAxis};
use crate::model::{Dimension, ModelConfig, ModelState};
use crate::reprobe::{ReprobeConfig, MAX_FRACTION};
use crate::truth::{ScenarioKind, TruthScenario};

/// Scenario parameters shared by both scenario kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSettings {
    pub kind: ScenarioKind,
    pub truth: ModelState,
    pub switch_week: usize,
    pub susceptibility_boost: f64,
    pub reseed_infected: f64,
    pub noise_seed: u64,
}

impl ScenarioSettings {
    pub fn default_for(population: f64) -> Self {
        let s = TruthScenario::two_strain(population);
        Self {
            kind: ScenarioKind::TwoStrain,
            truth: s.truth,
            switch_week: s.switch_week,
            susceptibility_boost: s.susceptibility_boost,
            reseed_infected: s.reseed_infected,
            noise_seed: 0,
        }
    }

    pub fn scenario(&self, kind: ScenarioKind) -> TruthScenario {
        let (boost, reseed) = match kind {
            ScenarioKind::Unimodal => (0.0, 0.0),
            ScenarioKind::TwoStrain => (self.susceptibility_boost, self.reseed_infected),
        };
        TruthScenario {
            kind,
            truth: self.truth,
            switch_week: self.switch_week,
            susceptibility_boost: boost,
            reseed_infected: reseed,
            noise_seed: self.noise_seed,
        }
    }

    /// Scenario of the configured kind.
    pub fn primary(&self) -> TruthScenario {
        self.scenario(self.kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub forecast_start_week: usize,
    pub forecast_end_week: usize,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<ScenarioKind>,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<String>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            forecast_start_week: 3,
            forecast_end_week: 27,
            seeds: (0..5).collect(),
            scenarios: vec![ScenarioKind::Unimodal, ScenarioKind::TwoStrain],
            sweep_axis: SweepAxis::Fraction,
            sweep_values: SweepAxis::Fraction.default_values(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Filter settings; `n_members` is resolved by [`RunConfig::filter_config`].
    pub filter: FilterConfig,
    /// Explicit member count overriding the per-kind defaults.
    pub n_members: Option<usize>,
    pub ensemble_members: usize,
    pub particles_sr: usize,
    pub particles_unmodified: usize,
    pub mif_tau_fraction: f64,
    pub pmcmc_proposal_fraction: f64,
    pub scenario: ScenarioSettings,
    pub harness: HarnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        Self::defaults_for(model)
    }
}

impl RunConfig {
    fn defaults_for(model: ModelConfig) -> Self {
        let pop = model.population_f64();
        let filter = FilterConfig::new(FilterKind::Pf, pop);
        Self {
            model,
            filter,
            n_members: None,
            ensemble_members: default_members(FilterKind::Eakf, true),
            particles_sr: default_members(FilterKind::Pf, true),
            particles_unmodified: default_members(FilterKind::Pf, false),
            mif_tau_fraction: 0.05,
            pmcmc_proposal_fraction: 0.02,
            scenario: ScenarioSettings::default_for(pop),
            harness: HarnessConfig::default(),
        }
    }

    /// Member count for `kind` with re-probing on or off.
    pub fn members_for(&self, kind: FilterKind, sr_active: bool) -> usize {
        if let Some(n) = self.n_members {
            return n;
        }
        match (kind.is_particle(), sr_active) {
            (false, _) => self.ensemble_members,
            (true, true) => self.particles_sr,
            (true, false) => self.particles_unmodified,
        }
    }

    /// Resolved filter configuration. `sr` overrides `reprobe.enabled`.
    pub fn filter_config(&self, sr: Option<bool>) -> FilterConfig {
        let mut f = self.filter.clone();
        if let Some(on) = sr {
            f.reprobe.enabled = on;
        }
        f.n_members = self.members_for(f.kind, f.reprobe.is_active());
        f.mif_tau0 = Dimension::PARAMETERS.map(|d| self.mif_tau_fraction * f.priors.get(d).width());
        f.pmcmc_proposal_scale = Dimension::PARAMETERS.map(|d| self.pmcmc_proposal_fraction * f.priors.get(d).width());
        f
    }

    pub fn forecast_weeks(&self) -> Vec<usize> {
        forecast_weeks(self.harness.forecast_start_week, self.harness.forecast_end_week, &self.model)
    }

    pub fn scenarios(&self) -> Vec<TruthScenario> {
        self.harness.scenarios.iter().map(|k| self.scenario.scenario(*k)).collect()
    }

    /// Canonical text form; parsing it returns an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entries(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let f = &self.filter;
        let s = &self.scenario;
        let h = &self.harness;
        let mut e: Vec<(String, String)> = vec![
            ("model.population".into(), m.population.to_string()),
            ("model.season_start_week".into(), m.season_start_week.to_string()),
            ("model.weeks_per_season".into(), m.weeks_per_season.to_string()),
            ("model.steps_per_week".into(), m.steps_per_week.to_string()),
            ("model.forcing_phase".into(), num(m.forcing_phase)),
            ("model.reporting_rate".into(), num(m.reporting_rate)),
            ("filter.kind".into(), f.kind.name().into()),
        ];
        if let Some(n) = self.n_members {
            e.push(("filter.n_members".into(), n.to_string()));
        }
        e.extend([
            ("filter.ensemble_members".into(), self.ensemble_members.to_string()),
            ("filter.particles_sr".into(), self.particles_sr.to_string()),
            ("filter.particles_unmodified".into(), self.particles_unmodified.to_string()),
            ("filter.inflation".into(), num(f.inflation_lambda)),
            ("filter.bandwidth_scale".into(), num(f.bandwidth_scale)),
            ("filter.oev_base".into(), num(f.oev_base)),
            ("filter.oev_rho".into(), num(f.oev_rho)),
            ("filter.mif_iterations".into(), f.mif_iterations.to_string()),
            ("filter.mif_cooling".into(), num(f.mif_cooling)),
            ("filter.mif_tau_fraction".into(), num(self.mif_tau_fraction)),
            ("filter.pmcmc_chain_length".into(), f.pmcmc_chain_length.to_string()),
            ("filter.pmcmc_proposal_fraction".into(), num(self.pmcmc_proposal_fraction)),
        ]);
        for d in Dimension::ALL {
            e.push((format!("filter.prior_{}", d.name().to_ascii_lowercase()), interval(f.priors.get(d))));
        }
        e.push(("reprobe.enabled".into(), f.reprobe.enabled.to_string()));
        e.push(("reprobe.fraction".into(), num(f.reprobe.fraction)));
        e.push(("reprobe.targets".into(), f.reprobe.target_dims().iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")));
        for t in &f.reprobe.targets {
            e.push((format!("reprobe.{}_range", t.dim.name().to_ascii_lowercase()), interval(t.interval)));
        }
        e.extend([
            ("scenario.kind".into(), s.kind.name().into()),
            ("scenario.s0".into(), num(s.truth.s)),
            ("scenario.i0".into(), num(s.truth.i)),
            ("scenario.l".into(), num(s.truth.l)),
            ("scenario.d".into(), num(s.truth.d)),
            ("scenario.r0max".into(), num(s.truth.r0max)),
            ("scenario.r0min".into(), num(s.truth.r0min)),
            ("scenario.switch_week".into(), s.switch_week.to_string()),
            ("scenario.susceptibility_boost".into(), num(s.susceptibility_boost)),
            ("scenario.reseed_infected".into(), num(s.reseed_infected)),
            ("scenario.noise_seed".into(), s.noise_seed.to_string()),
            ("harness.forecast_start_week".into(), h.forecast_start_week.to_string()),
            ("harness.forecast_end_week".into(), h.forecast_end_week.to_string()),
            ("harness.seeds".into(), h.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")),
            ("harness.scenarios".into(), h.scenarios.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")),
            ("harness.sweep_axis".into(), h.sweep_axis.name().into()),
            ("harness.sweep_values".into(), h.sweep_values.join(", ")),
        ]);
        e
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn interval(iv: Interval) -> String {
    format!("{}, {}", num(iv.low), num(iv.high))
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        let Some(e) = self.0.get_mut(key) else { return Ok(None) };
        e.used = true;
        let line = e.line;
        e.value
            .parse::<T>()
            .map(|v| Some((v, line)))
            .map_err(|_| Error::Config { line, msg: format!("`{key}` expects {what}, got `{}`", e.value) })
    }

    fn set<T: FromStr>(&mut self, key: &str, what: &str, slot: &mut T) -> Result<Option<usize>> {
        Ok(self.take::<T>(key, what)?.map(|(v, line)| {
            *slot = v;
            line
        }))
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(Vec<T>, usize)>> {
        let Some(e) = self.0.get_mut(key) else { return Ok(None) };
        e.used = true;
        let line = e.line;
        let items: Vec<&str> = e.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        items
            .iter()
            .map(|s| s.parse::<T>())
            .collect::<std::result::Result<Vec<T>, _>>()
            .map(|v| Some((v, line)))
            .map_err(|_| Error::Config { line, msg: format!("`{key}` expects a comma-separated list of {what}, got `{}`", e.value) })
    }

    fn interval(&mut self, key: &str) -> Result<Option<(Interval, usize)>> {
        match self.list::<f64>(key, "numbers")? {
            None => Ok(None),
            Some((v, line)) if v.len() == 2 => Ok(Some((Interval::new(v[0], v[1]), line))),
            Some((_, line)) => Err(Error::Config { line, msg: format!("`{key}` expects `low, high`") }),
        }
    }

    fn first_line(&self, prefix: &str) -> usize {
        self.0.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, e)| e.line).min().unwrap_or(0)
    }
}

fn at(line: usize, err: Error) -> Error {
    match err {
        e @ Error::Config { .. } => e,
        other => Error::Config { line, msg: other.to_string() },
    }
}

fn seed_list(text: &str) -> Option<Vec<u64>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            out.extend(a..b);
        } else {
            out.push(item.parse().ok()?);
        }
    }
    Some(out)
}

/// Parses configuration text; absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config { line, msg: format!("expected `section.key = value`, got `{content}`") });
        };
        let key = key.trim().to_string();
        if !key.contains('.') {
            return Err(Error::Config { line, msg: format!("key `{key}` has no section") });
        }
        let entry = Entry { line, value: value.trim().to_string(), used: false };
        if let Some(prev) = map.insert(key.clone(), entry) {
            return Err(Error::Config { line, msg: format!("`{key}` already set on line {}", prev.line) });
        }
    }
    let mut e = Entries(map);

    let mut model = ModelConfig::default();
    e.set("model.population", "an integer", &mut model.population)?;
    e.set("model.season_start_week", "an integer", &mut model.season_start_week)?;
    e.set("model.weeks_per_season", "an integer", &mut model.weeks_per_season)?;
    e.set("model.steps_per_week", "an integer", &mut model.steps_per_week)?;
    e.set("model.forcing_phase", "a number", &mut model.forcing_phase)?;
    e.set("model.reporting_rate", "a number", &mut model.reporting_rate)?;
    model.validate().map_err(|err| at(e.first_line("model."), err))?;

    let mut cfg = RunConfig::defaults_for(model);
    let pop = cfg.model.population_f64();
    let f = &mut cfg.filter;
    if let Some((kind, _)) = e.take::<String>("filter.kind", "a filter name")? {
        let line = e.0["filter.kind"].line;
        f.kind = kind.parse().map_err(|err| at(line, err))?;
    }
    cfg.n_members = e.take::<usize>("filter.n_members", "an integer")?.map(|(n, _)| n);
    e.set("filter.ensemble_members", "an integer", &mut cfg.ensemble_members)?;
    e.set("filter.particles_sr", "an integer", &mut cfg.particles_sr)?;
    e.set("filter.particles_unmodified", "an integer", &mut cfg.particles_unmodified)?;
    e.set("filter.inflation", "a number", &mut f.inflation_lambda)?;
    e.set("filter.bandwidth_scale", "a number", &mut f.bandwidth_scale)?;
    e.set("filter.oev_base", "a number", &mut f.oev_base)?;
    e.set("filter.oev_rho", "a number", &mut f.oev_rho)?;
    e.set("filter.mif_iterations", "an integer", &mut f.mif_iterations)?;
    e.set("filter.mif_cooling", "a number", &mut f.mif_cooling)?;
    e.set("filter.mif_tau_fraction", "a number", &mut cfg.mif_tau_fraction)?;
    e.set("filter.pmcmc_chain_length", "an integer", &mut f.pmcmc_chain_length)?;
    e.set("filter.pmcmc_proposal_fraction", "a number", &mut cfg.pmcmc_proposal_fraction)?;
    let mut ranges: [Interval; 6] = Dimension::ALL.map(|d| f.priors.get(d));
    for d in Dimension::ALL {
        if let Some((iv, _)) = e.interval(&format!("filter.prior_{}", d.name().to_ascii_lowercase()))? {
            ranges[d.index()] = iv;
        }
    }
    f.priors = PriorRanges::new(ranges, pop).map_err(|err| at(e.first_line("filter.prior_"), err))?;

    let r = &mut f.reprobe;
    e.set("reprobe.enabled", "true or false", &mut r.enabled)?;
    if let Some(line) = e.set("reprobe.fraction", "a number", &mut r.fraction)? {
        if !(0.0..=MAX_FRACTION).contains(&r.fraction) {
            return Err(Error::Config { line, msg: format!("reprobe.fraction {} outside [0, {MAX_FRACTION}]", r.fraction) });
        }
    }
    if let Some((dims, line)) = e.list::<Dimension>("reprobe.targets", "dimension names")? {
        let t = ReprobeConfig::with_targets(pop, &dims).map_err(|err| at(line, err))?;
        r.targets = t.targets;
    }
    for d in Dimension::ALL {
        let key = format!("reprobe.{}_range", d.name().to_ascii_lowercase());
        if let Some((iv, line)) = e.interval(&key)? {
            match r.targets.iter_mut().find(|t| t.dim == d) {
                Some(t) => t.interval = iv,
                None => return Err(Error::Config { line, msg: format!("`{key}` given but {d} is not a target") }),
            }
        }
    }
    r.validate(pop).map_err(|err| at(e.first_line("reprobe."), err))?;

    let s = &mut cfg.scenario;
    if let Some((kind, line)) = e.take::<String>("scenario.kind", "a scenario kind")? {
        s.kind = kind.parse().map_err(|err| at(line, err))?;
    }
    e.set("scenario.s0", "a number", &mut s.truth.s)?;
    e.set("scenario.i0", "a number", &mut s.truth.i)?;
    e.set("scenario.l", "a number", &mut s.truth.l)?;
    e.set("scenario.d", "a number", &mut s.truth.d)?;
    e.set("scenario.r0max", "a number", &mut s.truth.r0max)?;
    e.set("scenario.r0min", "a number", &mut s.truth.r0min)?;
    e.set("scenario.switch_week", "an integer", &mut s.switch_week)?;
    e.set("scenario.susceptibility_boost", "a number", &mut s.susceptibility_boost)?;
    e.set("scenario.reseed_infected", "a number", &mut s.reseed_infected)?;
    e.set("scenario.noise_seed", "an integer", &mut s.noise_seed)?;
    for kind in [ScenarioKind::Unimodal, ScenarioKind::TwoStrain] {
        s.scenario(kind).validate(&cfg.model).map_err(|err| at(e.first_line("scenario."), err))?;
    }

    let h = &mut cfg.harness;
    e.set("harness.forecast_start_week", "an integer", &mut h.forecast_start_week)?;
    e.set("harness.forecast_end_week", "an integer", &mut h.forecast_end_week)?;
    if let Some(entry) = e.0.get_mut("harness.seeds") {
        entry.used = true;
        h.seeds = seed_list(&entry.value)
            .ok_or_else(|| Error::Config { line: entry.line, msg: format!("`harness.seeds` expects integers or `a..b` ranges, got `{}`", entry.value) })?;
    }
    if let Some((kinds, line)) = e.list::<String>("harness.scenarios", "scenario kinds")? {
        h.scenarios = kinds.iter().map(|k| k.parse()).collect::<Result<Vec<_>>>().map_err(|err| at(line, err))?;
    }
    if let Some((axis, line)) = e.take::<String>("harness.sweep_axis", "a sweep axis")? {
        h.sweep_axis = axis.parse().map_err(|err| at(line, err))?;
        h.sweep_values = h.sweep_axis.default_values();
    }
    if let Some((values, _)) = e.list::<String>("harness.sweep_values", "values")? {
        h.sweep_values = values;
    }
    if h.forecast_start_week > h.forecast_end_week || h.forecast_end_week >= cfg.model.weeks_per_season {
        return Err(Error::Config {
            line: e.first_line("harness.forecast"),
            msg: "forecast weeks must satisfy start <= end < weeks_per_season".into(),
        });
    }
    if h.seeds.is_empty() || h.scenarios.is_empty() || h.sweep_values.is_empty() {
        return Err(Error::Config { line: e.first_line("harness."), msg: "seeds, scenarios and sweep_values must be nonempty".into() });
    }
    for v in h.sweep_values.clone() {
        h.sweep_axis.apply(&cfg.filter, &v).map_err(|err| at(e.first_line("harness.sweep"), err))?;
    }

    if let Some((key, entry)) = e.0.iter().find(|(_, v)| !v.used) {
        return Err(Error::Config { line: entry.line, msg: format!("unknown key `{key}`") });
    }
    for kind in [false, true] {
        let fc = cfg.filter_config(Some(kind));
        fc.validate().map_err(|err| at(e.first_line("filter."), err))?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.members_for(FilterKind::Eakf, true), 300);
        assert_eq!(c.members_for(FilterKind::Pf, true), 3000);
        assert_eq!(c.members_for(FilterKind::Pf, false), 10_000);
        assert_eq!(c.filter.reprobe.fraction, 0.02);
        assert_eq!(c.filter.reprobe.target_dims(), vec![Dimension::S]);
        assert_eq!(c.forecast_weeks(), (3..=27).collect::<Vec<_>>());
    }

    #[test]
    fn fraction_guard() {
        let err = parse_config("\n\nreprobe.fraction = 0.2").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config("filter.kind = EAKF\nreprobe.targets = S, D\nharness.seeds = 0..3, 9").unwrap();
        assert_eq!(c.filter.kind, FilterKind::Eakf);
        assert_eq!(c.harness.seeds, vec![0, 1, 2, 9]);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        assert_eq!(parse_config(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn hash_ignores_key_order_and_comments() {
        let a = parse_config("filter.kind = RHF\nreprobe.fraction = 0.04\n").unwrap();
        let b = parse_config("# swapped\nreprobe.fraction = 0.04\n\nfilter.kind = rhf  # trailing\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("filter.kind = PF\nfilter.knd = EAKF", 2),
            ("model.population = lots", 1),
            ("\nfilter.kind = UKF", 2),
            ("reprobe.targets = S\nreprobe.targets = D", 2),
            ("no equals sign", 1),
            ("\n\nfilter.prior_d = 7, 1", 3),
            ("scenario.switch_week = 60", 1),
            ("harness.forecast_end_week = 52", 1),
        ];
        for (text, line) in cases {
            match parse_config(text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn population_scales_defaults() {
        let c = parse_config("model.population = 200000").unwrap();
        assert_eq!(c.filter.priors.get(Dimension::S).high, 180_000.0);
        assert_eq!(c.scenario.truth.s, 120_000.0);
        assert_eq!(c.filter.reprobe.targets[0].interval.low, 100_000.0);
    }

    #[test]
    fn sr_override_picks_particle_count() {
        let c = parse_config("filter.kind = PF").unwrap();
        assert_eq!(c.filter_config(Some(false)).n_members, 10_000);
        assert_eq!(c.filter_config(Some(true)).n_members, 3000);
        let c = parse_config("filter.kind = PF\nfilter.n_members = 50").unwrap();
        assert_eq!(c.filter_config(Some(false)).n_members, 50);
    }
}
