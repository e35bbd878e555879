//! Space re-probing.
//!
//! After each update a small random subset of members has one or more chosen
//! dimensions overwritten with fresh uniform draws, so the collection keeps
//! trajectories far from its current region of convergence. Weights are left
//! untouched.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, Interval};
use crate::error::{Error, Result};
use crate::model::Dimension;
use crate::rng::rng_from_seed;

/// Upper guard on the replacement fraction.
pub const MAX_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprobeTarget {
    pub dim: Dimension,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprobeConfig {
    pub enabled: bool,
    pub fraction: f64,
    pub targets: Vec<ReprobeTarget>,
}

impl ReprobeConfig {
    /// 2% of members, `S` redrawn from 50-60% of the population.
    pub fn default_for(population: f64) -> Self {
        Self {
            enabled: true,
            fraction: 0.02,
            targets: vec![ReprobeTarget {
                dim: Dimension::S,
                interval: default_target(Dimension::S, population).expect("S has a default"),
            }],
        }
    }

    pub fn disabled(population: f64) -> Self {
        Self { enabled: false, ..Self::default_for(population) }
    }

    pub fn with_targets(population: f64, dims: &[Dimension]) -> Result<Self> {
        let targets = dims
            .iter()
            .map(|&dim| Ok(ReprobeTarget { dim, interval: default_target(dim, population)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { targets, ..Self::default_for(population) })
    }

    /// SR changes the run only when this is true.
    pub fn is_active(&self) -> bool {
        self.enabled && self.fraction > 0.0 && !self.targets.is_empty()
    }

    pub fn validate(&self, population: f64) -> Result<()> {
        if !(0.0..=MAX_FRACTION).contains(&self.fraction) {
            return Err(Error::Reprobe(format!(
                "fraction {} outside [0, {MAX_FRACTION}]",
                self.fraction
            )));
        }
        for (k, t) in self.targets.iter().enumerate() {
            t.interval.validate(t.dim, population)?;
            if self.targets[..k].iter().any(|o| o.dim == t.dim) {
                return Err(Error::Reprobe(format!("duplicate target {}", t.dim)));
            }
        }
        Ok(())
    }

    /// Number of members re-probed per cycle for an ensemble of `n`.
    pub fn count(&self, n: usize) -> usize {
        if !self.is_active() {
            return 0;
        }
        ((self.fraction * n as f64).round() as usize).clamp(1, n)
    }

    pub fn target_dims(&self) -> Vec<Dimension> {
        self.targets.iter().map(|t| t.dim).collect()
    }

    /// Keeps only targets whose dimension passes `keep`.
    pub fn restricted(&self, keep: impl Fn(Dimension) -> bool) -> Self {
        Self {
            targets: self.targets.iter().copied().filter(|t| keep(t.dim)).collect(),
            ..self.clone()
        }
    }
}

/// Default replacement interval for a variable name.
pub fn default_target(dim: Dimension, population: f64) -> Result<Interval> {
    match dim {
        Dimension::S => Ok(Interval::new(0.5 * population, 0.6 * population)),
        Dimension::D => Ok(Interval::new(2.0, 7.0)),
        Dimension::R0max => Ok(Interval::new(2.0, 5.0)),
        other => Err(Error::UnknownVariable(format!("no default re-probe interval for {other}"))),
    }
}

/// Same as [`default_target`], keyed by name (`S`, `D`, `R0max`).
pub fn default_targets(variable_name: &str, population: f64) -> Result<Interval> {
    let dim: Dimension = variable_name.parse()?;
    default_target(dim, population)
}

/// Indices of members selected for re-probing.
pub fn select_members(n: usize, config: &ReprobeConfig, rng_seed: u64) -> Vec<usize> {
    let m = config.count(n);
    if m == 0 {
        return Vec::new();
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut picked = sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Replaces the target dimensions of `round(fraction * N)` distinct members
/// with uniform draws.
pub fn apply_reprobe(ensemble: &Ensemble, config: &ReprobeConfig, rng_seed: u64, population: f64) -> Ensemble {
    let mut out = ensemble.clone();
    apply_reprobe_in_place(&mut out, config, rng_seed, population);
    out
}

pub fn apply_reprobe_in_place(ensemble: &mut Ensemble, config: &ReprobeConfig, rng_seed: u64, population: f64) -> Vec<usize> {
    if !config.is_active() {
        return Vec::new();
    }
    let n = ensemble.len();
    let m = config.count(n);
    let mut rng = rng_from_seed(rng_seed);
    let mut picked = sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    for &idx in &picked {
        let member = &mut ensemble.members[idx];
        for t in &config.targets {
            member.set(t.dim, rng.random_range(t.interval.low..t.interval.high));
        }
        member.clamp(population);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{initialize, PriorRanges};

    const POP: f64 = 100_000.0;

    fn base(n: usize) -> Ensemble {
        initialize(n, &PriorRanges::default_for(POP), 42).unwrap()
    }

    fn changed(a: &Ensemble, b: &Ensemble) -> Vec<usize> {
        (0..a.len()).filter(|&i| a.members[i] != b.members[i]).collect()
    }

    #[test]
    fn replaces_sixty_of_three_thousand() {
        let ens = base(3000);
        let cfg = ReprobeConfig::default_for(POP);
        let out = apply_reprobe(&ens, &cfg, 7, POP);
        let idx = changed(&ens, &out);
        assert_eq!(idx.len(), 60);
        for &i in &idx {
            let (a, b) = (ens.members[i], out.members[i]);
            assert!(b.s >= 50_000.0 && b.s <= 60_000.0);
            assert_eq!((a.i, a.l, a.d, a.r0max, a.r0min), (b.i, b.l, b.d, b.r0max, b.r0min));
        }
        assert_eq!(ens.weights, out.weights);
    }

    #[test]
    fn identity_when_inactive() {
        let ens = base(300);
        let mut cfg = ReprobeConfig::default_for(POP);
        cfg.fraction = 0.0;
        assert_eq!(apply_reprobe(&ens, &cfg, 1, POP), ens);
        let off = ReprobeConfig::disabled(POP);
        assert_eq!(apply_reprobe(&ens, &off, 1, POP), ens);
    }

    #[test]
    fn two_parameter_targets() {
        let ens = base(300);
        let cfg = ReprobeConfig::with_targets(POP, &[Dimension::D, Dimension::R0max]).unwrap();
        let out = apply_reprobe(&ens, &cfg, 3, POP);
        let idx = changed(&ens, &out);
        assert_eq!(idx.len(), 6);
        for &i in &idx {
            let (a, b) = (ens.members[i], out.members[i]);
            assert!(b.d > 2.0 && b.d < 7.0 && b.d != a.d);
            assert!(b.r0max > 2.0 && b.r0max < 5.0 && b.r0max != a.r0max);
            assert_eq!((a.s, a.i, a.l), (b.s, b.i, b.l));
        }
    }

    #[test]
    fn defaults_by_name() {
        assert_eq!(default_targets("S", POP).unwrap(), Interval::new(50_000.0, 60_000.0));
        assert_eq!(default_targets("D", POP).unwrap(), Interval::new(2.0, 7.0));
        assert_eq!(default_targets("R0max", POP).unwrap(), Interval::new(2.0, 5.0));
        assert!(default_targets("L", POP).is_err());
        assert!(default_targets("gamma", POP).is_err());
    }

    #[test]
    fn count_rules() {
        let mut cfg = ReprobeConfig::default_for(POP);
        assert_eq!(cfg.count(3000), 60);
        assert_eq!(cfg.count(10), 1);
        cfg.fraction = 0.01;
        assert_eq!(cfg.count(30), 1);
        cfg.fraction = 0.2;
        assert!(cfg.validate(POP).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let ens = base(300);
        let cfg = ReprobeConfig::default_for(POP);
        assert_eq!(apply_reprobe(&ens, &cfg, 5, POP), apply_reprobe(&ens, &cfg, 5, POP));
        assert_ne!(apply_reprobe(&ens, &cfg, 5, POP), apply_reprobe(&ens, &cfg, 6, POP));
    }

    #[test]
    fn selection_is_uniform() {
        let n = 100;
        let cfg = ReprobeConfig::default_for(POP);
        let trials = 10_000;
        let mut hits = vec![0usize; n];
        for seed in 0..trials {
            for i in select_members(n, &cfg, seed as u64) {
                hits[i] += 1;
            }
        }
        let p = cfg.count(n) as f64 / n as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for h in hits {
            let freq = h as f64 / trials as f64;
            assert!((freq - p).abs() < 3.5 * se, "freq {freq}");
        }
    }

    #[test]
    fn replaced_values_are_uniform() {
        let ens = base(50);
        let mut cfg = ReprobeConfig::default_for(POP);
        cfg.fraction = 0.02;
        let mut draws = Vec::with_capacity(10_000);
        for seed in 0..10_000u64 {
            let out = apply_reprobe(&ens, &cfg, seed, POP);
            let idx = changed(&ens, &out);
            draws.push((out.members[idx[0]].s - 50_000.0) / 10_000.0);
        }
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(k, &x)| ((k as f64 + 1.0) / n - x).abs().max((x - k as f64 / n).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(ks < 1.628 / n.sqrt(), "KS {ks}");
    }
}
