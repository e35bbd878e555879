//! Particle and ensemble collections: initialization, weights, resampling,
//! regularization and inflation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimension, ModelState};
use crate::rng::rng_from_seed;

/// Open interval `(low, high)` with `low < high`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    /// Checks `low < high` and that the interval lies inside the clamp
    /// bounds of `dim`.
    pub fn validate(&self, dim: Dimension, population: f64) -> Result<()> {
        let (lo, hi) = dim.bounds(population);
        let ok = self.low.is_finite()
            && self.high.is_finite()
            && self.low < self.high
            && self.low >= lo
            && self.high <= hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRange {
                dim: dim.name().to_string(),
                low: self.low,
                high: self.high,
            })
        }
    }
}

/// Initial uniform sampling box, one interval per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorRanges {
    ranges: [Interval; 6],
    population: f64,
}

impl PriorRanges {
    pub fn new(ranges: [Interval; 6], population: f64) -> Result<Self> {
        let pr = Self { ranges, population };
        pr.validate()?;
        Ok(pr)
    }

    /// S in 40-90% and I in 0-0.1% of the population, L in 1-10 years,
    /// D in 1.5-7 days, R0max in 1.3-4, R0min in 0.8-1.2.
    pub fn default_for(population: f64) -> Self {
        Self {
            ranges: [
                Interval::new(0.4 * population, 0.9 * population),
                Interval::new(0.0, 0.001 * population),
                Interval::new(365.0, 3650.0),
                Interval::new(1.5, 7.0),
                Interval::new(1.3, 4.0),
                Interval::new(0.8, 1.2),
            ],
            population,
        }
    }

    pub fn population(&self) -> f64 {
        self.population
    }

    pub fn get(&self, dim: Dimension) -> Interval {
        self.ranges[dim.index()]
    }

    pub fn set(&mut self, dim: Dimension, interval: Interval) -> Result<()> {
        interval.validate(dim, self.population)?;
        self.ranges[dim.index()] = interval;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for dim in Dimension::ALL {
            self.get(dim).validate(dim, self.population)?;
        }
        Ok(())
    }

    /// State at the centre of every interval.
    pub fn midpoint(&self) -> ModelState {
        let mut st = ModelState { s: 0.0, i: 0.0, l: 0.0, d: 0.0, r0max: 0.0, r0min: 0.0 };
        for dim in Dimension::ALL {
            st.set(dim, self.get(dim).midpoint());
        }
        st
    }
}

/// A set of model trajectories, optionally weighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<ModelState>,
    /// Normalized particle weights; `None` means uniform.
    pub weights: Option<Vec<f64>>,
}

impl Ensemble {
    pub fn new(members: Vec<ModelState>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Ensemble("ensemble needs at least one member".into()));
        }
        Ok(Self { members, weights: None })
    }

    pub fn with_weights(members: Vec<ModelState>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Ensemble("ensemble needs at least one member".into()));
        }
        if weights.len() != members.len() {
            return Err(Error::LengthMismatch(members.len(), weights.len()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Ensemble("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Ensemble(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { members, weights: Some(weights) })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn weight(&self, index: usize) -> f64 {
        match &self.weights {
            Some(w) => w[index],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn weights_or_uniform(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn column(&self, dim: Dimension) -> Vec<f64> {
        self.members.iter().map(|m| m.get(dim)).collect()
    }

    pub fn weighted_mean(&self, dim: Dimension) -> f64 {
        let values = self.column(dim);
        weighted_mean(&values, self.weights.as_deref())
    }

    pub fn weighted_std(&self, dim: Dimension) -> f64 {
        let values = self.column(dim);
        weighted_std(&values, self.weights.as_deref())
    }

    pub fn clamp_all(&mut self, population: f64) {
        for m in &mut self.members {
            m.clamp(population);
        }
    }

    /// Number of distinct values of `dim` after rounding to `resolution`.
    pub fn distinct_count(&self, dim: Dimension, resolution: f64) -> usize {
        let mut keys: Vec<i64> = self
            .members
            .iter()
            .map(|m| (m.get(dim) / resolution).round() as i64)
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// Weighted mean; `None` weights mean uniform. The shift by the first value
/// keeps the mean of a constant column exact.
pub fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let origin = values[0];
    match weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            let shifted: f64 = values.iter().zip(w).map(|(v, w)| w * (v - origin)).sum();
            origin + shifted / total
        }
        None => origin + values.iter().map(|v| v - origin).sum::<f64>() / values.len() as f64,
    }
}

/// Weighted standard deviation. Uniform weights use the `N-1` sample form;
/// explicit weights use the reliability-weighted unbiased form.
pub fn weighted_std(values: &[f64], weights: Option<&[f64]>) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = weighted_mean(values, weights);
    match weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            let sq: f64 = w.iter().map(|x| (x / total).powi(2)).sum();
            let var: f64 = values.iter().zip(w).map(|(v, w)| w / total * (v - mean).powi(2)).sum();
            let denom = 1.0 - sq;
            if denom <= 0.0 {
                0.0
            } else {
                (var / denom).sqrt()
            }
        }
        None => sample_variance(values).sqrt(),
    }
}

/// Unbiased sample variance (`N-1` denominator).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = weighted_mean(values, None);
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Unbiased sample covariance.
pub fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = weighted_mean(a, None);
    let mb = weighted_mean(b, None);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
}

/// Draws `n` members uniformly from `ranges` with weights `1/n`.
pub fn initialize(n: usize, ranges: &PriorRanges, rng_seed: u64) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::Ensemble(format!("ensemble size must be at least 2, got {n}")));
    }
    ranges.validate()?;
    let mut rng = rng_from_seed(rng_seed);
    let mut members = Vec::with_capacity(n);
    for _ in 0..n {
        let mut st = ModelState { s: 0.0, i: 0.0, l: 0.0, d: 0.0, r0max: 0.0, r0min: 0.0 };
        for dim in Dimension::ALL {
            let iv = ranges.get(dim);
            st.set(dim, rng.random_range(iv.low..iv.high));
        }
        members.push(st);
    }
    Ok(Ensemble { members, weights: Some(vec![1.0 / n as f64; n]) })
}

/// `1 / sum(w^2)` of the normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroWeights);
    }
    let sq: f64 = weights.iter().map(|w| (w / total).powi(2)).sum();
    Ok(1.0 / sq)
}

/// Systematic resampling indices for a single offset in `[0, 1)`; the
/// pointers sit at `(offset + k) / N`.
pub fn systematic_indices(weights: &[f64], offset: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut indices = Vec::with_capacity(n);
    let mut j = 0;
    let mut cumulative = weights[0] / total;
    for k in 0..n {
        let pointer = (offset + k as f64) / n as f64;
        while pointer >= cumulative && j < n - 1 {
            j += 1;
            cumulative += weights[j] / total;
        }
        indices.push(j);
    }
    indices
}

/// Resamples members in proportion to their weights; output weights are `1/N`.
pub fn systematic_resample(ensemble: &Ensemble, rng_seed: u64) -> Ensemble {
    let n = ensemble.len();
    let offset: f64 = rng_from_seed(rng_seed).random();
    let members = match &ensemble.weights {
        Some(w) => systematic_indices(w, offset)
            .into_iter()
            .map(|i| ensemble.members[i])
            .collect(),
        None => ensemble.members.clone(),
    };
    Ensemble { members, weights: Some(vec![1.0 / n as f64; n]) }
}

/// Kernel bandwidth used by [`regularize`].
pub fn regularization_bandwidth(bandwidth_scale: f64, sd: f64, n: usize, d_count: usize) -> f64 {
    bandwidth_scale * sd * (n as f64).powf(-1.0 / (d_count as f64 + 4.0))
}

/// Gaussian jitter on `dims` after resampling.
pub fn regularize(
    ensemble: &Ensemble,
    dims: &[Dimension],
    bandwidth_scale: f64,
    rng_seed: u64,
    population: f64,
) -> Ensemble {
    if bandwidth_scale == 0.0 || dims.is_empty() {
        return ensemble.clone();
    }
    let n = ensemble.len();
    let bandwidths: Vec<f64> = dims
        .iter()
        .map(|&d| regularization_bandwidth(bandwidth_scale, sample_variance(&ensemble.column(d)).sqrt(), n, dims.len()))
        .collect();
    let mut rng = rng_from_seed(rng_seed);
    let mut out = ensemble.clone();
    for member in &mut out.members {
        for (&dim, &h) in dims.iter().zip(&bandwidths) {
            let z: f64 = rng.sample(StandardNormal);
            if h > 0.0 {
                member.set(dim, member.get(dim) + h * z);
            }
        }
        member.clamp(population);
    }
    out
}

/// Scales deviations about the mean by `lambda`, in place.
pub fn inflate_values(values: &mut [f64], lambda: f64) {
    if lambda == 1.0 || values.is_empty() {
        return;
    }
    let mean = weighted_mean(values, None);
    for v in values.iter_mut() {
        *v = mean + lambda * (*v - mean);
    }
}

/// Multiplicative inflation about the ensemble mean on `dims`, then clamping.
pub fn inflate(ensemble: &Ensemble, lambda: f64, dims: &[Dimension], population: f64) -> Result<Ensemble> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::Ensemble(format!("inflation factor must be >= 1, got {lambda}")));
    }
    if lambda == 1.0 || dims.is_empty() {
        return Ok(ensemble.clone());
    }
    let mut out = ensemble.clone();
    for &dim in dims {
        let mut col = ensemble.column(dim);
        inflate_values(&mut col, lambda);
        for (m, v) in out.members.iter_mut().zip(col) {
            m.set(dim, v);
        }
    }
    out.clamp_all(population);
    Ok(out)
}

/// Per-week member values (observed incidence) and their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberValues {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl MemberValues {
    pub fn mean(&self) -> f64 {
        weighted_mean(&self.values, self.weights.as_deref())
    }
}

/// Weighted mean of member values for each week.
pub fn weighted_mean_trajectory(histories: &[MemberValues]) -> Vec<f64> {
    histories.iter().map(MemberValues::mean).collect()
}
