//! Observation-space update rules shared by every filter.
//!
//! Each rule maps the prior ensemble of the observed quantity to per-member
//! increments. Unobserved coordinates follow through
//! [`regression_coefficient`]. The functions work on plain slices so they can
//! be exercised on any scalar system, not only the SIRS state.

use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::{erf, erfc};

use crate::ensemble::{sample_covariance, sample_variance, weighted_mean};

/// Log density of `Normal(mean, var)` at `x`.
pub fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// `cov(x, y) / var(y)` over the ensemble; zero when `y` has no spread.
pub fn regression_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let var = sample_variance(y);
    if var > 0.0 {
        sample_covariance(x, y) / var
    } else {
        0.0
    }
}

/// Deterministic shift-and-scale (EAKF) increments. `None` if the prior has
/// no spread.
pub fn eakf_increments(prior: &[f64], z: f64, obs_var: f64) -> Option<Vec<f64>> {
    let var_prior = sample_variance(prior);
    if !(var_prior > 0.0) {
        return None;
    }
    let mean_prior = weighted_mean(prior, None);
    let var_post = 1.0 / (1.0 / var_prior + 1.0 / obs_var);
    let mean_post = (obs_var * mean_prior + var_prior * z) / (obs_var + var_prior);
    let scale = (var_post / var_prior).sqrt();
    Some(
        prior
            .iter()
            .map(|&y| mean_post + scale * (y - mean_prior) - y)
            .collect(),
    )
}

/// Perturbed-observation (stochastic EnKF) increments.
pub fn enkf_increments<R: Rng + ?Sized>(prior: &[f64], z: f64, obs_var: f64, rng: &mut R) -> Option<Vec<f64>> {
    let var_prior = sample_variance(prior);
    if !(var_prior > 0.0) {
        return None;
    }
    let gain = var_prior / (var_prior + obs_var);
    let sd = obs_var.sqrt();
    Some(
        prior
            .iter()
            .map(|&y| {
                let eta: f64 = rng.sample(StandardNormal);
                gain * (z + sd * eta - y)
            })
            .collect(),
    )
}

/// Result of a rank histogram update.
#[derive(Clone, Debug, PartialEq)]
pub struct RhfUpdate {
    pub increments: Vec<f64>,
    /// Tied prior values were separated before sorting.
    pub ties_broken: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `ln Q(x)`, the log upper-tail probability of a standard normal.
pub fn log_upper_tail(x: f64) -> f64 {
    if x < -30.0 {
        (-0.5 * erfc(-x / SQRT_2)).ln_1p()
    } else if x < 30.0 {
        (0.5 * erfc(x / SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `ln (Phi(b) - Phi(a))` for `a <= b`, stable in both tails.
pub fn log_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a.abs() < 1.0 && b.abs() < 1.0 {
        return (0.5 * (erf(b / SQRT_2) - erf(a / SQRT_2))).ln();
    }
    if a >= 0.0 {
        let (la, lb) = (log_upper_tail(a), log_upper_tail(b));
        la + (-(lb - la).exp()).ln_1p()
    } else if b <= 0.0 {
        let (la, lb) = (log_upper_tail(-b), log_upper_tail(-a));
        la + (-(lb - la).exp()).ln_1p()
    } else {
        (-(0.5 * erfc(b / SQRT_2) + 0.5 * erfc(-a / SQRT_2))).ln_1p()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Quantile `f` of a standard normal truncated to `(-inf, alpha]`.
fn lower_truncated_quantile(alpha: f64, f: f64) -> f64 {
    let f = f.clamp(f64::MIN_POSITIVE, 1.0);
    if alpha < -35.0 {
        // exponential approximation of the far tail
        alpha + f.ln() / -alpha
    } else {
        let cdf_alpha = log_upper_tail(-alpha).exp();
        let p = (f * cdf_alpha).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        std_normal().inverse_cdf(p).min(alpha)
    }
}

/// Rank histogram increments. Requires at least three members.
///
/// The prior is piecewise: mass `1/(N+1)` spread uniformly between each
/// pair of adjacent sorted members, plus Gaussian tails (sample sd) holding
/// `1/(N+1)` beyond each extreme member. The posterior is that density times
/// the Gaussian likelihood, integrated exactly per piece; member `k` (in
/// sorted order) moves to the posterior quantile `k/(N+1)`.
pub fn rhf_increments(prior: &[f64], z: f64, obs_var: f64) -> Option<RhfUpdate> {
    let n = prior.len();
    if n < 3 {
        return None;
    }
    let sd = sample_variance(prior).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| prior[a].total_cmp(&prior[b]));
    let mut sorted: Vec<f64> = order.iter().map(|&i| prior[i]).collect();
    let mut ties_broken = false;
    for k in 1..n {
        if sorted[k] <= sorted[k - 1] {
            sorted[k] = sorted[k - 1] + 1e-9 * sd;
            ties_broken = true;
        }
    }

    let r = obs_var.sqrt();
    let np1 = (n + 1) as f64;
    let ln_piece = -(np1.ln());
    let tail_z = std_normal().inverse_cdf(1.0 / np1); // negative
    let joint_sd = (sd * sd + obs_var).sqrt();
    let post_sd = sd * r / joint_sd;

    let left_mean = sorted[0] - sd * tail_z;
    let left_post_mean = (left_mean * obs_var + z * sd * sd) / (sd * sd + obs_var);
    let left_alpha = (sorted[0] - left_post_mean) / post_sd;
    let right_mean = sorted[n - 1] + sd * tail_z;
    let right_post_mean = (right_mean * obs_var + z * sd * sd) / (sd * sd + obs_var);
    let right_beta = (sorted[n - 1] - right_post_mean) / post_sd;

    // log posterior mass per region: [left tail, n-1 interior pieces, right tail]
    let mut log_mass = Vec::with_capacity(n + 1);
    log_mass.push(gaussian_log_density(z, left_mean, joint_sd * joint_sd) + log_upper_tail(-left_alpha));
    for k in 0..n - 1 {
        let (a, b) = (sorted[k], sorted[k + 1]);
        let width = b - a;
        log_mass.push(ln_piece - width.ln() + log_normal_mass((a - z) / r, (b - z) / r));
    }
    log_mass.push(gaussian_log_density(z, right_mean, joint_sd * joint_sd) + log_upper_tail(right_beta));

    let total = log_sum_exp(&log_mass);
    if !total.is_finite() {
        return None;
    }
    let mass: Vec<f64> = log_mass.iter().map(|l| (l - total).exp()).collect();

    let mut posterior_sorted = vec![0.0; n];
    let mut region = 0;
    let mut before = 0.0;
    for (k, slot) in posterior_sorted.iter_mut().enumerate() {
        let target = (k + 1) as f64 / np1;
        while region < n && before + mass[region] < target {
            before += mass[region];
            region += 1;
        }
        let f = if mass[region] > 0.0 {
            ((target - before) / mass[region]).clamp(0.0, 1.0)
        } else {
            0.5
        };
        *slot = if region == 0 {
            left_post_mean + post_sd * lower_truncated_quantile(left_alpha, f)
        } else if region == n {
            right_post_mean - post_sd * lower_truncated_quantile(-right_beta, 1.0 - f)
        } else {
            let (a, b) = (sorted[region - 1], sorted[region]);
            interior_quantile(a, b, z, r, f)
        };
    }

    let mut increments = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        increments[idx] = posterior_sorted[rank] - prior[idx];
    }
    Some(RhfUpdate { increments, ties_broken })
}

/// Point in `[a, b]` holding fraction `f` of the likelihood mass on `[a, b]`.
fn interior_quantile(a: f64, b: f64, z: f64, r: f64, f: f64) -> f64 {
    let lo_z = (a - z) / r;
    let full = log_normal_mass(lo_z, (b - z) / r);
    if !full.is_finite() {
        return a + f * (b - a);
    }
    let ln_f = f.ln();
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let part = log_normal_mass(lo_z, (mid - z) / r) - full;
        if part < ln_f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Weight update result for one particle-filter cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct Reweighting {
    pub weights: Vec<f64>,
    /// `ln sum_i w_prev_i p(z | x_i)`; `-inf` when every likelihood underflows.
    pub log_evidence: f64,
    /// Every likelihood underflowed; weights were reset to uniform.
    pub degenerate: bool,
}

/// Multiplies prior weights by the Gaussian likelihood of `z` and
/// normalizes.
pub fn pf_reweight(prior_weights: &[f64], predicted: &[f64], z: f64, obs_var: f64) -> Reweighting {
    let n = prior_weights.len();
    let log_lik: Vec<f64> = predicted.iter().map(|&y| gaussian_log_density(z, y, obs_var)).collect();
    let max_ll = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // below this every density is zero in double precision
    let underflow = f64::MIN_POSITIVE.ln() - 52.0 * LN_2;
    if !(max_ll > underflow) {
        return Reweighting {
            weights: vec![1.0 / n as f64; n],
            log_evidence: f64::NEG_INFINITY,
            degenerate: true,
        };
    }
    let log_w: Vec<f64> = prior_weights
        .iter()
        .zip(&log_lik)
        .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return Reweighting {
            weights: vec![1.0 / n as f64; n],
            log_evidence: f64::NEG_INFINITY,
            degenerate: true,
        };
    }
    let prior_total: f64 = prior_weights.iter().sum();
    let weights = log_w.iter().map(|l| (l - total).exp()).collect();
    Reweighting { weights, log_evidence: total - prior_total.ln(), degenerate: false }
}
