//! Paired t statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub n: usize,
    pub mean_diff: f64,
    /// Sample sd of the differences (n - 1 denominator).
    pub sd: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// `None` when the differences have zero variance or n < 2.
    pub t: Option<f64>,
    /// P(T >= t) under the null: small when the mean difference is positive.
    pub p_one_sided: Option<f64>,
    pub p_two_sided: Option<f64>,
    pub zero_variance: bool,
}

/// Standard paired t summary of `diffs` with `n - 1` degrees of freedom.
pub fn paired_t(diffs: &[f64]) -> PairedSummary {
    let n = diffs.len();
    let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
    let sd = if n < 2 {
        0.0
    } else {
        (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let zero_variance = sd == 0.0;
    if n < 2 || zero_variance {
        return PairedSummary {
            n,
            mean_diff: mean,
            sd,
            ci95_low: mean,
            ci95_high: mean,
            t: None,
            p_one_sided: None,
            p_two_sided: None,
            zero_variance,
        };
    }
    let se = sd / (n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let t = mean / se;
    let q = dist.inverse_cdf(0.975);
    PairedSummary {
        n,
        mean_diff: mean,
        sd,
        ci95_low: mean - q * se,
        ci95_high: mean + q * se,
        t: Some(t),
        p_one_sided: Some(dist.sf(t)),
        p_two_sided: Some(2.0 * dist.sf(t.abs())),
        zero_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        let s = paired_t(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.mean_diff, 0.5);
        assert!((s.sd - 0.57735).abs() < 1e-4);
        assert!((s.t.unwrap() - 1.7320508).abs() < 1e-6);
        // t = sqrt(3) with 3 df: two-sided p = 0.1817
        assert!((s.p_two_sided.unwrap() - 0.18169).abs() < 1e-4);
        assert!((s.p_one_sided.unwrap() * 2.0 - s.p_two_sided.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_flagged() {
        let s = paired_t(&[0.0; 5]);
        assert!(s.zero_variance);
        assert_eq!(s.t, None);
        assert_eq!(s.mean_diff, 0.0);
        let s = paired_t(&[1.0; 5]);
        assert_eq!(s.mean_diff, 1.0);
        assert!(s.zero_variance);
    }

    #[test]
    fn ci_matches_t_quantile() {
        // 9 df, t_0.975 = 2.262157
        let d: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let s = paired_t(&d);
        let se = s.sd / 10f64.sqrt();
        assert!(((s.ci95_high - s.mean_diff) / se - 2.262157).abs() < 1e-5);
    }
}
