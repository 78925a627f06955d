//! Confidence intervals over replication outcomes.

use serde::Serialize;

/// A point estimate with its confidence interval half-width.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub point: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub std_dev: f64,
    pub replications: usize,
}

impl Estimate {
    /// Mean and z·s/√n half-width over raw outcomes.
    pub fn from_samples(samples: &[f64], confidence: f64) -> Estimate {
        let n = samples.len();
        if n == 0 {
            return Estimate {
                point: f64::NAN,
                half_width: f64::INFINITY,
                confidence,
                std_dev: f64::NAN,
                replications: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let z = normal_quantile(0.5 * (1.0 + confidence));
        Estimate {
            point: mean,
            half_width: z * std_dev / (n as f64).sqrt(),
            confidence,
            std_dev,
            replications: n,
        }
    }

    /// Does the interval contain `value`?
    pub fn covers(&self, value: f64) -> bool {
        (self.point - value).abs() <= self.half_width
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation,
/// |relative error| < 1.2e-9 over (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic: sup |F̂₁ − F̂₂| over the
/// pooled sample points.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty());
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    // Once one sample is exhausted its ECDF is pinned at 1 and the gap
    // can only shrink, so the merge loop sees the supremum.
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / n - j as f64 / m).abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_match_reference_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.995) - 2.5758293035489004).abs() < 1e-8);
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.3) + normal_quantile(0.7)).abs() < 1e-10);
        assert!(normal_quantile(0.001) < -3.0);
    }

    #[test]
    fn constant_samples_have_zero_width() {
        let e = Estimate::from_samples(&[2.0; 50], 0.99);
        assert_eq!(e.point, 2.0);
        assert_eq!(e.half_width, 0.0);
        assert!(e.covers(2.0));
        assert!(!e.covers(2.1));
    }

    #[test]
    fn width_shrinks_with_replications() {
        let small: Vec<f64> = (0..100).map(|i| f64::from(i % 2)).collect();
        let large: Vec<f64> = (0..10_000).map(|i| f64::from(i % 2)).collect();
        let e1 = Estimate::from_samples(&small, 0.95);
        let e2 = Estimate::from_samples(&large, 0.95);
        assert!(e2.half_width < e1.half_width);
        assert!((e1.point - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b = [10.0, 11.0, 12.0, 13.0];
        assert_eq!(ks_statistic(&a, &b), 1.0);
        let mixed = [1.0, 2.0, 10.0, 11.0];
        assert_eq!(ks_statistic(&a, &mixed), 0.5);
        // Uneven sizes: F for [1,2,3] vs [2] peaks at 1/3.
        let s = ks_statistic(&[1.0, 2.0, 3.0], &[2.0]);
        assert!((s - 1.0 / 3.0).abs() < 1e-12, "{s}");
    }
}
