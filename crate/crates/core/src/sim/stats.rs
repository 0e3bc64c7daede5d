//! Batch-means confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Point estimate with a 95% confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn contains(&self, x: f64, widths: f64) -> bool {
        (x - self.mean).abs() <= widths * self.half_width
    }
}

/// Two-sided 95% Student t quantile.
pub(crate) fn t_quantile(dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Interval around `point` from the spread of batch values.
pub(crate) fn batch_interval(point: f64, batches: &[f64]) -> Interval {
    let n = batches.len();
    if n < 2 {
        return Interval {
            mean: point,
            half_width: f64::INFINITY,
        };
    }
    let m = batches.iter().sum::<f64>() / n as f64;
    let var = batches.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    Interval {
        mean: point,
        half_width: t_quantile(n - 1) * (var / n as f64).sqrt(),
    }
}

/// Least-squares slope of `y` against `x` and its standard error.
pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantiles() {
        assert!((t_quantile(29) - 2.045230).abs() < 1e-5);
        assert!((t_quantile(299) - 1.967930).abs() < 1e-5);
    }

    #[test]
    fn exact_line_has_zero_error() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, se) = ols_slope(&x, &y);
        assert!((s + 0.5).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn interval_of_constant_batches() {
        let i = batch_interval(2.0, &[2.0; 30]);
        assert_eq!(i.half_width, 0.0);
        assert!(i.contains(2.0, 3.0));
    }
}
