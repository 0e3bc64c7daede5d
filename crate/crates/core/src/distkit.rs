//! Finite-support probability mass functions on the non-negative integers.
//!
//! [`Pmf`] carries every discrete quantity of a station (stayers, capacity,
//! boarders, riders and the truncated queue laws). Every constructor enforces
//! non-negative entries summing to one; entries below [`DUST`] are clamped to
//! zero and the remainder renormalized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this are treated as floating-point dust.
pub const DUST: f64 = 1e-15;

/// Tolerance on the total mass accepted from user input.
pub const INPUT_MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Pmf::new(probs)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.probs
    }
}

impl Pmf {
    /// Validates user-supplied probabilities (index = value).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::BadPmf("empty support".into()));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::BadPmf(format!("entry {k} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > INPUT_MASS_TOL {
            return Err(Error::BadPmf(format!("total mass {total} != 1")));
        }
        let has_dust = probs.iter().any(|&p| p > 0.0 && p < DUST);
        if has_dust || (total - 1.0).abs() > 1e-12 {
            return Self::from_weights(probs);
        }
        // already normalized: keep the caller's bits so files round-trip
        let mut probs = probs;
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        Ok(Pmf { probs })
    }

    /// Builds a pmf from non-negative weights of arbitrary total, clamping
    /// dust (and tiny negative round-off) to zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        for w in weights.iter_mut() {
            if !w.is_finite() {
                return Err(Error::BadPmf("non-finite weight".into()));
            }
            if *w < DUST {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::BadPmf("zero total mass".into()));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
            weights.pop();
        }
        Ok(Pmf { probs: weights })
    }

    pub fn delta(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Pmf { probs }
    }

    /// Equal mass on `a` and `b`.
    pub fn two_point(a: usize, b: usize) -> Self {
        let mut probs = vec![0.0; a.max(b) + 1];
        probs[a] += 0.5;
        probs[b] += 0.5;
        Pmf { probs }
    }

    pub fn binomial(n: usize, p: f64) -> Self {
        Pmf::delta(n).binomial_thin(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest value with positive mass.
    pub fn bound(&self) -> usize {
        self.probs.len() - 1
    }

    /// P[X = k].
    pub fn at(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// P[X <= k]; negative arguments give zero.
    pub fn cdf(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let k = k as usize;
        if k >= self.bound() {
            return 1.0;
        }
        self.probs[..=k].iter().sum::<f64>().min(1.0)
    }

    /// P[X > k].
    pub fn tail(&self, k: i64) -> f64 {
        if k < 0 {
            return 1.0;
        }
        let k = k as usize;
        if k >= self.bound() {
            return 0.0;
        }
        self.probs[k + 1..].iter().sum::<f64>().min(1.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// (mean, variance).
    pub fn moments(&self) -> (f64, f64) {
        let mean = self.mean();
        let second: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k) as f64 * p)
            .sum();
        (mean, (second - mean * mean).max(0.0))
    }

    pub fn variance(&self) -> f64 {
        self.moments().1
    }

    /// Probability generating function by Horner's rule.
    pub fn pgf_eval(&self, z: Complex64) -> Complex64 {
        self.probs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &p| acc * z + p)
    }

    /// Keeps each unit independently with probability `keep`.
    pub fn binomial_thin(&self, keep: f64) -> Pmf {
        let keep = keep.clamp(0.0, 1.0);
        let drop = 1.0 - keep;
        let mut out = vec![0.0; self.probs.len()];
        // row[k] = P[Binomial(j, keep) = k], grown one trial at a time
        let mut row = vec![1.0];
        for (j, &pj) in self.probs.iter().enumerate() {
            if j > 0 {
                let mut next = vec![0.0; j + 1];
                for (k, &r) in row.iter().enumerate() {
                    next[k] += r * drop;
                    next[k + 1] += r * keep;
                }
                row = next;
            }
            if pj > 0.0 {
                for (k, &r) in row.iter().enumerate() {
                    out[k] += pj * r;
                }
            }
        }
        Pmf::from_weights(out).expect("thinning preserves mass")
    }

    /// Law of the sum of two independent variables.
    pub fn convolve(&self, other: &Pmf) -> Pmf {
        let mut out = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Pmf::from_weights(out).expect("convolution preserves mass")
    }

    /// Law of max(X - Y, 0) for independent X ~ self, Y ~ other.
    pub fn minus_floor(&self, other: &Pmf) -> Pmf {
        let mut out = vec![0.0; self.probs.len()];
        for (x, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (y, &b) in other.probs.iter().enumerate() {
                out[x.saturating_sub(y)] += a * b;
            }
        }
        Pmf::from_weights(out).expect("max(X - Y, 0) preserves mass")
    }

    pub fn total_variation(&self, other: &Pmf) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        0.5 * (0..n)
            .map(|k| (self.at(k) - other.at(k)).abs())
            .sum::<f64>()
    }

    /// Builds a pmf from a cumulative distribution sampled at 0..=bound.
    pub(crate) fn from_cdf(cdf: &[f64]) -> Pmf {
        let mut prev = 0.0;
        let weights = cdf
            .iter()
            .map(|&c| {
                let c = c.clamp(0.0, 1.0).max(prev);
                let w = c - prev;
                prev = c;
                w
            })
            .collect();
        Pmf::from_weights(weights).expect("cdf reaches one")
    }
}

/// Poisson pmf with the given mean, truncated once the remaining tail falls
/// below `tail_eps` (the tail is dropped, then renormalized).
pub fn poisson_weights(mean: f64, tail_eps: f64) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let mode = mean.floor() as usize;
    let max_k = (mean + 12.0 * mean.sqrt() + 40.0).ceil() as usize;
    // log-space at the mode, recurrences outwards, for large means
    let ln_mode = -mean + mode as f64 * mean.ln() - ln_factorial(mode);
    let mut w = vec![0.0; max_k + 1];
    w[mode] = ln_mode.exp();
    for k in (0..mode).rev() {
        w[k] = w[k + 1] * (k + 1) as f64 / mean;
    }
    for k in mode + 1..=max_k {
        w[k] = w[k - 1] * mean / k as f64;
    }
    let mut tail = 0.0;
    let mut cut = max_k;
    while cut > mode {
        if tail + w[cut] >= tail_eps {
            break;
        }
        tail += w[cut];
        cut -= 1;
    }
    w.truncate(cut + 1);
    w
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    statrs::function::factorial::ln_factorial(n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pgf_of_delta_is_power() {
        let p = Pmf::delta(4);
        let z = c(0.3, -0.7);
        let got = p.pgf_eval(z);
        let want = z.powu(4);
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn pgf_of_two_point_at_minus_one() {
        let p = Pmf::two_point(0, 8);
        let v = p.pgf_eval(c(-1.0, 0.0));
        assert!((v - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn moments_of_capacity_laws() {
        assert_eq!(Pmf::delta(4).moments(), (4.0, 0.0));
        let (m, v) = Pmf::two_point(1, 7).moments();
        assert!((m - 4.0).abs() < 1e-15 && (v - 9.0).abs() < 1e-12);
        let (m, v) = Pmf::two_point(2, 6).moments();
        assert!((m - 4.0).abs() < 1e-15 && (v - 4.0).abs() < 1e-12);
        let (m, v) = Pmf::two_point(0, 8).moments();
        assert!((m - 4.0).abs() < 1e-15 && (v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn thinning_delta_two() {
        let p = Pmf::delta(2).binomial_thin(0.5);
        assert_eq!(p.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn thinning_extremes() {
        let p = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.binomial_thin(1.0), p);
        assert_eq!(p.binomial_thin(0.0), Pmf::delta(0));
    }

    #[test]
    fn thinning_matches_closed_form_binomial() {
        let p = Pmf::delta(8).binomial_thin(0.54);
        for k in 0..=8usize {
            let choose = (ln_factorial(8) - ln_factorial(k) - ln_factorial(8 - k)).exp();
            let want = choose * 0.54f64.powi(k as i32) * 0.46f64.powi(8 - k as i32);
            assert!((p.at(k) - want).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Pmf::new(vec![0.5, 0.4]).is_err());
        assert!(Pmf::new(vec![1.2, -0.2]).is_err());
        assert!(Pmf::new(vec![]).is_err());
        assert!(Pmf::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn cdf_and_tail() {
        let p = Pmf::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(p.cdf(-1), 0.0);
        assert_eq!(p.cdf(0), 0.25);
        assert_eq!(p.cdf(5), 1.0);
        assert_eq!(p.tail(0), 0.75);
        assert_eq!(p.tail(-3), 1.0);
        assert_eq!(p.tail(2), 0.0);
    }

    #[test]
    fn poisson_weights_sum_and_mean() {
        for &mean in &[0.1, 1.0, 7.5, 60.0] {
            let w = poisson_weights(mean, 1e-16);
            let total: f64 = w.iter().sum();
            let m: f64 = w.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            assert!((total - 1.0).abs() < 1e-12, "mean {mean}: total {total}");
            assert!((m - mean).abs() < 1e-9 * mean.max(1.0));
        }
    }

    fn arb_pmf() -> impl Strategy<Value = Pmf> {
        prop::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("zero mass", |w| {
            if w.iter().sum::<f64>() > 1e-6 {
                Pmf::from_weights(w).ok()
            } else {
                None
            }
        })
    }

    proptest! {
        #[test]
        fn pgf_at_one_is_one(p in arb_pmf()) {
            prop_assert!((p.pgf_eval(c(1.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-12);
        }

        #[test]
        fn thinning_scales_mean(p in arb_pmf(), keep in 0.0f64..=1.0) {
            let out = p.binomial_thin(keep);
            prop_assert!((out.mean() - keep * p.mean()).abs() < 1e-12);
            prop_assert!(out.bound() <= p.bound());
            let total: f64 = out.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.probs().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn convolution_adds_means(a in arb_pmf(), b in arb_pmf()) {
            let s = a.convolve(&b);
            prop_assert!((s.mean() - a.mean() - b.mean()).abs() < 1e-10);
        }
    }
}
