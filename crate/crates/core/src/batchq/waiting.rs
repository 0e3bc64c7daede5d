//! Queue seen by an arriving passenger and that passenger's waiting time.
//!
//! A passenger arrives `tau ~ U(0, beta)` after the last cabin. Ahead of them
//! are the `L = max(Z - C, 0)` passengers left behind plus the Poisson
//! arrivals since, `N = L + Poisson(lambda tau)`. They board the first cabin
//! `n` whose cumulative capacity `C_1 + .. + C_n` exceeds `N`, so
//!
//! ```text
//! W = (beta - tau) + beta M,   M = #{n >= 1 : C_1 + .. + C_n <= N}.
//! ```
//!
//! The uniform offset is integrated exactly: averaging a Poisson pmf over a
//! uniform window reduces to differences of Poisson tail probabilities.

use crate::distkit::{poisson_weights, Pmf};
use crate::error::{Error, Result};

/// Steps of the waiting-time cdf grid per headway.
pub const CDF_STEPS_PER_HEADWAY: usize = 64;
const WEIGHT_EPS: f64 = 1e-16;
const CDF_DONE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct WaitingTime {
    pub mean: f64,
    pub var: f64,
    /// Grid spacing of `cdf` in seconds.
    pub cdf_step: f64,
    /// `cdf[i] = P[W <= i * cdf_step]`.
    pub cdf: Vec<f64>,
}

impl WaitingTime {
    pub fn cdf_at(&self, w: f64) -> f64 {
        if w < 0.0 {
            return 0.0;
        }
        let i = (w / self.cdf_step).floor() as usize;
        self.cdf.get(i).copied().unwrap_or(1.0)
    }
}

/// `P[Poisson(mu) >= n]` for `n = 0..len`.
fn poisson_upper(mu: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len + 1];
    if mu <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    let w = poisson_weights(mu, 1e-300);
    let mut acc = 0.0;
    for n in (0..w.len().max(len + 1)).rev() {
        acc += w.get(n).copied().unwrap_or(0.0);
        if n <= len {
            out[n] = acc;
        }
    }
    out
}

fn trim(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && *v.last().unwrap() < WEIGHT_EPS {
        v.pop();
    }
    v
}

/// Averages of the Poisson(rate tau) pmf over tau in a window of (0, beta).
struct OffsetWeights {
    /// (1/beta) int_0^beta p(n; rate tau) dtau
    all: Vec<f64>,
    /// (1/beta) int_0^beta (beta - tau) p(n; rate tau) dtau
    residual: Vec<f64>,
}

fn offset_weights(rate: f64, beta: f64) -> OffsetWeights {
    let mu = rate * beta;
    if mu == 0.0 {
        return OffsetWeights {
            all: vec![1.0],
            residual: vec![beta / 2.0],
        };
    }
    let len = (mu + 12.0 * mu.sqrt() + 40.0).ceil() as usize;
    let upper = poisson_upper(mu, len + 2);
    let all: Vec<f64> = (0..=len).map(|n| upper[n + 1] / mu).collect();
    let residual: Vec<f64> = (0..=len)
        .map(|n| {
            let tau_weighted = (n + 1) as f64 / (rate * mu) * upper[n + 2];
            (beta * all[n] - tau_weighted).max(0.0)
        })
        .collect();
    let keep = trim(all.clone()).len();
    OffsetWeights {
        all: all[..keep].to_vec(),
        residual: residual[..keep].to_vec(),
    }
}

/// (1/beta) int_{beta - f}^{beta} p(n; rate tau) dtau.
fn late_window_weights(rate: f64, beta: f64, f: f64, len: usize) -> Vec<f64> {
    let mu = rate * beta;
    if mu == 0.0 {
        let mut v = vec![0.0; len.max(1)];
        v[0] = f / beta;
        return v;
    }
    let hi = poisson_upper(mu, len + 1);
    let lo = poisson_upper(rate * (beta - f), len + 1);
    (0..len).map(|n| ((hi[n + 1] - lo[n + 1]) / mu).max(0.0)).collect()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Passengers left waiting once a cabin has departed.
pub fn left_behind(z_pmf: &Pmf, capacity: &Pmf) -> Pmf {
    z_pmf.minus_floor(capacity)
}

/// Queue found by an arriving passenger (excluding themselves).
pub fn queue_time_stationary(z_pmf: &Pmf, capacity: &Pmf, lambda_m: f64, beta: f64) -> Result<Pmf> {
    let left = left_behind(z_pmf, capacity);
    let w = offset_weights(lambda_m, beta);
    Pmf::from_weights(convolve(left.probs(), &w.all))
}

/// Renewal sums over i.i.d. capacities for x = 0..len:
/// `U(x) = E[M | N = x]`, `V(x) = E[M^2 | N = x]`.
fn renewal_moments(capacity: &Pmf, len: usize) -> (Vec<f64>, Vec<f64>) {
    let c = capacity.probs();
    let c0 = c[0];
    let denom = 1.0 - c0;
    let mut u = vec![0.0; len];
    let mut v = vec![0.0; len];
    for x in 0..len {
        let mut su = c0;
        let mut sv = 0.0;
        for (k, &pk) in c.iter().enumerate().skip(1) {
            if k > x {
                break;
            }
            su += pk * (1.0 + u[x - k]);
            sv += pk * (1.0 + 2.0 * u[x - k] + v[x - k]);
        }
        u[x] = su / denom;
        v[x] = (sv + c0 * (1.0 + 2.0 * u[x])) / denom;
    }
    (u, v)
}

/// Mean, variance and cdf of the waiting time of a Poisson arrival.
pub fn waiting_time(z_pmf: &Pmf, capacity: &Pmf, lambda_m: f64, beta: f64) -> Result<WaitingTime> {
    if capacity.bound() == 0 {
        return Err(Error::Unstable {
            capacity: 0.0,
            load: lambda_m * beta,
        });
    }
    if lambda_m * beta >= capacity.mean() {
        return Err(Error::Unstable {
            capacity: capacity.mean(),
            load: lambda_m * beta,
        });
    }
    let left = left_behind(z_pmf, capacity);
    let ow = offset_weights(lambda_m, beta);
    let ahead = convolve(left.probs(), &ow.all);
    let ahead_res = convolve(left.probs(), &ow.residual);
    let len = ahead.len();
    let (u, v) = renewal_moments(capacity, len);

    let eu: f64 = ahead.iter().zip(&u).map(|(p, x)| p * x).sum();
    let ev: f64 = ahead.iter().zip(&v).map(|(p, x)| p * x).sum();
    let eru: f64 = ahead_res.iter().zip(&u).map(|(p, x)| p * x).sum();
    let mean = beta / 2.0 + beta * eu;
    let second = beta * beta / 3.0 + 2.0 * beta * eru + beta * beta * ev;
    let var = (second - mean * mean).max(0.0);

    let cdf = waiting_cdf(&left, capacity, lambda_m, beta, &ahead);
    Ok(WaitingTime {
        mean,
        var,
        cdf_step: beta / CDF_STEPS_PER_HEADWAY as f64,
        cdf,
    })
}

fn waiting_cdf(left: &Pmf, capacity: &Pmf, lambda_m: f64, beta: f64, ahead: &[f64]) -> Vec<f64> {
    let steps = CDF_STEPS_PER_HEADWAY;
    let len = ahead.len();
    let wlen = (lambda_m * beta + 12.0 * (lambda_m * beta).sqrt() + 41.0).ceil() as usize;
    // late[l][x]: P[N = x, residual headway <= l * beta / steps]
    let late: Vec<Vec<f64>> = (0..steps)
        .map(|l| {
            let f = l as f64 * beta / steps as f64;
            let mut w = convolve(left.probs(), &late_window_weights(lambda_m, beta, f, wlen));
            w.resize(len, 0.0);
            w
        })
        .collect();

    // partial sums S_j of capacities, truncated to the support of N
    let mut sum_pmf = vec![0.0; len];
    sum_pmf[0] = 1.0;
    let cumulative = |p: &[f64]| -> Vec<f64> {
        let mut acc = 0.0;
        p.iter()
            .map(|x| {
                acc += x;
                acc.min(1.0)
            })
            .collect()
    };
    let mut f_cur = cumulative(&sum_pmf);
    let mut out = Vec::new();
    let cap = capacity.probs();
    for _j in 0.. {
        let mut next = vec![0.0; len];
        for (x, &p) in sum_pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (k, &pk) in cap.iter().enumerate() {
                if x + k >= len {
                    break;
                }
                next[x + k] += p * pk;
            }
        }
        let f_next = cumulative(&next);
        // P[M <= j - 1] = 1 - P[S_j <= N]
        let below: f64 = 1.0 - ahead.iter().zip(&f_cur).map(|(a, f)| a * f).sum::<f64>();
        for w in &late {
            let exact: f64 = w
                .iter()
                .zip(f_cur.iter().zip(&f_next))
                .map(|(b, (fc, fnx))| b * (fc - fnx))
                .sum();
            out.push((below + exact).clamp(0.0, 1.0));
        }
        let remaining: f64 = ahead.iter().zip(&f_next).map(|(a, f)| a * f).sum();
        if remaining < CDF_DONE || out.len() > 64 * 100_000 {
            break;
        }
        sum_pmf = next;
        f_cur = f_next;
    }
    out.push(1.0);
    // running max guards against round-off dips
    let mut best: f64 = 0.0;
    for x in out.iter_mut() {
        best = best.max(*x);
        *x = best;
    }
    out
}
