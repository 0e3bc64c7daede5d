//! Stationary law of the queue found by an arriving cabin.
//!
//! With `D(z) = z^eta - A(z) C~(z)` and the inner roots `mu_2..mu_eta`,
//! the pgf is
//!
//! ```text
//! Z(z) = (E[C] - load) A(z) (z - 1) prod_j (z - mu_j) / (D(z) prod_j (1 - mu_j))
//! ```
//!
//! The numerator polynomial also equals `sum_c c(c) sum_{k<c} p_k (z^eta - z^(eta-c+k))`,
//! which pins down the head probabilities `p_0..p_{eta-1}` by a triangular
//! solve. The full law comes from inverting `Z` on the unit circle.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::roots::{KernelFn, RootSet};
use crate::distkit::{poisson_weights, Pmf};
use crate::error::{Error, Result};

/// Tail mass left beyond the truncation point of an inverted pmf.
pub const TAIL_EPS: f64 = 1e-12;
/// Largest admissible mass at the truncation boundary.
pub const BOUNDARY_EPS: f64 = 1e-10;
const GRID_START: usize = 1024;
const GRID_MAX: usize = 1 << 22;

/// Evaluates the closed-form pgf at `z` (off the removable points).
pub fn z_pgf(load: f64, capacity: &Pmf, roots: &RootSet, z: Complex64) -> Complex64 {
    let kernel = KernelFn::new(load, capacity);
    pgf_with(&kernel, load, capacity.mean(), roots, z)
}

fn pgf_with(kernel: &KernelFn, load: f64, mean_c: f64, roots: &RootSet, z: Complex64) -> Complex64 {
    let a = ((z - 1.0) * load).exp();
    let mut num = a * (mean_c - load);
    for mu in roots.inner() {
        num *= (z - mu) / (1.0 - mu);
    }
    num / kernel.quotient(z)
}

/// `P[Z = k]` for `k < c_max`, remaining mass lumped at `c_max`.
///
/// This is exactly the information the boarding and riding laws consume.
pub fn z_head(load: f64, capacity: &Pmf, roots: &RootSet) -> Result<Pmf> {
    let eta = capacity.bound();
    if load == 0.0 {
        return Ok(Pmf::delta(0));
    }
    let c = capacity.probs();
    if c[eta] >= 1e-6 {
        if let Some(head) = head_from_numerator(load, capacity, roots) {
            return Ok(head);
        }
    }
    let full = z_stationary(load, capacity, roots, None)?;
    let mut w: Vec<f64> = (0..eta).map(|k| full.at(k)).collect();
    w.push(full.tail(eta as i64 - 1));
    Pmf::from_weights(w)
}

fn head_from_numerator(load: f64, capacity: &Pmf, roots: &RootSet) -> Option<Pmf> {
    let eta = capacity.bound();
    let c = capacity.probs();
    let mut scale = Complex64::new(capacity.mean() - load, 0.0);
    for mu in roots.inner() {
        scale /= 1.0 - mu;
    }
    // numerator coefficients, ascending: scale * prod_j (z - mu_j)
    let mut n = vec![Complex64::new(1.0, 0.0)];
    for mu in roots.roots() {
        let mut next = vec![Complex64::new(0.0, 0.0); n.len() + 1];
        for (i, &a) in n.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * mu;
        }
        n = next;
    }
    let n: Vec<f64> = n.iter().map(|a| (a * scale).re).collect();

    let mut p = vec![0.0; eta];
    for i in 0..eta {
        let mut acc = n[i];
        for (k, pk) in p.iter().enumerate().take(i) {
            acc += c[k + eta - i] * pk;
        }
        p[i] = -acc / c[eta];
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| x < -1e-10) || total > 1.0 + 1e-10 {
        return None;
    }
    let mut w: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    w.push((1.0 - total).max(0.0));
    Pmf::from_weights(w).ok()
}

/// Stationary queue law by discrete Fourier inversion of the closed form on
/// a half-step-shifted unit-circle grid (which never hits `z = 1`).
///
/// With `k_max = None` the support is cut where the tail drops below
/// [`TAIL_EPS`].
pub fn z_stationary(load: f64, capacity: &Pmf, roots: &RootSet, k_max: Option<usize>) -> Result<Pmf> {
    if load == 0.0 {
        return Ok(Pmf::delta(0));
    }
    let kernel = KernelFn::new(load, capacity);
    let mean_c = capacity.mean();
    let mut planner = FftPlanner::<f64>::new();
    let mut n = GRID_START;
    loop {
        let fft: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(n);
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| {
                let z = Complex64::from_polar(1.0, step * (k as f64 + 0.5));
                pgf_with(&kernel, load, mean_c, roots, z)
            })
            .collect();
        fft.process(&mut buf);
        let probs: Vec<f64> = buf
            .iter()
            .enumerate()
            .map(|(j, v)| (v * Complex64::from_polar(1.0, -0.5 * step * j as f64)).re / n as f64)
            .collect();

        // aliasing indicator: mass in the upper half of the grid
        let upper: f64 = probs[n / 2..].iter().map(|p| p.abs()).sum();
        let mut cum = 0.0;
        let mut cut = None;
        for (k, p) in probs[..n / 2].iter().enumerate() {
            cum += p;
            if 1.0 - cum < TAIL_EPS {
                cut = Some(k);
                break;
            }
        }
        if let (Some(cut), true) = (cut, upper < BOUNDARY_EPS) {
            let keep = match k_max {
                Some(k) if k < cut => {
                    let tail: f64 = probs[k + 1..n / 2].iter().sum();
                    if tail > BOUNDARY_EPS {
                        return Err(Error::Truncation(format!(
                            "mass {tail:e} beyond k_max = {k}"
                        )));
                    }
                    k
                }
                _ => cut,
            };
            return Pmf::from_weights(probs[..=keep].to_vec());
        }
        if n >= GRID_MAX {
            return Err(Error::Truncation(format!(
                "queue tail still above {TAIL_EPS:e} with a {n}-point grid"
            )));
        }
        n *= 2;
    }
}

/// Brute-force stationary law of the truncated imbedded chain
/// `Z' = max(Z - C, 0) + A` on `{0..k_max}`, overflow folded into `k_max`,
/// solved by GTH state reduction.
pub fn z_oracle(load: f64, capacity: &Pmf, k_max: usize) -> Result<Pmf> {
    let mean_c = capacity.mean();
    if !(mean_c > load) {
        return Err(Error::Unstable {
            capacity: mean_c,
            load,
        });
    }
    let kk = k_max;
    if kk == 0 {
        return Ok(Pmf::delta(0));
    }
    let eta = capacity.bound();
    let c = capacity.probs();
    let mut a = poisson_weights(load, 1e-300);
    // tail_a[j] = P[A >= j]
    let mut tail_a = vec![0.0; a.len().max(kk + 1) + 1];
    for j in (0..a.len()).rev() {
        tail_a[j] = tail_a[j + 1] + a[j];
    }
    a.resize(kk + 1, 0.0);
    let original = |i: usize, j: usize| -> f64 {
        let mut p = 0.0;
        for (cap, &pc) in c.iter().enumerate() {
            if pc == 0.0 {
                continue;
            }
            let left = i.saturating_sub(cap);
            if j < left {
                continue;
            }
            p += pc * if j == kk { tail_a[j - left] } else { a[j - left] };
        }
        p
    };
    let init_column = |j: usize| -> Vec<f64> {
        let rows = (j + eta).min(kk);
        (0..=rows).map(|i| original(i, j)).collect()
    };

    let mut window: Vec<Option<Vec<f64>>> = vec![None; kk + 1];
    let mut archive: Vec<Vec<f64>> = vec![Vec::new(); kk + 1];
    let mut exit = vec![0.0; kk + 1];
    for n in (1..=kk).rev() {
        let lo = n.saturating_sub(eta);
        for (j, col) in window.iter_mut().enumerate().take(n + 1).skip(lo) {
            if col.is_none() {
                *col = Some(init_column(j));
            }
        }
        let row: Vec<f64> = (lo..n)
            .map(|j| window[j].as_ref().unwrap().get(n).copied().unwrap_or(0.0))
            .collect();
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            return Err(Error::Convergence(format!("state {n} cannot move down")));
        }
        let mut col = window[n].take().unwrap();
        col.resize(n, 0.0);
        for (off, &r) in row.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let f = r / s;
            let target = window[lo + off].as_mut().unwrap();
            if target.len() < n {
                target.resize(n, 0.0);
            }
            for (t, &v) in target.iter_mut().zip(col.iter()) {
                *t += v * f;
            }
        }
        archive[n] = col;
        exit[n] = s;
    }
    let mut pi = vec![0.0; kk + 1];
    pi[0] = 1.0;
    for n in 1..=kk {
        let inflow: f64 = archive[n].iter().zip(&pi[..n]).map(|(p, q)| p * q).sum();
        pi[n] = inflow / exit[n];
    }
    let total: f64 = pi.iter().sum();
    if pi[kk] / total > BOUNDARY_EPS {
        return Err(Error::Truncation(format!(
            "boundary state {kk} holds mass {:e}",
            pi[kk] / total
        )));
    }
    Pmf::from_weights(pi)
}
