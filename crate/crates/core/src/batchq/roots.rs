//! Roots of `z^eta = A(z) C~(z)` in the closed unit disk, where
//! `A(z) = exp(load (z - 1))` is the Poisson arrival pgf over one headway
//! and `C~(z) = sum_j c(j) z^(eta - j)` is the reversed capacity pgf.
//!
//! Seeds come from the eigenvalues of the (balanced) companion matrix of the
//! Taylor-truncated polynomial; each seed is then polished by Newton's method
//! on the exact transcendental function, deflating roots already accepted.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::distkit::{ln_factorial, Pmf};
use crate::error::{Error, Result};

/// Residual bound on `|mu^eta - A(mu) C~(mu)|` for an accepted root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;
/// Non-trivial roots must lie strictly inside this radius.
pub const INNER_RADIUS: f64 = 1.0 - 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RootSet {
    /// `roots[0]` is the limit root 1, set exactly.
    roots: Vec<Complex64>,
}

impl RootSet {
    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// The roots strictly inside the disk.
    pub fn inner(&self) -> &[Complex64] {
        &self.roots[1..]
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Largest modulus among the inner roots (0 when there are none).
    pub fn subdominant_modulus(&self) -> f64 {
        self.inner().iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

/// The transcendental function and its derivative.
pub(crate) struct KernelFn<'a> {
    load: f64,
    eta: usize,
    cap: &'a [f64],
}

impl<'a> KernelFn<'a> {
    pub(crate) fn new(load: f64, capacity: &'a Pmf) -> Self {
        KernelFn {
            load,
            eta: capacity.bound(),
            cap: capacity.probs(),
        }
    }

    /// `C~(z)` and its derivative.
    fn reversed_pgf(&self, z: Complex64) -> (Complex64, Complex64) {
        // coefficient of z^i is c(eta - i)
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for i in (0..=self.eta).rev() {
            d = d * z + v;
            v = v * z + self.cap[self.eta - i];
        }
        (v, d)
    }

    pub(crate) fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let a = ((z - 1.0) * self.load).exp();
        let (c, dc) = self.reversed_pgf(z);
        let zn1 = if self.eta == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            z.powu(self.eta as u32 - 1)
        };
        let f = zn1 * z - a * c;
        let df = zn1 * self.eta as f64 - a * (c * self.load + dc);
        (f, df)
    }

    /// `D(z) / (z - 1)` written without the cancellation that `eval` suffers
    /// next to `z = 1`, where both vanish.
    pub(crate) fn quotient(&self, z: Complex64) -> Complex64 {
        let w = z - 1.0;
        let a = (w * self.load).exp();
        // sum_i z^i (1 - P[C <= eta - 1 - i]) over i < eta, by Horner
        let mut below = 0.0;
        let mut free = Complex64::new(0.0, 0.0);
        let mut held = Complex64::new(0.0, 0.0);
        let mut cdf = vec![0.0; self.eta];
        for (k, c) in cdf.iter_mut().enumerate() {
            below += self.cap[k];
            *c = below;
        }
        for i in (0..self.eta).rev() {
            free = free * z + 1.0;
            held = held * z + cdf[self.eta - 1 - i];
        }
        free - a * held - exp_ratio(w * self.load) * self.load
    }
}

/// `(e^x - 1) / x`, accurate for small `x`.
fn exp_ratio(x: Complex64) -> Complex64 {
    if x.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..30 {
            term = term * x / k as f64;
            sum += term;
        }
        sum
    } else {
        (x.exp() - 1.0) / x
    }
}

/// Degree of the Taylor truncation of the arrival pgf.
fn taylor_degree(load: f64, eta: usize) -> usize {
    let by_load = (load + 12.0 * load.sqrt() + 10.0).ceil() as usize;
    30.max(eta + 20).max(by_load)
}

/// Ascending coefficients of `z^eta - T_d(z) C~(z)`.
fn truncated_polynomial(load: f64, capacity: &Pmf) -> Vec<f64> {
    let eta = capacity.bound();
    let d = taylor_degree(load, eta);
    let taylor: Vec<f64> = (0..=d)
        .map(|k| {
            if load == 0.0 {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-load + k as f64 * load.ln() - ln_factorial(k)).exp()
            }
        })
        .collect();
    let cap = capacity.probs();
    let mut poly = vec![0.0; eta + d + 1];
    poly[eta] = 1.0;
    for (a, &t) in taylor.iter().enumerate() {
        for i in 0..=eta {
            poly[a + i] -= t * cap[eta - i];
        }
    }
    while poly.len() > 1 && *poly.last().unwrap() == 0.0 {
        poly.pop();
    }
    poly
}

/// Parlett-Reinsch diagonal balancing, in place.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / RADIX;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= g;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Roots of a real polynomial (ascending coefficients) via the companion
/// matrix.
pub(crate) fn polynomial_roots(poly: &[f64]) -> Option<Vec<Complex64>> {
    let n = poly.len() - 1;
    if n == 0 {
        return Some(Vec::new());
    }
    let lead = poly[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -poly[i] / lead;
    }
    balance(&mut m);
    let schur = Schur::try_new(m, 1e-15, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

fn newton_polish(kernel: &KernelFn, seed: Complex64, accepted: &[Complex64]) -> Option<Complex64> {
    let mut z = seed;
    for _ in 0..200 {
        let (f, df) = kernel.eval(z);
        if f.norm() == 0.0 {
            return Some(z);
        }
        let mut ratio = df / f;
        for r in accepted {
            ratio -= (z - r).inv();
        }
        let step = ratio.inv();
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        // damp wild steps that would leave the region of interest
        let step = if step.norm() > 0.5 {
            step * (0.5 / step.norm())
        } else {
            step
        };
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1e-3) {
            return Some(z);
        }
    }
    let (f, _) = kernel.eval(z);
    (f.norm() < ROOT_RESIDUAL_TOL).then_some(z)
}

/// All `eta` roots in the closed unit disk for a stable station.
pub fn find_roots(load: f64, capacity: &Pmf) -> Result<RootSet> {
    let mean = capacity.mean();
    if !(mean > load) {
        return Err(Error::Unstable {
            capacity: mean,
            load,
        });
    }
    let eta = capacity.bound();
    let one = Complex64::new(1.0, 0.0);
    let mut roots = vec![one];
    // with no arrivals the queue is empty and the inner roots sit on the
    // circle; nothing downstream needs them
    if eta <= 1 || load == 0.0 {
        return Ok(RootSet { roots });
    }

    let kernel = KernelFn::new(load, capacity);
    let poly = truncated_polynomial(load, capacity);
    let mut seeds = polynomial_roots(&poly).unwrap_or_default();
    seeds.retain(|s| s.norm() < 1.2);
    seeds.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    // fallback seeds spread inside the disk
    for k in 0..4 * eta {
        let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / (4 * eta) as f64;
        let radius = 0.3 + 0.6 * ((k % 3) as f64) / 2.0;
        seeds.push(Complex64::from_polar(radius, theta));
    }

    let mut inner: Vec<Complex64> = Vec::with_capacity(eta - 1);
    for seed in seeds {
        if inner.len() == eta - 1 {
            break;
        }
        let mut deflate = inner.clone();
        deflate.push(one);
        let Some(r) = newton_polish(&kernel, seed, &deflate) else {
            continue;
        };
        if r.norm() >= INNER_RADIUS || (r - one).norm() < 1e-6 {
            continue;
        }
        if inner.iter().any(|q| (q - r).norm() < 1e-8) {
            continue;
        }
        // clean up: undeflated Newton from the found point
        let r = newton_polish(&kernel, r, &[]).unwrap_or(r);
        if inner.iter().any(|q| (q - r).norm() < 1e-8) {
            continue;
        }
        let r = if r.im.abs() < 1e-13 {
            Complex64::new(r.re, 0.0)
        } else {
            r
        };
        inner.push(r);
    }
    if inner.len() != eta - 1 {
        return Err(Error::Convergence(format!(
            "found {} of {} inner roots (load {load}, capacity bound {eta})",
            inner.len(),
            eta - 1
        )));
    }
    for r in &inner {
        let (f, _) = kernel.eval(*r);
        if f.norm() > ROOT_RESIDUAL_TOL {
            return Err(Error::Convergence(format!(
                "root {r} has residual {}",
                f.norm()
            )));
        }
    }
    // deterministic order: by argument, then modulus
    inner.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));
    roots.extend(inner);
    Ok(RootSet { roots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_server_has_only_unit_root() {
        let rs = find_roots(0.7, &Pmf::delta(1)).unwrap();
        assert_eq!(rs.roots(), &[Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn quotient_matches_kernel() {
        let cap = Pmf::binomial(8, 0.54);
        let k = KernelFn::new(3.1, &cap);
        for z in [Complex64::new(0.3, 0.8), Complex64::new(-1.0, 0.0), Complex64::new(1.2, -0.4)] {
            let (d, _) = k.eval(z);
            assert!((k.quotient(z) * (z - 1.0) - d).norm() < 1e-13);
        }
        let q = k.quotient(Complex64::new(1.0, 0.0));
        assert!((q.re - (cap.mean() - 3.1)).abs() < 1e-13 && q.im == 0.0);
    }

    #[test]
    fn unstable_is_rejected() {
        assert!(matches!(
            find_roots(2.0, &Pmf::delta(2)),
            Err(Error::Unstable { .. })
        ));
        assert!(find_roots(8.0, &Pmf::delta(8)).is_err());
    }

    #[test]
    fn batch_two_root_matches_real_bisection() {
        // oracle: sign change of z^2 - exp((z - 1) 0.1) on [-1, 0]
        let g = |z: f64| z * z - ((z - 1.0) * 0.1).exp();
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rs = find_roots(0.1, &Pmf::delta(2)).unwrap();
        assert_eq!(rs.len(), 2);
        let mu = rs.inner()[0];
        assert!(mu.im == 0.0);
        assert!((mu.re - 0.5 * (lo + hi)).abs() < 1e-13, "{mu} vs {lo}");
    }

    /// Fixed-point oracle for fixed batch size: z = w exp(load (z - 1) / eta)
    /// with w an eta-th root of unity is a contraction inside the disk.
    fn fixed_batch_roots(load: f64, eta: usize) -> Vec<Complex64> {
        (1..eta)
            .map(|k| {
                let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / eta as f64);
                let mut z = Complex64::new(0.0, 0.0);
                for _ in 0..2000 {
                    z = w * ((z - 1.0) * (load / eta as f64)).exp();
                }
                z
            })
            .collect()
    }

    #[test]
    fn fixed_batch_roots_match_fixed_point_oracle() {
        for &(load, eta) in &[(5.0, 8), (7.9, 8), (0.4, 8), (3.0, 6), (4.5, 5), (1.0, 3)] {
            let rs = find_roots(load, &Pmf::delta(eta)).unwrap();
            assert_eq!(rs.len(), eta);
            let want = fixed_batch_roots(load, eta);
            for w in &want {
                let best = rs.inner().iter().map(|r| (r - w).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-10, "load {load} eta {eta}: {w} missing ({best})");
            }
            let cap = Pmf::delta(eta);
            let kernel = KernelFn::new(load, &cap);
            for r in rs.inner() {
                assert!(r.norm() < INNER_RADIUS);
                assert!(kernel.eval(*r).0.norm() < ROOT_RESIDUAL_TOL);
            }
        }
    }

    #[test]
    fn random_capacity_roots() {
        let caps = [
            Pmf::binomial(8, 0.54),
            Pmf::two_point(0, 8),
            Pmf::two_point(1, 7),
            Pmf::new(vec![0.05, 0.0, 0.1, 0.15, 0.2, 0.0, 0.3, 0.1, 0.1]).unwrap(),
        ];
        for cap in &caps {
            for rho in [0.1, 0.5, 0.9, 0.99, 0.999] {
                let load = rho * cap.mean();
                let rs = find_roots(load, cap).unwrap();
                assert_eq!(rs.len(), cap.bound());
                for r in rs.inner() {
                    assert!(r.norm() < INNER_RADIUS);
                }
            }
        }
    }
}
