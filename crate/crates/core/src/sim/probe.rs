//! Empirical stability verdicts from queue growth.
//!
//! The queue left behind each cabin is averaged over blocks of cycles and a
//! straight line is fitted through the block means. A station whose queue
//! grows faster than a small fraction of its per-cycle demand is unstable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::ols_slope;
use super::{Engine, Observer};
use crate::error::{Error, Result};
use crate::model::{ArrivalProcess, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeVerdict {
    pub lambda: f64,
    pub station: usize,
    pub verdict: Verdict,
    /// Fitted queue growth, passengers per cycle.
    pub slope: f64,
    pub slope_se: f64,
    /// Growth rate separating the verdicts.
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    pub horizon: u64,
    pub warmup: u64,
    pub blocks: usize,
    /// Growth threshold as a fraction of the per-cycle demand.
    pub epsilon_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            horizon: 400_000,
            warmup: 40_000,
            blocks: 400,
            epsilon_fraction: 0.002,
            seed: 0x5eed,
        }
    }
}

struct BlockObserver {
    warmup: u64,
    span: u64,
    blocks: usize,
    sums: Vec<Vec<f64>>,
}

impl Observer for BlockObserver {
    fn after(&mut self, m: usize, k: u64, len: u64) {
        if k > self.warmup {
            let b = ((k - self.warmup - 1) * self.blocks as u64 / self.span) as usize;
            self.sums[m][b] += len as f64;
        }
    }
}

/// Verdicts with the default long horizon.
pub fn stability_probe(scenario: &Scenario, lambda_grid: &[f64], process: ArrivalProcess) -> Result<Vec<ProbeVerdict>> {
    stability_probe_with(scenario, lambda_grid, process, &ProbeOptions::default())
}

/// One verdict per grid rate and station, in grid then station order.
pub fn stability_probe_with(
    scenario: &Scenario,
    lambda_grid: &[f64],
    process: ArrivalProcess,
    opts: &ProbeOptions,
) -> Result<Vec<ProbeVerdict>> {
    let probe = Scenario {
        arrival_process: process,
        ..scenario.clone()
    };
    let v = probe.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("probe grid must be non-empty and ascending".into()));
    }
    if opts.horizon <= opts.warmup || ((opts.horizon - opts.warmup) as usize) < 2 * opts.blocks || opts.blocks < 3 {
        return Err(Error::Usage("probe horizon too short for its blocks".into()));
    }
    let line = &scenario.line;
    let span = opts.horizon - opts.warmup;
    let per_rate: Vec<Vec<ProbeVerdict>> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut engine = Engine::new(line, lambda, process, opts.seed, i, false);
            let mut obs = BlockObserver {
                warmup: opts.warmup,
                span,
                blocks: opts.blocks,
                sums: vec![vec![0.0; opts.blocks]; line.stations.len()],
            };
            for _ in 0..opts.horizon {
                engine.step(&mut obs);
            }
            // block centres and sizes in cycles
            let edges: Vec<u64> = (0..=opts.blocks as u64).map(|b| b * span / opts.blocks as u64).collect();
            let x: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1]) as f64).collect();
            let size: Vec<f64> = edges.windows(2).map(|e| (e[1] - e[0]) as f64).collect();
            obs.sums
                .iter()
                .enumerate()
                .map(|(m, sums)| {
                    let y: Vec<f64> = sums.iter().zip(&size).map(|(s, n)| s / n).collect();
                    let (slope, se) = ols_slope(&x, &y);
                    let demand = lambda * line.stations[m].nu * line.beta;
                    let epsilon = opts.epsilon_fraction * demand;
                    let verdict = if demand == 0.0 || slope + 2.0 * se < epsilon {
                        Verdict::Stable
                    } else if slope - 2.0 * se > epsilon {
                        Verdict::Unstable
                    } else {
                        Verdict::Inconclusive
                    };
                    ProbeVerdict {
                        lambda,
                        station: m,
                        verdict,
                        slope,
                        slope_se: se,
                        epsilon,
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_rate.into_iter().flatten().collect())
}

/// Midpoint between the last stable rate and the first unstable rate of
/// station `m` (0-based), when the verdicts flip exactly once.
pub fn flip_point(verdicts: &[ProbeVerdict], m: usize) -> Option<f64> {
    let rows: Vec<&ProbeVerdict> = verdicts
        .iter()
        .filter(|v| v.station == m && v.verdict != Verdict::Inconclusive)
        .collect();
    let first_unstable = rows.iter().position(|v| v.verdict == Verdict::Unstable)?;
    if first_unstable == 0 || rows[first_unstable..].iter().any(|v| v.verdict != Verdict::Unstable) {
        return None;
    }
    Some(0.5 * (rows[first_unstable - 1].lambda + rows[first_unstable].lambda))
}
