//! Expected capacities, boardings and stability thresholds along a line.
//!
//! Stations are visited in line order. A stable station boards on average
//! everything that arrives per headway, `E[T] = lambda_m beta`; an unstable
//! one fills every free seat it may, `T = C`. Where a downstream access cap
//! makes the capacity depend on more than the mean of the stayers, full
//! distributions are carried; otherwise means suffice.

use crate::batchq::boarding_queue;
use crate::coupling::{board_dist, capacity_dist, ride_dist, stay_dist, StationFlow};
use crate::distkit::Pmf;
use crate::error::{Error, Result};
use crate::model::LineConfig;

/// Absolute tolerance of the threshold bisection on lambda.
pub const BISECT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub expected_capacity: f64,
    /// Present when the capacity law was propagated in full.
    pub capacity_variance: Option<f64>,
    pub expected_board: f64,
    pub expected_ride: f64,
    pub load_factor: f64,
    /// `E[C_m] / (nu_m beta)` under the current upstream state: the total
    /// rate at which this station would saturate if nothing upstream changed.
    pub scaled_threshold: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub lambda: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| r.stable)
    }
}

/// One station after propagation; `flow` is absent on the means-only path.
#[derive(Clone, Debug)]
pub(crate) struct Step {
    pub row: StabilityRow,
    pub flow: Option<StationFlow>,
}

enum Ride {
    Dist(Pmf),
    Mean(f64),
}

fn load_factor(load: f64, capacity: f64) -> f64 {
    if capacity > 0.0 {
        load / capacity
    } else {
        f64::INFINITY
    }
}

fn scaled(capacity: f64, nu: f64, beta: f64) -> f64 {
    if nu > 0.0 {
        capacity / (nu * beta)
    } else {
        f64::INFINITY
    }
}

/// Propagates the line at total rate `lambda`.
///
/// `queue(m, lambda_m, capacity)` supplies the queue law of a stable station
/// whenever its riding distribution is needed. With `full` set every station
/// carries distributions.
pub(crate) fn propagate<F>(line: &LineConfig, lambda: f64, full: bool, mut queue: F) -> Result<Vec<Step>>
where
    F: FnMut(usize, f64, &Pmf) -> Result<Pmf>,
{
    let n = line.stations.len();
    let gamma = line.gamma;
    // ride law of station j is needed iff a later station caps access
    let mut needs_dist = vec![full; n];
    let mut capped_after = false;
    for j in (0..n).rev() {
        needs_dist[j] |= capped_after;
        capped_after |= line.stations[j].eta < gamma;
    }

    let mut ride = Ride::Dist(line.r0.clone());
    let mut out = Vec::with_capacity(n);
    for (m, st) in line.stations.iter().enumerate() {
        let lambda_m = lambda * st.nu;
        let load = lambda_m * line.beta;
        let step = match ride {
            Ride::Dist(prev) => {
                let stay = stay_dist(&prev, st.sigma);
                let capacity = capacity_dist(&stay, st.eta, gamma);
                let (mean_c, var_c) = capacity.moments();
                let stable = load < mean_c;
                let row = StabilityRow {
                    expected_capacity: mean_c,
                    capacity_variance: Some(var_c),
                    expected_board: if stable { load } else { mean_c },
                    expected_ride: 0.0,
                    load_factor: load_factor(load, mean_c),
                    scaled_threshold: scaled(mean_c, st.nu, line.beta),
                    stable,
                };
                if needs_dist[m] {
                    let z = if stable {
                        queue(m, lambda_m, &capacity).map_err(|e| e.at_station(m + 1))?
                    } else {
                        Pmf::delta(0)
                    };
                    let ride_m = ride_dist(&z, &stay, st.eta, gamma, stable);
                    let board = if stable {
                        board_dist(&z, &capacity)
                    } else {
                        capacity.clone()
                    };
                    ride = Ride::Dist(ride_m.clone());
                    Step {
                        row: StabilityRow {
                            expected_ride: ride_m.mean(),
                            ..row
                        },
                        flow: Some(StationFlow {
                            stay,
                            capacity,
                            board,
                            ride: ride_m,
                            stable,
                        }),
                    }
                } else {
                    let r = stay.mean() + row.expected_board;
                    ride = Ride::Mean(r);
                    Step {
                        row: StabilityRow {
                            expected_ride: r,
                            ..row
                        },
                        flow: None,
                    }
                }
            }
            Ride::Mean(prev) => {
                // only reached for uncapped stations
                let stay = prev * (1.0 - st.sigma);
                let mean_c = gamma as f64 - stay;
                let stable = load < mean_c;
                let board = if stable { load } else { mean_c };
                ride = Ride::Mean(stay + board);
                Step {
                    row: StabilityRow {
                        expected_capacity: mean_c,
                        capacity_variance: None,
                        expected_board: board,
                        expected_ride: stay + board,
                        load_factor: load_factor(load, mean_c),
                        scaled_threshold: scaled(mean_c, st.nu, line.beta),
                        stable,
                    },
                    flow: None,
                }
            }
        };
        out.push(step);
    }
    Ok(out)
}

fn analytic_queue(line: &LineConfig) -> impl Fn(usize, f64, &Pmf) -> Result<Pmf> + '_ {
    move |_, lambda_m, capacity| boarding_queue(lambda_m, line.beta, capacity)
}

/// Expected capacity, boarding and load factor of every station at total
/// arrival rate `lambda`.
pub fn chain_expectations(line: &LineConfig, lambda: f64) -> Result<StabilityReport> {
    line.check()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Invalid(vec![format!(
            "lambda: must be a non-negative number, got {lambda}"
        )]));
    }
    let steps = propagate(line, lambda, false, analytic_queue(line))?;
    Ok(StabilityReport {
        lambda,
        rows: steps.into_iter().map(|s| s.row).collect(),
    })
}

/// Same as [`chain_expectations`] but propagating full distributions at
/// every station.
pub fn chain_expectations_full(line: &LineConfig, lambda: f64) -> Result<StabilityReport> {
    line.check()?;
    let steps = propagate(line, lambda, true, analytic_queue(line))?;
    Ok(StabilityReport {
        lambda,
        rows: steps.into_iter().map(|s| s.row).collect(),
    })
}

/// Expected capacities from the mean recursion of an uncapped line in which
/// every station is stable.
pub fn capacity_means_uncapped(line: &LineConfig, lambda: f64) -> Vec<f64> {
    let mut riders = line.mean_r0();
    line.stations
        .iter()
        .map(|st| {
            let stay = riders * (1.0 - st.sigma);
            riders = stay + st.nu * lambda * line.beta;
            line.gamma as f64 - stay
        })
        .collect()
}

/// Scaled threshold of station `m` (0-based) for a line in which it is the
/// bottleneck and applies no access control:
///
/// ```text
/// (gamma - E[R_0] prod_{i<=m} (1 - sigma_i)) / (sum_{j<=m} nu_j beta prod_{j<i<=m} (1 - sigma_i))
/// ```
pub fn scaled_threshold_closed(line: &LineConfig, m: usize) -> Result<f64> {
    let st = &line.stations[..=m];
    let keep_all: f64 = st.iter().map(|s| 1.0 - s.sigma).product();
    let num = line.gamma as f64 - line.mean_r0() * keep_all;
    let mut den = 0.0;
    for j in 0..=m {
        let keep: f64 = st[j + 1..].iter().map(|s| 1.0 - s.sigma).product();
        den += st[j].nu * line.beta * keep;
    }
    if den <= 0.0 {
        return Err(Error::NoArrivals(m + 1));
    }
    Ok(num / den)
}

/// Largest total rate at which station `m` is stable, by bisection.
pub fn threshold_bisect(line: &LineConfig, m: usize) -> Result<f64> {
    let st = &line.stations[m];
    if st.nu <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let stable_at = |lambda: f64| -> Result<bool> {
        let truncated = LineConfig {
            stations: line.stations[..=m].to_vec(),
            ..line.clone()
        };
        let steps = propagate(&truncated, lambda, false, analytic_queue(line))?;
        Ok(steps[m].row.stable)
    };
    let mut lo = 0.0;
    let mut hi = line.gamma as f64 / (st.nu * line.beta) + 1.0;
    if !stable_at(lo)? {
        return Ok(0.0);
    }
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stable_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scaled thresholds of all stations by bisection.
pub fn thresholds_bisect(line: &LineConfig) -> Result<Vec<f64>> {
    line.check()?;
    (0..line.stations.len())
        .map(|m| threshold_bisect(line, m))
        .collect()
}
