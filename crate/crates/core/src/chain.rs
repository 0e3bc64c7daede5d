//! Whole-line solutions, parameter sweeps and the relative waiting-time gain.

use rayon::prelude::*;

use crate::batchq::{solve_queue, QueueSolution};
use crate::coupling::StationFlow;
use crate::error::{Error, Result};
use crate::model::{ArrivalProcess, LineConfig, Scenario};
use crate::stability::{propagate, thresholds_bisect, StabilityRow};

#[derive(Clone, Debug, PartialEq)]
pub struct StationSolution {
    pub flow: StationFlow,
    pub report: StabilityRow,
    /// Largest total rate at which this station is stable.
    pub threshold: f64,
    /// Absent when the station is unstable: its queue grows without bound.
    pub queue: Option<QueueSolution>,
}

impl StationSolution {
    pub fn w_mean(&self) -> Option<f64> {
        self.queue.as_ref().map(|q| q.w_mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSolution {
    pub lambda: f64,
    pub line: LineConfig,
    pub stations: Vec<StationSolution>,
}

fn require_poisson(scenario: &Scenario) -> Result<()> {
    scenario.line.check()?;
    let v = scenario.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    if scenario.arrival_process != ArrivalProcess::Poisson {
        return Err(Error::Invalid(vec![
            "arrival_process: the analytic solver needs poisson arrivals".into(),
        ]));
    }
    Ok(())
}

/// Solves every station in line order at the scenario's arrival rate.
pub fn solve_line(scenario: &Scenario) -> Result<LineSolution> {
    require_poisson(scenario)?;
    solve_unchecked(&scenario.line, scenario.lambda)
}

fn solve_unchecked(line: &LineConfig, lambda: f64) -> Result<LineSolution> {
    let n = line.stations.len();
    let mut queues: Vec<Option<QueueSolution>> = vec![None; n];
    let steps = propagate(line, lambda, true, |m, lambda_m, capacity| {
        let q = solve_queue(lambda_m, line.beta, capacity)?;
        let z = q.z_pmf.clone();
        queues[m] = Some(q);
        Ok(z)
    })?;
    let thresholds = thresholds_bisect(line)?;
    let stations = steps
        .into_iter()
        .zip(queues)
        .zip(thresholds)
        .map(|((step, queue), threshold)| StationSolution {
            flow: step.flow.expect("full propagation carries flows"),
            report: step.row,
            threshold,
            queue,
        })
        .collect();
    Ok(LineSolution {
        lambda,
        line: line.clone(),
        stations,
    })
}

/// Iterates the valley occupancy `R_0 <- R_M` of a closed loop until the
/// total-variation change drops below `tol`. Experimental: returns the last
/// solution and whether it converged within `max_iter` rounds.
pub fn solve_closed_loop(scenario: &Scenario, tol: f64, max_iter: usize) -> Result<(LineSolution, bool)> {
    require_poisson(scenario)?;
    let mut line = scenario.line.clone();
    let mut sol = solve_unchecked(&line, scenario.lambda)?;
    for _ in 0..max_iter {
        let last = &sol.stations.last().expect("validated line has stations").flow.ride;
        let change = last.total_variation(&line.r0);
        if change < tol {
            return Ok((sol, true));
        }
        line.r0 = last.clone();
        sol = solve_unchecked(&line, scenario.lambda)?;
    }
    Ok((sol, false))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    /// Access cap of the given 0-based station.
    Eta(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub lambda: f64,
    pub thresholds: Vec<f64>,
    pub expected_capacity: Vec<f64>,
    pub capacity_variance: Vec<f64>,
    pub expected_board: Vec<f64>,
    pub stable: Vec<bool>,
    pub w_mean: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Per-point failures are kept as messages so the sweep can go on.
    pub result: std::result::Result<SweepSummary, String>,
}

impl SweepSummary {
    fn from_solution(sol: &LineSolution) -> SweepSummary {
        let s = &sol.stations;
        SweepSummary {
            lambda: sol.lambda,
            thresholds: s.iter().map(|x| x.threshold).collect(),
            expected_capacity: s.iter().map(|x| x.report.expected_capacity).collect(),
            capacity_variance: s.iter().map(|x| x.flow.capacity.variance()).collect(),
            expected_board: s.iter().map(|x| x.report.expected_board).collect(),
            stable: s.iter().map(|x| x.report.stable).collect(),
            w_mean: s.iter().map(|x| x.w_mean()).collect(),
        }
    }
}

/// Worker count for sweeps: `LIFTLINE_THREADS` if set, else rayon's default.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("LIFTLINE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

fn sweep_point(scenario: &Scenario, axis: Axis, value: f64) -> Result<SweepSummary> {
    let mut line = scenario.line.clone();
    let mut lambda = scenario.lambda;
    match axis {
        Axis::Lambda => lambda = value,
        Axis::Eta(m) => {
            if value.fract() != 0.0 || value < 1.0 || value > line.gamma as f64 {
                return Err(Error::Invalid(vec![format!(
                    "eta: {value} is not a seat count in [1, {}]",
                    line.gamma
                )]));
            }
            line.stations[m].eta = value as usize;
        }
    }
    let sol = solve_line(&Scenario {
        line,
        lambda,
        arrival_process: scenario.arrival_process,
    })?;
    Ok(SweepSummary::from_solution(&sol))
}

/// Solves the line at every grid value of `axis`; rows come back in grid
/// order whatever the parallelism.
pub fn sweep(scenario: &Scenario, axis: Axis, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if scenario.line.stations.is_empty() {
        return Err(Error::Invalid(vec!["stations: at least one station required".into()]));
    }
    if grid.is_empty() {
        return Err(Error::Usage("sweep grid is empty".into()));
    }
    let ascending = grid.windows(2).all(|w| w[0] <= w[1]);
    let descending = grid.windows(2).all(|w| w[0] >= w[1]);
    if !(ascending || descending) {
        return Err(Error::Usage("sweep grid must be sorted".into()));
    }
    if let Axis::Eta(m) = axis {
        if m >= scenario.line.stations.len() {
            return Err(Error::Usage(format!(
                "station {} does not exist (line has {})",
                m + 1,
                scenario.line.stations.len()
            )));
        }
    }
    let run = || -> Vec<SweepRow> {
        grid.par_iter()
            .map(|&value| SweepRow {
                value,
                result: sweep_point(scenario, axis, value).map_err(|e| e.to_string()),
            })
            .collect()
    };
    match sweep_threads() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(e.to_string()))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

/// `h_m(i) = (w(gamma) - w(i)) / w(gamma)`: relative reduction of the mean
/// wait at station `m` (0-based) when the first station caps access at `i`.
pub fn relative_gain(scenario: &Scenario, m: usize, eta1_values: &[usize], lambda: f64) -> Result<Vec<f64>> {
    let wait = |eta1: usize| -> Result<f64> {
        let line = scenario.line.with_eta(0, eta1);
        let sol = solve_line(&Scenario {
            line,
            lambda,
            arrival_process: scenario.arrival_process,
        })?;
        let st = sol
            .stations
            .get(m)
            .ok_or_else(|| Error::Usage(format!("station {} does not exist", m + 1)))?;
        st.w_mean().ok_or_else(|| {
            Error::GainUndefined(format!(
                "station {} is unstable at lambda = {lambda} with eta_1 = {eta1}",
                m + 1
            ))
        })
    };
    let base = wait(scenario.line.gamma)?;
    eta1_values
        .iter()
        .map(|&i| Ok((base - wait(i)?) / base))
        .collect()
}
