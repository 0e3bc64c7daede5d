//! Single-station queue with Poisson arrivals and i.i.d. random batch capacity.

mod roots;
mod waiting;
mod zdist;

pub use roots::{find_roots, RootSet, INNER_RADIUS, ROOT_RESIDUAL_TOL};
pub use waiting::{
    left_behind, queue_time_stationary, waiting_time, WaitingTime, CDF_STEPS_PER_HEADWAY,
};
pub use zdist::{z_head, z_oracle, z_pgf, z_stationary, BOUNDARY_EPS, TAIL_EPS};

use crate::distkit::Pmf;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QueueSolution {
    /// Queue found by an arriving cabin.
    pub z_pmf: Pmf,
    /// Queue left behind by a departing cabin.
    pub left_pmf: Pmf,
    /// Queue found by an arriving passenger.
    pub q_pmf: Pmf,
    pub w_mean: f64,
    pub w_var: f64,
    pub w_cdf: Vec<f64>,
    /// Grid spacing of `w_cdf` in seconds.
    pub w_cdf_step: f64,
}

/// Solves one station fed at rate `lambda_m` by cabins every `beta` seconds.
pub fn solve_queue(lambda_m: f64, beta: f64, capacity: &Pmf) -> Result<QueueSolution> {
    let load = lambda_m * beta;
    if !(capacity.mean() > load) {
        return Err(Error::Unstable {
            capacity: capacity.mean(),
            load,
        });
    }
    let z_pmf = if load == 0.0 {
        Pmf::delta(0)
    } else {
        let roots = find_roots(load, capacity)?;
        z_stationary(load, capacity, &roots, None)?
    };
    let w = waiting_time(&z_pmf, capacity, lambda_m, beta)?;
    Ok(QueueSolution {
        left_pmf: left_behind(&z_pmf, capacity),
        q_pmf: queue_time_stationary(&z_pmf, capacity, lambda_m, beta)?,
        z_pmf,
        w_mean: w.mean,
        w_var: w.var,
        w_cdf: w.cdf,
        w_cdf_step: w.cdf_step,
    })
}

/// Queue law as far as boarding is concerned: exact below the largest
/// capacity, the rest lumped at it.
pub fn boarding_queue(lambda_m: f64, beta: f64, capacity: &Pmf) -> Result<Pmf> {
    let load = lambda_m * beta;
    if load == 0.0 {
        return Ok(Pmf::delta(0));
    }
    let roots = find_roots(load, capacity)?;
    z_head(load, capacity, &roots)
}
