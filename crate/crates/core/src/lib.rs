//! Queueing analytics and simulation for cabin lines (gondolas, cable cars)
//! whose stations cap how many passengers may board each cabin.
//!
//! Cabins pass every station each `beta` seconds. Passengers queue at the
//! stations and board a cabin up to its free seats, or up to the station's
//! access cap if that is smaller. [`chain::solve_line`] gives stationary
//! queue and waiting-time laws station by station, [`stability`] the
//! arrival rates beyond which queues grow without bound, and [`sim`] a
//! discrete-event simulator of the same line.

// `!(x > y)` is how the checks reject NaN along with too-small values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batchq;
pub mod chain;
pub mod cli;
pub mod coupling;
pub mod distkit;
pub mod error;
pub mod model;
pub mod sim;
pub mod stability;

pub use distkit::Pmf;
pub use error::{Error, Result};
pub use model::{ArrivalProcess, LineConfig, Scenario, StationConfig};
