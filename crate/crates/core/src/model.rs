//! Line configuration, scenario files and validation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distkit::Pmf;
use crate::error::{Error, Result};

/// Tolerance on the sum of arrival fractions.
pub const NU_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    /// Fraction of the total arrival rate that enters at this station.
    pub nu: f64,
    /// Probability that a rider leaves the cabin here.
    pub sigma: f64,
    /// Access cap: at most this many passengers board one cabin.
    pub eta: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineConfig {
    /// Cabin headway in seconds.
    pub beta: f64,
    /// Seats per cabin.
    pub gamma: usize,
    pub stations: Vec<StationConfig>,
    /// Occupants of cabins arriving at the first station.
    pub r0: Pmf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson,
    Deterministic,
    GammaRenewal { shape: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub line: LineConfig,
    /// Total passenger arrival rate per second.
    pub lambda: f64,
    pub arrival_process: ArrivalProcess,
}

#[derive(Serialize, Deserialize)]
struct R0File {
    pmf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    beta: f64,
    gamma: usize,
    lambda: f64,
    arrival_process: ArrivalProcess,
    r0: R0File,
    stations: Vec<StationConfig>,
}

impl LineConfig {
    /// Every violated invariant, in field order.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.beta.is_finite() && self.beta > 0.0) {
            out.push(format!("beta: must be a positive number, got {}", self.beta));
        }
        if self.gamma < 1 {
            out.push("gamma: cabin size must be at least 1".into());
        }
        if self.stations.is_empty() {
            out.push("stations: at least one station required".into());
        }
        for (i, s) in self.stations.iter().enumerate() {
            let n = i + 1;
            if !(0.0..=1.0).contains(&s.nu) {
                out.push(format!("stations[{n}].nu: {} outside [0, 1]", s.nu));
            }
            if !(0.0..=1.0).contains(&s.sigma) {
                out.push(format!("stations[{n}].sigma: {} outside [0, 1]", s.sigma));
            }
            if s.eta < 1 || s.eta > self.gamma {
                out.push(format!(
                    "stations[{n}].eta: {} outside [1, {}]",
                    s.eta, self.gamma
                ));
            }
        }
        if !self.stations.is_empty() {
            let sum: f64 = self.stations.iter().map(|s| s.nu).sum();
            if !sum.is_finite() || (sum - 1.0).abs() > NU_SUM_TOL {
                out.push(format!("nu: fractions sum to {sum}, expected 1"));
            }
        }
        if self.r0.bound() > self.gamma {
            out.push(format!(
                "r0: mass at {} exceeds cabin size {}",
                self.r0.bound(),
                self.gamma
            ));
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Copy with the access cap of one station replaced.
    pub fn with_eta(&self, station: usize, eta: usize) -> LineConfig {
        let mut line = self.clone();
        line.stations[station].eta = eta;
        line
    }

    /// Mean occupancy of cabins entering the line.
    pub fn mean_r0(&self) -> f64 {
        self.r0.mean()
    }
}

pub fn validate(line: &LineConfig) -> Vec<String> {
    line.validate()
}

impl Scenario {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.line.validate();
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            out.push(format!(
                "lambda: must be finite and non-negative, got {}",
                self.lambda
            ));
        }
        if let ArrivalProcess::GammaRenewal { shape } = self.arrival_process {
            if !(shape.is_finite() && shape > 0.0) {
                out.push(format!("arrival_process.shape: must be positive, got {shape}"));
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let r0 = Pmf::new(file.r0.pmf).map_err(|e| Error::Invalid(vec![format!("r0: {e}")]))?;
        let scenario = Scenario {
            line: LineConfig {
                beta: file.beta,
                gamma: file.gamma,
                stations: file.stations,
                r0,
            },
            lambda: file.lambda,
            arrival_process: file.arrival_process,
        };
        let v = scenario.validate();
        if v.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            beta: self.line.beta,
            gamma: self.line.gamma,
            lambda: self.lambda,
            arrival_process: self.arrival_process,
            r0: R0File {
                pmf: self.line.r0.probs().to_vec(),
            },
            stations: self.line.stations.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    pub fn with_lambda(&self, lambda: f64) -> Scenario {
        Scenario {
            lambda,
            ..self.clone()
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The four-station Bad Gastein line: beta = 10 s, gamma = 8, empty cabins
/// at the valley station.
pub fn bad_gastein() -> LineConfig {
    let nu = [0.5, 0.2, 0.3, 0.0];
    let sigma = [0.0, 0.04, 0.46, 1.0];
    LineConfig {
        beta: 10.0,
        gamma: 8,
        stations: nu
            .iter()
            .zip(sigma)
            .map(|(&nu, sigma)| StationConfig { nu, sigma, eta: 8 })
            .collect(),
        r0: Pmf::delta(0),
    }
}

/// The capacity-variance line: three boarding stations with equal demand,
/// nobody leaves before the top, and the given valley occupancy law.
pub fn variance_line(r0: Pmf) -> LineConfig {
    let third = 1.0 / 3.0;
    let nu = [third, third, third, 0.0];
    let sigma = [0.0, 0.0, 0.0, 1.0];
    LineConfig {
        beta: 10.0,
        gamma: 8,
        stations: nu
            .iter()
            .zip(sigma)
            .map(|(&nu, sigma)| StationConfig { nu, sigma, eta: 8 })
            .collect(),
        r0,
    }
}

/// Valley-occupancy laws with mean 4 and variances 0, 4, 9, 16.
pub fn variance_laws() -> Vec<Pmf> {
    vec![
        Pmf::delta(4),
        Pmf::two_point(2, 6),
        Pmf::two_point(1, 7),
        Pmf::two_point(0, 8),
    ]
}
