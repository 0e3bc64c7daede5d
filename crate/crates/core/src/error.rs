use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("invalid probability mass function: {0}")]
    BadPmf(String),

    /// Load factor at or above one; the stationary quantities do not exist.
    #[error("station is unstable: expected capacity {capacity} <= offered load {load}")]
    Unstable { capacity: f64, load: f64 },

    #[error("root finding did not converge: {0}")]
    Convergence(String),

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("no arrivals feed station {0}; closed-form threshold undefined")]
    NoArrivals(usize),

    #[error("relative gain undefined: {0}")]
    GainUndefined(String),

    #[error("station {station}: {source}")]
    AtStation {
        station: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn at_station(self, station: usize) -> Error {
        match self {
            e @ Error::AtStation { .. } => e,
            e => Error::AtStation {
                station,
                source: Box::new(e),
            },
        }
    }
}
