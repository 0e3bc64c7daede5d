//! Passenger arrival streams for one station.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

use crate::model::ArrivalProcess;

enum Gap {
    Never,
    Exponential(Exp<f64>),
    Fixed(f64),
    Gamma(Gamma<f64>),
}

/// Renewal arrival stream with mean rate `rate`, drawing from its own
/// generator.
pub(crate) struct ArrivalStream {
    rng: ChaCha8Rng,
    gap: Gap,
    next: f64,
}

impl ArrivalStream {
    pub(crate) fn new(process: ArrivalProcess, rate: f64, mut rng: ChaCha8Rng) -> Self {
        if !(rate > 0.0) {
            return ArrivalStream {
                rng,
                gap: Gap::Never,
                next: f64::INFINITY,
            };
        }
        let mean = 1.0 / rate;
        let (gap, first) = match process {
            ArrivalProcess::Poisson => {
                let d = Exp::new(rate).expect("positive rate");
                let t = d.sample(&mut rng);
                (Gap::Exponential(d), t)
            }
            // random phase, so the stream is stationary from the start
            ArrivalProcess::Deterministic => {
                let t = rng.random::<f64>() * mean;
                (Gap::Fixed(mean), t)
            }
            ArrivalProcess::GammaRenewal { shape } => {
                let d = Gamma::new(shape, mean / shape).expect("validated shape");
                let t = rng.random::<f64>() * d.sample(&mut rng);
                (Gap::Gamma(d), t)
            }
        };
        ArrivalStream {
            rng,
            gap,
            next: first,
        }
    }

    /// Next arrival instant if it is no later than `t`.
    pub(crate) fn pop_until(&mut self, t: f64) -> Option<f64> {
        if self.next > t {
            return None;
        }
        let now = self.next;
        self.next += match &self.gap {
            Gap::Never => f64::INFINITY,
            Gap::Exponential(d) => d.sample(&mut self.rng),
            Gap::Fixed(g) => *g,
            Gap::Gamma(d) => d.sample(&mut self.rng),
        };
        Some(now)
    }
}
