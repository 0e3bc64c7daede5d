//! Discrete-event simulation of a line.
//!
//! Cabin `k` reaches every station at time `k beta`; travel times do not
//! matter for the queues. At each station the riders first leave
//! independently, then the cabin offers `min(eta, gamma - stayers)` seats to
//! the passengers who arrived no later than the cabin itself.

mod arrivals;
mod probe;
mod stats;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrivalProcess, LineConfig, Scenario};
use arrivals::ArrivalStream;
use stats::batch_interval;

pub use probe::{flip_point, stability_probe, stability_probe_with, ProbeOptions, ProbeVerdict, Verdict};
pub use stats::Interval;

/// Batches per replication for the batch-means intervals.
pub const MIN_BATCHES: usize = 30;
/// Queue length beyond which a station stops tracking individual passengers.
pub const QUEUE_GUARD: usize = 5_000_000;

const PURPOSE_ARRIVALS: u64 = 0;
const PURPOSE_DEBOARD: u64 = 1;
const PURPOSE_R0: u64 = 2;
const R0_STATION: u64 = 0xffff;

fn stream(seed: u64, rep: usize, station: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 32) | (station << 8) | purpose);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationEstimate {
    /// Absent when nobody boarded after the warmup.
    pub w_mean: Option<Interval>,
    pub w_var: Option<Interval>,
    pub board_mean: Interval,
    pub capacity_mean: Interval,
    pub capacity_var: Interval,
    /// Queue length found by arriving passengers: count per length.
    pub queue_hist: Vec<u64>,
    /// Seconds spent at each queue length.
    pub queue_time: Vec<f64>,
    /// Queue length found by arriving cabins: count per length.
    pub cabin_queue_hist: Vec<u64>,
    /// Riders leaving the station: count per occupancy.
    pub ride_hist: Vec<u64>,
    pub waits: u64,
    /// Passengers still queued at the end of the horizon; their waits are
    /// not recorded.
    pub censored: u64,
    /// The queue kept growing; figures for this station are not stationary.
    pub overloaded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub seed: u64,
    pub horizon: u64,
    pub warmup: u64,
    pub replications: usize,
    pub batches: usize,
    pub arrival_process: ArrivalProcess,
    pub censored: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub meta: SimMeta,
    pub stations: Vec<StationEstimate>,
}

pub(crate) trait Observer {
    fn arrival(&mut self, _m: usize, _k: u64, _at: f64, _len_before: usize) {}
    #[allow(clippy::too_many_arguments)]
    fn cabin(&mut self, _m: usize, _k: u64, _t: f64, _len_before: usize, _capacity: usize, _board: usize, _ride: usize) {}
    fn waited(&mut self, _m: usize, _k: u64, _w: f64) {}
    fn after(&mut self, _m: usize, _k: u64, _len: u64) {}
}

struct StationState {
    arrivals: ArrivalStream,
    deboard: ChaCha8Rng,
    times: VecDeque<f64>,
    /// Queue length once individual passengers are no longer tracked.
    untracked: Option<u64>,
}

impl StationState {
    fn len(&self) -> u64 {
        self.untracked.unwrap_or(self.times.len() as u64)
    }
}

pub(crate) struct Engine<'a> {
    line: &'a LineConfig,
    stations: Vec<StationState>,
    r0_rng: ChaCha8Rng,
    r0_cdf: Vec<f64>,
    k: u64,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        line: &'a LineConfig,
        lambda: f64,
        process: ArrivalProcess,
        seed: u64,
        rep: usize,
        tracked: bool,
    ) -> Self {
        let stations = line
            .stations
            .iter()
            .enumerate()
            .map(|(m, st)| StationState {
                arrivals: ArrivalStream::new(
                    process,
                    lambda * st.nu,
                    stream(seed, rep, m as u64, PURPOSE_ARRIVALS),
                ),
                deboard: stream(seed, rep, m as u64, PURPOSE_DEBOARD),
                times: VecDeque::new(),
                untracked: (!tracked).then_some(0),
            })
            .collect();
        let mut acc = 0.0;
        let r0_cdf = line
            .r0
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Engine {
            line,
            stations,
            r0_rng: stream(seed, rep, R0_STATION, PURPOSE_R0),
            r0_cdf,
            k: 0,
        }
    }

    fn sample_r0(&mut self) -> usize {
        if self.r0_cdf.len() == 1 {
            return 0;
        }
        let u: f64 = self.r0_rng.random();
        self.r0_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.r0_cdf.len() - 1)
    }

    /// Moves the next cabin along the whole line.
    pub(crate) fn step<O: Observer>(&mut self, obs: &mut O) {
        self.k += 1;
        let k = self.k;
        let t = k as f64 * self.line.beta;
        let gamma = self.line.gamma;
        let mut riders = self.sample_r0();
        for (m, (st, cfg)) in self.stations.iter_mut().zip(&self.line.stations).enumerate() {
            while let Some(at) = st.arrivals.pop_until(t) {
                obs.arrival(m, k, at, st.len() as usize);
                match st.untracked.as_mut() {
                    Some(n) => *n += 1,
                    None => st.times.push_back(at),
                }
            }
            let stay = if cfg.sigma == 0.0 || riders == 0 {
                riders
            } else if cfg.sigma == 1.0 {
                0
            } else {
                Binomial::new(riders as u64, 1.0 - cfg.sigma)
                    .expect("probability in range")
                    .sample(&mut st.deboard) as usize
            };
            let capacity = cfg.eta.min(gamma - stay);
            let len = st.len();
            let board = (len.min(capacity as u64)) as usize;
            obs.cabin(m, k, t, len as usize, capacity, board, stay + board);
            match st.untracked.as_mut() {
                Some(n) => *n -= board as u64,
                None => {
                    for at in st.times.drain(..board) {
                        obs.waited(m, k, t - at);
                    }
                    if st.times.len() > QUEUE_GUARD {
                        st.untracked = Some(st.times.len() as u64);
                        st.times = VecDeque::new();
                    }
                }
            }
            obs.after(m, k, st.len());
            riders = stay + board;
        }
    }

    pub(crate) fn queue_lengths(&self) -> Vec<u64> {
        self.stations.iter().map(|s| s.len()).collect()
    }

    pub(crate) fn guard_tripped(&self, m: usize) -> bool {
        self.stations[m].untracked.is_some()
    }
}

fn bump(hist: &mut Vec<u64>, i: usize) {
    if hist.len() <= i {
        hist.resize(i + 1, 0);
    }
    hist[i] += 1;
}

#[derive(Clone, Default)]
struct StationAcc {
    w_sum: Vec<f64>,
    w_sq: Vec<f64>,
    w_n: Vec<u64>,
    board: Vec<f64>,
    cap: Vec<f64>,
    cap_sq: Vec<f64>,
    cabin_queue: Vec<f64>,
    cycles: Vec<u64>,
    queue_hist: Vec<u64>,
    queue_time: Vec<f64>,
    cabin_queue_hist: Vec<u64>,
    ride_hist: Vec<u64>,
    last_event: f64,
    censored: u64,
    guard: bool,
}

struct FullObserver {
    warmup: u64,
    span: u64,
    batches: usize,
    stations: Vec<StationAcc>,
}

impl FullObserver {
    fn new(n: usize, warmup: u64, horizon: u64, batches: usize, beta: f64) -> Self {
        let acc = StationAcc {
            w_sum: vec![0.0; batches],
            w_sq: vec![0.0; batches],
            w_n: vec![0; batches],
            board: vec![0.0; batches],
            cap: vec![0.0; batches],
            cap_sq: vec![0.0; batches],
            cabin_queue: vec![0.0; batches],
            cycles: vec![0; batches],
            last_event: warmup as f64 * beta,
            ..StationAcc::default()
        };
        FullObserver {
            warmup,
            span: horizon - warmup,
            batches,
            stations: vec![acc; n],
        }
    }

    fn batch(&self, k: u64) -> Option<usize> {
        (k > self.warmup).then(|| ((k - self.warmup - 1) * self.batches as u64 / self.span) as usize)
    }
}

impl Observer for FullObserver {
    fn arrival(&mut self, m: usize, k: u64, at: f64, len_before: usize) {
        if self.batch(k).is_none() {
            return;
        }
        let s = &mut self.stations[m];
        bump(&mut s.queue_hist, len_before);
        if s.queue_time.len() <= len_before {
            s.queue_time.resize(len_before + 1, 0.0);
        }
        s.queue_time[len_before] += at - s.last_event;
        s.last_event = at;
    }

    fn cabin(&mut self, m: usize, k: u64, t: f64, len_before: usize, capacity: usize, board: usize, ride: usize) {
        let Some(b) = self.batch(k) else {
            return;
        };
        let s = &mut self.stations[m];
        if s.queue_time.len() <= len_before {
            s.queue_time.resize(len_before + 1, 0.0);
        }
        s.queue_time[len_before] += t - s.last_event;
        s.last_event = t;
        bump(&mut s.cabin_queue_hist, len_before);
        bump(&mut s.ride_hist, ride);
        let c = capacity as f64;
        s.board[b] += board as f64;
        s.cap[b] += c;
        s.cap_sq[b] += c * c;
        s.cabin_queue[b] += len_before as f64;
        s.cycles[b] += 1;
    }

    fn waited(&mut self, m: usize, k: u64, w: f64) {
        if let Some(b) = self.batch(k) {
            let s = &mut self.stations[m];
            s.w_sum[b] += w;
            s.w_sq[b] += w * w;
            s.w_n[b] += 1;
        }
    }
}

fn merge_hist<T: Copy + Default + std::ops::AddAssign>(into: &mut Vec<T>, from: &[T]) {
    if into.len() < from.len() {
        into.resize(from.len(), T::default());
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += *b;
    }
}

fn ratio_batches(num: &[f64], den: &[f64]) -> Vec<f64> {
    num.iter()
        .zip(den)
        .filter(|(_, d)| **d > 0.0)
        .map(|(n, d)| n / d)
        .collect()
}

/// Growth test on per-batch mean queue lengths of one replication.
fn growing(cabin_queue: &[f64], cycles: &[u64]) -> bool {
    let means: Vec<f64> = cabin_queue
        .iter()
        .zip(cycles)
        .map(|(q, &c)| q / c.max(1) as f64)
        .collect();
    let q = means.len() / 4;
    if q < 2 {
        return false;
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var / v.len() as f64)
    };
    let (a, va) = stats(&means[..q]);
    let (b, vb) = stats(&means[means.len() - q..]);
    b - a > 20.0 && b - a > 4.0 * (va + vb).sqrt()
}

fn finish(accs: Vec<Vec<StationAcc>>) -> Vec<StationEstimate> {
    let n = accs[0].len();
    (0..n)
        .map(|m| {
            let mut all = StationAcc::default();
            let mut overloaded = false;
            for rep in &accs {
                let s = &rep[m];
                all.w_sum.extend(&s.w_sum);
                all.w_sq.extend(&s.w_sq);
                all.w_n.extend(&s.w_n);
                all.board.extend(&s.board);
                all.cap.extend(&s.cap);
                all.cap_sq.extend(&s.cap_sq);
                all.cycles.extend(&s.cycles);
                merge_hist(&mut all.queue_hist, &s.queue_hist);
                merge_hist(&mut all.queue_time, &s.queue_time);
                merge_hist(&mut all.cabin_queue_hist, &s.cabin_queue_hist);
                merge_hist(&mut all.ride_hist, &s.ride_hist);
                all.censored += s.censored;
                overloaded |= s.guard || growing(&s.cabin_queue, &s.cycles);
            }
            let waits: u64 = all.w_n.iter().sum();
            let cycles: Vec<f64> = all.cycles.iter().map(|&c| c as f64).collect();
            let total_cycles: f64 = cycles.iter().sum();
            let wn: Vec<f64> = all.w_n.iter().map(|&c| c as f64).collect();
            let (w_mean, w_var) = if waits > 0 && !overloaded {
                let mean = all.w_sum.iter().sum::<f64>() / waits as f64;
                let second = all.w_sq.iter().sum::<f64>() / waits as f64;
                let batch_mean = ratio_batches(&all.w_sum, &wn);
                let batch_sq = ratio_batches(&all.w_sq, &wn);
                let batch_var: Vec<f64> = batch_mean
                    .iter()
                    .zip(&batch_sq)
                    .map(|(a, b)| b - a * a)
                    .collect();
                (
                    Some(batch_interval(mean, &batch_mean)),
                    Some(batch_interval(second - mean * mean, &batch_var)),
                )
            } else {
                (None, None)
            };
            let cap_mean = all.cap.iter().sum::<f64>() / total_cycles;
            let cap_second = all.cap_sq.iter().sum::<f64>() / total_cycles;
            let cm = ratio_batches(&all.cap, &cycles);
            let cs = ratio_batches(&all.cap_sq, &cycles);
            let cv: Vec<f64> = cm.iter().zip(&cs).map(|(a, b)| b - a * a).collect();
            StationEstimate {
                w_mean,
                w_var,
                board_mean: batch_interval(
                    all.board.iter().sum::<f64>() / total_cycles,
                    &ratio_batches(&all.board, &cycles),
                ),
                capacity_mean: batch_interval(cap_mean, &cm),
                capacity_var: batch_interval(cap_second - cap_mean * cap_mean, &cv),
                queue_hist: all.queue_hist,
                queue_time: all.queue_time,
                cabin_queue_hist: all.cabin_queue_hist,
                ride_hist: all.ride_hist,
                waits,
                censored: all.censored,
                overloaded,
            }
        })
        .collect()
}

fn check_run(scenario: &Scenario, horizon: u64, warmup: u64, reps: usize) -> Result<()> {
    let v = scenario.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    if horizon <= warmup {
        return Err(Error::Usage(format!(
            "horizon ({horizon}) must exceed warmup ({warmup})"
        )));
    }
    if horizon - warmup < MIN_BATCHES as u64 {
        return Err(Error::Usage(format!(
            "need at least {MIN_BATCHES} cycles after warmup"
        )));
    }
    if reps == 0 {
        return Err(Error::Usage("at least one replication required".into()));
    }
    Ok(())
}

/// Default warmup: a tenth of the horizon.
pub fn default_warmup(horizon: u64) -> u64 {
    horizon / 10
}

/// Simulates `reps` independent replications of `horizon` cabin cycles each,
/// discarding the first `warmup` cycles, and pools their batch means.
pub fn simulate(scenario: &Scenario, horizon: u64, warmup: u64, reps: usize, seed: u64) -> Result<SimEstimate> {
    check_run(scenario, horizon, warmup, reps)?;
    let line = &scenario.line;
    let n = line.stations.len();
    let accs: Vec<Vec<StationAcc>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut engine = Engine::new(line, scenario.lambda, scenario.arrival_process, seed, rep, true);
            let mut obs = FullObserver::new(n, warmup, horizon, MIN_BATCHES, line.beta);
            for _ in 0..horizon {
                engine.step(&mut obs);
            }
            for (m, len) in engine.queue_lengths().into_iter().enumerate() {
                obs.stations[m].censored = len;
                obs.stations[m].guard = engine.guard_tripped(m);
            }
            obs.stations
        })
        .collect();
    let stations = finish(accs);
    let censored = stations.iter().map(|s| s.censored).sum();
    Ok(SimEstimate {
        meta: SimMeta {
            seed,
            horizon,
            warmup,
            replications: reps,
            batches: MIN_BATCHES * reps,
            arrival_process: scenario.arrival_process,
            censored,
        },
        stations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distkit::Pmf;
    use crate::model::{bad_gastein, StationConfig};

    fn scenario(lambda: f64) -> Scenario {
        Scenario {
            line: bad_gastein(),
            lambda,
            arrival_process: ArrivalProcess::Poisson,
        }
    }

    #[derive(Default)]
    struct Checks {
        last_arrival: Vec<f64>,
        violations: usize,
        cabins: usize,
    }

    impl Observer for Checks {
        fn cabin(&mut self, m: usize, _k: u64, _t: f64, _len: usize, capacity: usize, board: usize, ride: usize) {
            let line = bad_gastein();
            self.cabins += 1;
            if ride > line.gamma || board > line.stations[m].eta || board > capacity {
                self.violations += 1;
            }
        }
        fn waited(&mut self, _m: usize, _k: u64, w: f64) {
            if !(0.0..10.0 * 1e6).contains(&w) {
                self.violations += 1;
            }
        }
        fn arrival(&mut self, m: usize, _k: u64, at: f64, _len: usize) {
            if self.last_arrival.len() <= m {
                self.last_arrival.resize(m + 1, 0.0);
            }
            if at < self.last_arrival[m] {
                self.violations += 1;
            }
            self.last_arrival[m] = at;
        }
    }

    #[test]
    fn seats_and_gate_rules_hold() {
        let mut line = bad_gastein();
        line.stations[0].eta = 5;
        let mut engine = Engine::new(&line, 1.4, ArrivalProcess::Poisson, 9, 0, true);
        let mut obs = Checks::default();
        for _ in 0..20_000 {
            engine.step(&mut obs);
        }
        assert_eq!(obs.violations, 0);
        assert_eq!(obs.cabins, 80_000);
    }

    #[test]
    fn no_arrivals_no_waits() {
        let est = simulate(&scenario(0.0), 1000, 100, 2, 1).unwrap();
        for s in &est.stations {
            assert!(s.w_mean.is_none());
            assert_eq!(s.waits, 0);
            assert_eq!(s.board_mean.mean, 0.0);
        }
    }

    #[test]
    fn empty_cabins_at_the_valley() {
        let est = simulate(&scenario(1.0), 20_000, 2_000, 1, 5).unwrap();
        // everyone leaves at the top: the first station always sees 8 seats
        assert_eq!(est.stations[0].capacity_mean.mean, 8.0);
        assert_eq!(est.stations[0].capacity_var.mean, 0.0);
        assert_eq!(est.stations[3].ride_hist.iter().skip(1).sum::<u64>(), 0);
    }

    #[test]
    fn same_seed_same_output() {
        let a = simulate(&scenario(1.1), 5_000, 500, 3, 42).unwrap();
        let b = simulate(&scenario(1.1), 5_000, 500, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = simulate(&scenario(1.1), 5_000, 500, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn histograms_count_samples() {
        let est = simulate(&scenario(1.0), 6_000, 600, 2, 8).unwrap();
        for s in &est.stations {
            assert_eq!(s.cabin_queue_hist.iter().sum::<u64>(), 2 * 5_400);
            assert_eq!(s.ride_hist.iter().sum::<u64>(), 2 * 5_400);
            let secs: f64 = s.queue_time.iter().sum();
            assert!((secs - 2.0 * 5_400.0 * 10.0).abs() < 1e-6, "{secs}");
        }
    }

    #[test]
    fn overload_is_flagged() {
        let est = simulate(&scenario(2.0), 20_000, 2_000, 1, 3).unwrap();
        assert!(est.stations[0].overloaded);
        assert!(est.stations[0].w_mean.is_none());
    }

    #[test]
    fn adding_a_station_keeps_other_streams() {
        let line = LineConfig {
            beta: 10.0,
            gamma: 8,
            stations: vec![StationConfig { nu: 1.0, sigma: 1.0, eta: 8 }],
            r0: Pmf::delta(0),
        };
        let mut longer = line.clone();
        longer.stations.push(StationConfig { nu: 0.0, sigma: 1.0, eta: 8 });
        let run = |line: LineConfig| {
            simulate(
                &Scenario { line, lambda: 0.5, arrival_process: ArrivalProcess::Poisson },
                3_000,
                300,
                1,
                11,
            )
            .unwrap()
        };
        assert_eq!(run(line).stations[0], run(longer).stations[0]);
    }

    #[test]
    fn rejects_bad_runs() {
        assert!(simulate(&scenario(1.0), 100, 100, 1, 0).is_err());
        assert!(simulate(&scenario(1.0), 100, 10, 0, 0).is_err());
    }
}
