//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::chain::{solve_line, sweep, Axis, SweepRow};
use crate::error::{Error, Result};
use crate::model::{load_scenario, variance_laws, Scenario};
use crate::sim::{default_warmup, simulate, SimEstimate};
use crate::stability::{scaled_threshold_closed, thresholds_bisect};

const SIGMA_WIDTHS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Scaled stability threshold of every station
    Thresholds,
    /// Solve the line at one arrival rate
    Analyze,
    /// Solve the line over a grid of rates or access caps
    Sweep,
    /// Discrete-event simulation estimates
    Simulate,
    /// Analytic results against simulation
    Validate,
    /// Waiting times under four valley-occupancy laws of equal mean
    Fig5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AxisArg {
    Lambda,
    Eta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    /// Two-column blocks separated by blank lines
    Gnuplot,
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "liftline", version, about = "Queues and stability of cabin lines with access control")]
#[command(allow_negative_numbers = true)]
struct Cli {
    command: Command,
    scenario: PathBuf,
    /// Total arrival rate, passengers per second
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    axis: Option<AxisArg>,
    /// Station number, counted from 1
    #[arg(long)]
    station: Option<usize>,
    /// Comma-separated grid values
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Cabin cycles per replication, warmup included
    #[arg(long, default_value_t = 200_000)]
    horizon: u64,
    /// Cycles discarded at the start (default: a tenth of the horizon)
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, default_value_t = 4)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the table here instead of standard output, plus a manifest
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: Command,
    scenario: String,
    argv: Vec<String>,
    overrides: &'a Cli,
    outputs: Vec<String>,
    seed: u64,
    version: &'static str,
    started_unix_s: u64,
    elapsed_s: f64,
}

/// Outcome of a command: the table to emit and whether checks passed.
struct Output {
    text: String,
    passed: bool,
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    match execute(&cli) {
        Ok(out) => {
            if let Err(e) = emit(&cli, &argv, &out, started, clock) {
                eprintln!("error: {e}");
                return 2;
            }
            if out.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Io { .. } | Error::Parse(_) => 2,
                _ => 1,
            }
        }
    }
}

fn emit(cli: &Cli, argv: &[OsString], out: &Output, started: u64, clock: Instant) -> Result<()> {
    let Some(path) = &cli.out else {
        print!("{}", out.text);
        return Ok(());
    };
    write_file(path, &out.text)?;
    let manifest = RunManifest {
        command: cli.command,
        scenario: cli.scenario.display().to_string(),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        overrides: cli,
        outputs: vec![path.display().to_string()],
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s: started,
        elapsed_s: clock.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write_file(&manifest_path(path), &text)
}

/// `results.csv` -> `results.csv.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn scenario_for(cli: &Cli) -> Result<Scenario> {
    if let Some(l) = cli.lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(usage(format!("--lambda must be a non-negative number, got {l}")));
        }
    }
    let mut s = load_scenario(&cli.scenario)?;
    if let Some(l) = cli.lambda {
        s.lambda = l;
    }
    Ok(s)
}

fn execute(cli: &Cli) -> Result<Output> {
    let scenario = scenario_for(cli)?;
    let text = match cli.command {
        Command::Thresholds => thresholds(&scenario)?,
        Command::Analyze => analyze(&scenario)?,
        Command::Sweep => sweep_cmd(cli, &scenario)?,
        Command::Simulate => simulate_cmd(cli, &scenario)?,
        Command::Validate => return validate_cmd(cli, &scenario),
        Command::Fig5 => fig5(cli, &scenario)?,
    };
    Ok(Output { text, passed: true })
}

fn thresholds(s: &Scenario) -> Result<String> {
    let bisect = thresholds_bisect(&s.line)?;
    let mut out = String::from("station,closed_form,bisection\n");
    for (m, b) in bisect.iter().enumerate() {
        let closed = scaled_threshold_closed(&s.line, m).unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{},{}", m + 1, fmt(closed), fmt(*b));
    }
    Ok(out)
}

fn analyze(s: &Scenario) -> Result<String> {
    let sol = solve_line(s)?;
    let mut out = String::from(
        "station,lambda_m,expected_capacity,capacity_variance,scaled_threshold,load_factor,stable,w_mean_s,w_var_s2,e_t,e_r\n",
    );
    for (m, (st, cfg)) in sol.stations.iter().zip(&sol.line.stations).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m + 1,
            fmt(cfg.nu * sol.lambda),
            fmt(st.report.expected_capacity),
            fmt(st.flow.capacity.variance()),
            fmt(st.threshold),
            fmt(st.report.load_factor),
            st.report.stable,
            fmt_opt(st.queue.as_ref().map(|q| q.w_mean)),
            fmt_opt(st.queue.as_ref().map(|q| q.w_var)),
            fmt(st.report.expected_board),
            fmt(st.report.expected_ride),
        );
    }
    Ok(out)
}

fn station_arg(cli: &Cli, s: &Scenario) -> Result<usize> {
    let n = cli.station.ok_or_else(|| usage("--station is required with --axis eta"))?;
    if n == 0 || n > s.line.stations.len() {
        return Err(usage(format!(
            "--station {n} outside 1..={}",
            s.line.stations.len()
        )));
    }
    Ok(n - 1)
}

fn sweep_cmd(cli: &Cli, s: &Scenario) -> Result<String> {
    let axis = match cli.axis.ok_or_else(|| usage("--axis is required for sweep"))? {
        AxisArg::Lambda => Axis::Lambda,
        AxisArg::Eta => Axis::Eta(station_arg(cli, s)?),
    };
    let grid = cli.grid.clone().ok_or_else(|| usage("--grid is required for sweep"))?;
    let rows = sweep(s, axis, &grid)?;
    Ok(match cli.format {
        Format::Csv => sweep_csv(&rows),
        Format::Gnuplot => sweep_gnuplot(&rows, axis, s.line.stations.len()),
    })
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "value,station,lambda,scaled_threshold,expected_capacity,capacity_variance,e_t,stable,w_mean_s,error\n",
    );
    for row in rows {
        match &row.result {
            Ok(r) => {
                for m in 0..r.thresholds.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},",
                        fmt(row.value),
                        m + 1,
                        fmt(r.lambda),
                        fmt(r.thresholds[m]),
                        fmt(r.expected_capacity[m]),
                        fmt(r.capacity_variance[m]),
                        fmt(r.expected_board[m]),
                        r.stable[m],
                        fmt_opt(r.w_mean[m]),
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{},,,,,,,,,\"{}\"", fmt(row.value), e.replace('"', "'"));
            }
        }
    }
    out
}

/// Thresholds against an access cap, waiting times against a rate.
fn sweep_gnuplot(rows: &[SweepRow], axis: Axis, stations: usize) -> String {
    let mut out = String::new();
    for m in 0..stations {
        let _ = writeln!(
            out,
            "# station {} {}",
            m + 1,
            match axis {
                Axis::Lambda => "lambda w_mean_s",
                Axis::Eta(_) => "eta scaled_threshold",
            }
        );
        for row in rows {
            let Ok(r) = &row.result else { continue };
            let y = match axis {
                Axis::Lambda => r.w_mean[m],
                Axis::Eta(_) => Some(r.thresholds[m]),
            };
            if let Some(y) = y.filter(|y| y.is_finite()) {
                let _ = writeln!(out, "{} {}", fmt(row.value), fmt(y));
            }
        }
        out.push_str("\n\n");
    }
    out
}

fn sim_params(cli: &Cli) -> (u64, u64) {
    let warmup = cli.warmup.unwrap_or_else(|| default_warmup(cli.horizon));
    (cli.horizon, warmup)
}

fn run_sim(cli: &Cli, s: &Scenario) -> Result<SimEstimate> {
    let (horizon, warmup) = sim_params(cli);
    simulate(s, horizon, warmup, cli.reps, cli.seed)
}

fn simulate_cmd(cli: &Cli, s: &Scenario) -> Result<String> {
    let est = run_sim(cli, s)?;
    let mut out = String::from(
        "station,w_mean_s,w_mean_hw,w_var_s2,w_var_hw,e_t,e_t_hw,capacity_mean,capacity_mean_hw,capacity_var,capacity_var_hw,waits,censored,overloaded\n",
    );
    for (m, st) in est.stations.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m + 1,
            fmt_opt(st.w_mean.map(|i| i.mean)),
            fmt_opt(st.w_mean.map(|i| i.half_width)),
            fmt_opt(st.w_var.map(|i| i.mean)),
            fmt_opt(st.w_var.map(|i| i.half_width)),
            fmt(st.board_mean.mean),
            fmt(st.board_mean.half_width),
            fmt(st.capacity_mean.mean),
            fmt(st.capacity_mean.half_width),
            fmt(st.capacity_var.mean),
            fmt(st.capacity_var.half_width),
            st.waits,
            st.censored,
            st.overloaded,
        );
    }
    Ok(out)
}

fn validate_cmd(cli: &Cli, s: &Scenario) -> Result<Output> {
    let sol = solve_line(s)?;
    let est = run_sim(cli, s)?;
    let mut out = String::from("station,quantity,analytic,simulated,half_width,deviation_hw,pass\n");
    let mut passed = true;
    let mut row = |m: usize, q: &str, a: f64, sim: Option<crate::sim::Interval>| {
        let Some(i) = sim else { return };
        let dev = if i.half_width > 0.0 {
            (a - i.mean).abs() / i.half_width
        } else if a == i.mean {
            0.0
        } else {
            f64::INFINITY
        };
        let ok = dev <= SIGMA_WIDTHS;
        passed &= ok;
        let _ = writeln!(
            out,
            "{},{q},{},{},{},{},{ok}",
            m + 1,
            fmt(a),
            fmt(i.mean),
            fmt(i.half_width),
            fmt(dev)
        );
    };
    for (m, (st, e)) in sol.stations.iter().zip(&est.stations).enumerate() {
        if let Some(q) = &st.queue {
            if !e.overloaded {
                row(m, "w_mean", q.w_mean, e.w_mean);
            }
        }
        row(m, "e_t", st.report.expected_board, Some(e.board_mean));
    }
    Ok(Output { text: out, passed })
}

fn fig5(cli: &Cli, s: &Scenario) -> Result<String> {
    if s.line.gamma < 8 {
        return Err(usage("fig5 needs cabins with at least 8 seats"));
    }
    let grid = cli
        .grid
        .clone()
        .unwrap_or_else(|| (1..=19).map(|i| 0.02 * i as f64).collect());
    let mut rows = Vec::new();
    for (law, r0) in variance_laws().into_iter().enumerate() {
        let var = r0.variance();
        let mut sc = s.clone();
        sc.line.r0 = r0;
        for &lambda in &grid {
            let sol = solve_line(&Scenario { lambda, ..sc.clone() })?;
            for (m, st) in sol.stations.iter().enumerate() {
                if sol.line.stations[m].nu > 0.0 {
                    rows.push((law + 1, var, lambda, m + 1, st.flow.capacity.variance(), st.w_mean()));
                }
            }
        }
    }
    let mut out = String::new();
    match cli.format {
        Format::Csv => {
            out.push_str("law,r0_variance,lambda,station,capacity_variance,w_mean_s\n");
            for (law, var, lambda, m, cv, w) in &rows {
                let _ = writeln!(out, "{law},{},{},{m},{},{}", fmt(*var), fmt(*lambda), fmt(*cv), fmt_opt(*w));
            }
        }
        Format::Gnuplot => {
            let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.3, r.0)).collect();
            keys.sort();
            keys.dedup();
            for (m, law) in keys {
                let var = rows.iter().find(|r| r.0 == law).map(|r| r.1).unwrap_or(0.0);
                let _ = writeln!(out, "# station {m} r0 variance {} lambda w_mean_s", fmt(var));
                for r in rows.iter().filter(|r| r.0 == law && r.3 == m) {
                    if let Some(w) = r.5 {
                        let _ = writeln!(out, "{} {}", fmt(r.2), fmt(w));
                    }
                }
                out.push_str("\n\n");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt(1.5), "1.5");
        assert_eq!(fmt(f64::INFINITY), "inf");
        assert_eq!(fmt(f64::NAN), "");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("/tmp/a/out.csv")),
            PathBuf::from("/tmp/a/out.csv.manifest.json")
        );
    }

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["liftline", "--help"]), 0);
        assert_eq!(run(["liftline", "bogus", "x.json"]), 2);
        assert_eq!(run(["liftline", "analyze", "--lambda", "-1", "x.json"]), 2);
    }
}
