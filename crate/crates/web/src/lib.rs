//! Browser bindings for the line analysis.
//!
//! Every export takes a scenario as JSON text (the same format as the CLI
//! scenario files) and returns JSON text. Work is done on the calling thread:
//! there are no worker threads in the browser. Unbounded thresholds and
//! waits of unstable stations come back as `null`.

use liftline::chain::solve_line;
use liftline::stability::{scaled_threshold_closed, thresholds_bisect};
use liftline::Scenario;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn parse(json: &str) -> Result<Scenario, String> {
    let s = Scenario::from_json(json).map_err(|e| e.to_string())?;
    s.line.check().map_err(|e| e.to_string())?;
    Ok(s)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Thresholds {
    closed_form: Vec<Option<f64>>,
    bisection: Vec<Option<f64>>,
}

pub fn thresholds_json(scenario: &str) -> Result<String, String> {
    let s = parse(scenario)?;
    let bisection = thresholds_bisect(&s.line).map_err(|e| e.to_string())?;
    let closed_form = (0..bisection.len())
        .map(|m| scaled_threshold_closed(&s.line, m).ok().and_then(finite))
        .collect();
    to_json(&Thresholds {
        closed_form,
        bisection: bisection.into_iter().map(finite).collect(),
    })
}

#[derive(Serialize)]
struct CapRow {
    eta: usize,
    thresholds: Vec<Option<f64>>,
}

/// Thresholds of every station as the cap of `station` (counted from 1)
/// goes from the cabin size down to 1.
pub fn cap_curve_json(scenario: &str, station: usize) -> Result<String, String> {
    let s = parse(scenario)?;
    if station == 0 || station > s.line.stations.len() {
        return Err(format!("station {station} outside 1..={}", s.line.stations.len()));
    }
    let rows = (1..=s.line.gamma)
        .rev()
        .map(|eta| {
            let line = s.line.with_eta(station - 1, eta);
            let t = thresholds_bisect(&line).map_err(|e| e.to_string())?;
            Ok(CapRow {
                eta,
                thresholds: t.into_iter().map(finite).collect(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&rows)
}

#[derive(Serialize)]
struct WaitRow {
    lambda: f64,
    w_mean: Vec<Option<f64>>,
}

/// Mean waits per station on `points` rates up to just below the largest
/// finite threshold.
pub fn wait_curve_json(scenario: &str, points: usize) -> Result<String, String> {
    let s = parse(scenario)?;
    if !(2..=400).contains(&points) {
        return Err("points must be between 2 and 400".into());
    }
    let top = thresholds_bisect(&s.line)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|t| t.is_finite())
        .fold(0.0, f64::max);
    if top == 0.0 {
        return Err("no station can serve any demand".into());
    }
    let mut rows = Vec::with_capacity(points);
    for k in 1..=points {
        let lambda = 0.99 * top * k as f64 / points as f64;
        let sol = solve_line(&Scenario { lambda, ..s.clone() }).map_err(|e| e.to_string())?;
        rows.push(WaitRow {
            lambda,
            w_mean: sol
                .stations
                .iter()
                .zip(&sol.line.stations)
                .map(|(st, cfg)| if cfg.nu > 0.0 { st.w_mean() } else { None })
                .collect(),
        });
    }
    to_json(&rows)
}

#[wasm_bindgen]
pub fn thresholds(scenario: &str) -> Result<String, JsError> {
    thresholds_json(scenario).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cap_curve(scenario: &str, station: usize) -> Result<String, JsError> {
    cap_curve_json(scenario, station).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wait_curve(scenario: &str, points: usize) -> Result<String, JsError> {
    wait_curve_json(scenario, points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const BG: &str = include_str!("../../core/scenarios/badgastein.json");

    #[test]
    fn thresholds_of_the_reference_line() {
        let v: Value = serde_json::from_str(&thresholds_json(BG).unwrap()).unwrap();
        let closed = v["closed_form"].as_array().unwrap();
        assert!((closed[0].as_f64().unwrap() - 1.6).abs() < 1e-9);
        assert!((v["bisection"][1].as_f64().unwrap() - 8.0 / 6.8).abs() < 1e-9);
        assert!(v["bisection"][3].is_null());
    }

    #[test]
    fn cap_curve_rows() {
        let v: Value = serde_json::from_str(&cap_curve_json(BG, 1).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0]["eta"], 8);
        let t1 = |r: &Value| r["thresholds"][0].as_f64().unwrap();
        assert!(t1(&rows[7]) < t1(&rows[0]));
        assert!(cap_curve_json(BG, 0).is_err());
    }

    #[test]
    fn wait_curve_rises() {
        let v: Value = serde_json::from_str(&wait_curve_json(BG, 12).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 12);
        let w = |i: usize| rows[i]["w_mean"][0].as_f64().unwrap();
        assert!(w(11) > w(0));
        assert!(rows[11]["w_mean"][1].is_null(), "station 2 saturates before station 1");
        assert!(rows[0]["w_mean"][3].is_null());
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(thresholds_json("{").is_err());
        assert!(wait_curve_json(BG, 1).is_err());
    }
}
