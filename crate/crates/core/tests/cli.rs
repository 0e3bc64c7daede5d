use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn liftline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Same shape, same text in non-numeric cells, numbers within a relative
/// tolerance. FFT round-off may differ between machines.
fn assert_tables_close(got: &str, want: &str, rel: f64) {
    let (g, w) = (table(got), table(want));
    assert_eq!(g.len(), w.len(), "row count");
    assert_eq!(g[0], w[0], "header");
    for (r, (gr, wr)) in g.iter().zip(&w).enumerate() {
        assert_eq!(gr.len(), wr.len(), "row {r}");
        for (c, (a, b)) in gr.iter().zip(wr).enumerate() {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
                    let scale = y.abs().max(1e-6);
                    assert!((x - y).abs() <= rel * scale, "row {r} col {c}: {x} vs {y}");
                }
                _ => assert_eq!(a, b, "row {r} col {c}"),
            }
        }
    }
}

fn expected(name: &str) -> String {
    std::fs::read_to_string(scenario("expected").join(name)).unwrap()
}

#[test]
fn thresholds_match_fixture() {
    let bg = scenario("badgastein.json");
    let o = liftline(&["thresholds", bg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_tables_close(&stdout(&o), &expected("thresholds_badgastein.csv"), 1e-9);
}

#[test]
fn sweeps_match_fixtures() {
    let bg = scenario("badgastein.json");
    let bg = bg.to_str().unwrap();
    let o = liftline(&[
        "sweep", bg, "--axis", "eta", "--station", "1", "--grid", "8,7,6,5,4,3,2,1",
        "--lambda", "1.1647058823529413",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_tables_close(&stdout(&o), &expected("sweep_eta1_badgastein.csv"), 1e-6);

    let grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1,1.1,1.15,1.2,1.3,1.4,1.5,1.6,1.7";
    let o = liftline(&["sweep", bg, "--axis", "lambda", "--grid", grid]);
    assert!(o.status.success());
    assert_tables_close(&stdout(&o), &expected("sweep_lambda_badgastein.csv"), 1e-6);
}

#[test]
fn fig5_matches_fixture() {
    let f = scenario("fig5.json");
    let o = liftline(&["fig5", f.to_str().unwrap()]);
    assert!(o.status.success());
    assert_tables_close(&stdout(&o), &expected("fig5.csv"), 1e-6);
}

#[test]
fn analytic_output_is_stable_across_runs() {
    let bg = scenario("badgastein.json");
    let args = ["analyze", bg.to_str().unwrap(), "--lambda", "1.1"];
    let a = liftline(&args);
    let b = liftline(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let t = table(&stdout(&a));
    assert_eq!(t.len(), 5);
}

#[test]
fn exit_codes() {
    let bg = scenario("badgastein.json");
    let bg = bg.to_str().unwrap();
    assert_eq!(liftline(&["--help"]).status.code(), Some(0));
    assert_eq!(liftline(&["frobnicate", bg]).status.code(), Some(2));
    assert_eq!(liftline(&["analyze", bg, "--lambda", "-1"]).status.code(), Some(2));
    assert_eq!(liftline(&["thresholds", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(
        liftline(&["sweep", bg, "--axis", "eta", "--station", "9", "--grid", "8,7"]).status.code(),
        Some(2)
    );
}

#[test]
fn invalid_scenario_lists_problems() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(
        &p,
        r#"{"beta": -1, "gamma": 8, "lambda": 1.0, "arrival_process": {"kind": "poisson"},
            "r0": {"pmf": [1.0]},
            "stations": [{"nu": 0.7, "sigma": 0.0, "eta": 9}]}"#,
    )
    .unwrap();
    let o = liftline(&["thresholds", p.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("beta") && err.contains("eta") && err.contains("nu"), "{err}");
}

#[test]
fn out_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let bg = scenario("badgastein.json");
    let o = liftline(&["thresholds", bg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("station,closed_form,bisection"));
    let manifest = liftline::cli::manifest_path(&out);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "thresholds");
    assert!(m["elapsed_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_is_reproducible() {
    let bg = scenario("badgastein.json");
    let args = [
        "simulate", bg.to_str().unwrap(), "--lambda", "0.8", "--horizon", "20000", "--reps", "2", "--seed", "9",
    ];
    let a = liftline(&args);
    let b = liftline(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = liftline(&[
        "simulate", bg.to_str().unwrap(), "--lambda", "0.8", "--horizon", "20000", "--reps", "2", "--seed", "10",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn validate_passes_at_moderate_load() {
    let bg = scenario("badgastein.json");
    let o = liftline(&[
        "validate", bg.to_str().unwrap(), "--lambda", "0.5", "--horizon", "100000", "--reps", "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("station,quantity,analytic,simulated,half_width,deviation_hw,pass"));
}

#[test]
fn gnuplot_blocks() {
    let bg = scenario("badgastein.json");
    let o = liftline(&[
        "sweep", bg.to_str().unwrap(), "--axis", "lambda", "--grid", "0.5,1.0", "--format", "gnuplot",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\n\n"));
}
