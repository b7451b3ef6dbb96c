//! End-to-end runs of the `negtrans` binary: exit codes, determinism and
//! the shape of the emitted tables.

use std::path::Path;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_negtrans"))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).expect("write config");
}

/// Compare scenario with loose tolerances to keep the run short.
const COMPARE_CONFIG: &str = r#"
scenario = "compare"
seed = 11
strategy = "phase_corrected"

[field]
dimension = 3
mass = 0.0

[detector_a]
coupling = 0.1
gap = 1.0
position = [0.0, 0.0, 0.0]
switching_width = 1.0
smearing_width = 0.5

[detector_b]
coupling = 0.1
gap = 1.0
position = [1.0, 0.0, 0.0]
switching_width = 1.0
smearing_width = 0.5

[input]
p = 0.5

[quadrature]
rel_tol = 1e-6
abs_tol = 1e-10

[[sweep]]
parameter = "separation"
start = 0.5
stop = 1.5
steps = 3
"#;

#[test]
fn compare_scenario_reports_optimality_and_the_transmission_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    write(&config, COMPARE_CONFIG);
    let out = dir.path().join("out");
    let status = binary()
        .args(["--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let harvested_col = header.iter().position(|c| *c == "negativity_harvested").unwrap();
    let teleported_col = header.iter().position(|c| *c == "negativity_teleported").unwrap();
    let transmitted_col = header
        .iter()
        .position(|c| *c == "negativity_transmitted_order2")
        .unwrap();
    let verdict_col = header.iter().position(|c| *c == "transmission_verdict").unwrap();
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        // identical detectors at p = 1/2: the teleported column equals the
        // harvested one exactly
        assert_eq!(cells[harvested_col], cells[teleported_col], "optimality column mismatch");
        assert_eq!(cells[transmitted_col], "0");
        assert_eq!(cells[verdict_col], "second-order zero");
        rows += 1;
    }
    assert_eq!(rows, 3);

    let jsonl = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    for line in jsonl.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["negativity_harvested"].is_number());
        assert_eq!(record["transmission_verdict"], "second-order zero");

        // the coefficient fields reconstruct a HarvestCoefficients value
        let coeff: negtrans::harvest::HarvestCoefficients = serde_json::from_value(
            serde_json::json!({
                "l_aa": record["l_aa"],
                "l_bb": record["l_bb"],
                "l_ab": [record["l_ab_re"], record["l_ab_im"]],
                "m": [record["m_re"], record["m_im"]],
            }),
        )
        .expect("record fields round-trip into coefficients");
        let harvested = negtrans::harvest::harvested_negativity_2nd(&coeff);
        assert_eq!(
            harvested,
            record["negativity_harvested"].as_f64().unwrap(),
            "reconstructed coefficients reproduce the emitted negativity"
        );
    }
}

#[test]
fn harvest_sweep_emits_rows_with_error_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    write(
        &config,
        &COMPARE_CONFIG
            .replace("scenario = \"compare\"", "scenario = \"harvest\"")
            .replace("steps = 3", "steps = 5"),
    );
    let out = dir.path().join("out");
    let status = binary().arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let error_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, c)| c.ends_with("_error"))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(error_cols.len(), 4, "expected four quadrature error columns");
    let neg_col = header.iter().position(|c| *c == "negativity_harvested").unwrap();
    let mut rows = 0;
    let mut last_negativity = f64::INFINITY;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        for &col in &error_cols {
            let err: f64 = cells[col].parse().unwrap();
            assert!(err.is_finite() && err >= 0.0 && err < 1e-6, "error column {err}");
        }
        let negativity: f64 = cells[neg_col].parse().unwrap();
        assert!(
            negativity <= last_negativity + 1e-12,
            "harvested negativity should fall off with separation"
        );
        last_negativity = negativity;
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    write(&config, COMPARE_CONFIG);
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3"), ("c", "3")] {
        let out = dir.path().join(name);
        let status = binary()
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads, "--seed", "11"])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(out.join("results.csv")).unwrap(),
            std::fs::read(out.join("results.jsonl")).unwrap(),
            std::fs::read(out.join("run_meta.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the output bytes");
    assert_eq!(outputs[1], outputs[2], "identical reruns differ");
}

#[test]
fn malformed_and_invalid_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_syntax = dir.path().join("bad.toml");
    write(&bad_syntax, "scenario = \"compare\"\n[detector_a\n");
    let output = binary()
        .arg("--config")
        .arg(&bad_syntax)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("error") && stderr.contains("line"),
        "line diagnostics missing: {stderr}"
    );

    // validation failure: unknown sweep parameter
    let bad_sweep = dir.path().join("sweep.toml");
    write(
        &bad_sweep,
        &COMPARE_CONFIG.replace("parameter = \"separation\"", "parameter = \"warp\""),
    );
    let output = binary()
        .arg("--config")
        .arg(&bad_sweep)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // missing file
    let output = binary()
        .arg("--config")
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let json = serde_json::json!({
        "scenario": "harvest",
        "seed": 3,
        "detector_a": {
            "coupling": 0.1, "gap": 1.0, "position": [0.0, 0.0, 0.0],
            "switching_width": 1.0, "smearing_width": 0.5
        },
        "detector_b": {
            "coupling": 0.1, "gap": 1.0, "position": [2.0, 0.0, 0.0],
            "switching_width": 1.0, "smearing_width": 0.5
        },
        "quadrature": { "rel_tol": 1e-6, "abs_tol": 1e-10 }
    });
    write(&config, &serde_json::to_string_pretty(&json).unwrap());
    let out = dir.path().join("out");
    let status = binary().arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2); // header + single point
    assert!(csv.lines().next().unwrap().contains("negativity_harvested"));
}

#[test]
fn nogo_scenario_with_no_couplings_emits_an_all_zero_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("nogo.toml");
    write(
        &config,
        r#"
scenario = "nogo"
seed = 5

[nogo]
field_dim = 2
models = 0
lambdas = [0.02, 0.04, 0.06, 0.08]
grid_steps = 128
couplings = "none"
"#,
    );
    let out = dir.path().join("out");
    let status = binary().arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, vec!["model", "lambda", "negativity", "min_pt_eigenvalue"]);
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[2], "0", "negativity should vanish without couplings");
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn nogo_default_toy_reports_the_kernel_checks() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("nogo.toml");
    write(
        &config,
        r#"
scenario = "nogo"
seed = 5

[nogo]
field_dim = 3
models = 0
lambdas = [0.01, 0.02, 0.04, 0.08]
grid_steps = 256
"#,
    );
    let out = dir.path().join("out");
    let status = binary().arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("nogo_summary.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(summary.lines().next().unwrap()).unwrap();
    assert!(record["first_order_max"].as_f64().unwrap() < 1e-8);
    assert!(record["sender_independence"].as_f64().unwrap() < 1e-8);
    assert!(record["quad_coeff_negative_part"].as_f64().unwrap().abs() < 1e-8);
}
