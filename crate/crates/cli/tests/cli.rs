use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn caplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caplab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

const SHORT_FIG1: &str = r#"{
  "params": { "r": 1, "K": 100, "m": 0.001, "d": 0.2, "sigma": 0.09 },
  "x0": { "u": 50, "v": 10 },
  "horizon": 5,
  "dt": 0.01,
  "scheme": "milstein",
  "n_paths": 8,
  "seed": 7,
  "record_stride": 10,
  "outputs": "unused"
}"#;

#[test]
fn thresholds_for_bundled_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t1");
    let run = caplab(&["thresholds", "--config", scenario("fig1.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("thresholds.json")).unwrap()).unwrap();
    assert_eq!(report["classification"], "extinction");
    let index = report["extinction_index"].as_f64().unwrap();
    assert!((index + 0.1999).abs() < 1e-4, "{index}");
    let stdout: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(stdout, report);

    let out2 = tmp.path().join("t2");
    let run = caplab(&["thresholds", "--config", scenario("fig2.json").to_str().unwrap(), "--out", out2.to_str().unwrap(), "--quiet"]);
    assert!(run.status.success());
    assert!(run.stdout.is_empty());
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out2.join("thresholds.json")).unwrap()).unwrap();
    assert_eq!(report["m_minus_r_over_K"].as_f64().unwrap(), 0.09);
    assert_eq!(report["classification"], "persistence");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let noiseless = write_config(tmp.path(), &SHORT_FIG1.replace("\"sigma\": 0.09", "\"sigma\": 0"));
    let run = caplab(&["thresholds", "--config", noiseless.to_str().unwrap(), "--out", out]);
    assert_eq!(run.status.code(), Some(3));

    let zero_horizon = write_config(tmp.path(), &SHORT_FIG1.replace("\"horizon\": 5", "\"horizon\": 0"));
    let run = caplab(&["simulate", "--config", zero_horizon.to_str().unwrap(), "--out", out]);
    assert_eq!(run.status.code(), Some(2));

    let typo = write_config(tmp.path(), &SHORT_FIG1.replace("\"seed\"", "\"sead\""));
    let run = caplab(&["ensemble", "--config", typo.to_str().unwrap(), "--out", out]);
    assert_eq!(run.status.code(), Some(2));

    let run = caplab(&["ensemble", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));

    let good = write_config(tmp.path(), SHORT_FIG1);
    let run = caplab(&["sweep", "--config", good.to_str().unwrap(), "--out", out, "--m-grid", "", "--sigma-grid", "0.1"]);
    assert_eq!(run.status.code(), Some(2));

    // a step far too large for the deterministic companion
    let stiff = write_config(
        tmp.path(),
        &SHORT_FIG1
            .replace("\"m\": 0.001", "\"m\": 0.5")
            .replace("\"dt\": 0.01", "\"dt\": 0.5")
            .replace("\"record_stride\": 10", "\"record_stride\": 1"),
    );
    let run = caplab(&["simulate", "--config", stiff.to_str().unwrap(), "--out", out]);
    assert_eq!(run.status.code(), Some(4), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn simulate_writes_both_series_on_one_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_FIG1);
    let out = tmp.path().join("sim");
    let run = caplab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    let stoch = fs::read_to_string(out.join("stochastic.csv")).unwrap();
    let det = fs::read_to_string(out.join("deterministic.csv")).unwrap();
    assert!(stoch.starts_with("t,u,v,clamped\n"));
    assert!(det.starts_with("t,u,v,clamped\n"));
    let times = |s: &str| s.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(times(&stoch), times(&det));
    // 500 steps at stride 10
    assert_eq!(times(&stoch).len(), 51);
}

#[test]
fn ensemble_single_path_has_zero_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_FIG1);
    let out = tmp.path().join("ens");
    let run = caplab(&["ensemble", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--paths", "1"]);
    assert!(run.status.success());
    let csv = fs::read_to_string(out.join("ensemble.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,u_mean,u_std,u_q05,u_q50,u_q95,v_mean,v_std,v_q05,v_q50,v_q95"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "0.0");
        assert_eq!(cols[7], "0.0");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_FIG1);
    let read = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let run = caplab(&["ensemble", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(run.status.success());
        fs::read(out.join("ensemble.csv")).unwrap()
    };
    assert_ne!(read("1", "a"), read("2", "b"));
    assert_eq!(read("1", "a"), read("1", "c"));
}

#[test]
fn sweep_records_failed_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_FIG1);
    let out = tmp.path().join("sweep");
    let run = caplab(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--m-grid", "0.001", "--sigma-grid", "0,0.09", "--quiet",
    ]);
    assert!(run.status.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "m,sigma,predicted,observed,v_time_avg");
    assert_eq!(lines[1], "0.001,0.0,error,error,");
    assert!(lines[2].starts_with("0.001,0.09,extinction,"), "{}", lines[2]);
    assert_eq!(lines.len(), 3);
}

#[test]
fn convergence_report_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SHORT_FIG1
            .replace("\"horizon\": 5", "\"horizon\": 1")
            .replace("\"dt\": 0.01", "\"dt\": 0.0009765625")
            .replace("\"record_stride\": 10", "\"record_stride\": 1"),
    );
    let out = tmp.path().join("conv");
    let run = caplab(&[
        "convergence", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--first-level", "1", "--levels", "4", "--quiet",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("convergence.json")).unwrap()).unwrap();
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 3);
    assert!(report["slope"].is_number() && report["residual"].is_number());
    assert_eq!(report["levels"].as_array().unwrap().len(), 4);

    let run = caplab(&["convergence", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--levels", "11"]);
    assert_eq!(run.status.code(), Some(2));
}
