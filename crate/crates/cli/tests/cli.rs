use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "source": { "n_mean_per_mode": 0.8, "matched_modes": 20000, "unmatched_modes_1": 1500 },
  "detectors": [
    { "efficiency": 0.9, "noise_mean": 10.0, "noise_var": 400.0 },
    { "efficiency": 0.88, "noise_mean": 12.0, "noise_var": 400.0 }
  ],
  "n_pulses": 20000,
  "seed": 5,
  "bootstrap": { "resamples": 100, "seed": 0 }
}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let sb = Sandbox {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(sb.path("cfg.json"), CONFIG).unwrap();
        sb
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, &[])
    }

    fn run_env(&self, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_twinbeam"));
        cmd.current_dir(self.dir.path())
            .args(args)
            .env_remove("TWINBEAM_THREADS");
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn simulate(&self, kind: &str) -> String {
        let name = format!("{kind}.csv");
        self.ok(&[
            "simulate", "--config", "cfg.json", "--kind", kind, "--out", &name, "--quiet",
        ]);
        name
    }
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error record on stderr");
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn load_report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn estimate(report: &Value, name: &str) -> (f64, f64) {
    let e = &report["results"][name];
    (e["value"].as_f64().unwrap(), e["std_error"].as_f64().unwrap())
}

#[test]
fn coherent_run_analyzes_to_poisson() {
    let sb = Sandbox::new();
    let coh = sb.simulate("coherent");
    let dark = sb.simulate("dark");
    sb.ok(&["analyze", &coh, &dark, "--out", "coh.json", "--quiet"]);
    let r = load_report(&sb.path("coh.json"));
    assert_eq!(r["command"], "analyze");
    for name in ["fano_1", "fano_2"] {
        let (v, se) = estimate(&r, name);
        assert!((v - 1.0).abs() < 5.0 * se, "{name}: {v} ± {se}");
    }
    assert!(r["determinism_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn full_analysis_reports_every_estimate() {
    let sb = Sandbox::new();
    let files = ["twin_beam", "coherent", "dark"].map(|k| sb.simulate(k));
    sb.ok(&["analyze", &files[0], &files[1], &files[2], "--out", "a.json", "--quiet"]);
    let r = load_report(&sb.path("a.json"));
    for name in [
        "nrf_est",
        "nrf_raw",
        "f1_est",
        "f2_est",
        "f1_conditional_theory",
        "squeezing_db",
        "k",
    ] {
        let e = &r["results"][name];
        assert!(
            e["value"].is_number() && e["std_error"].is_number() && e["n_samples"].is_number(),
            "{name}"
        );
    }
    let (nrf, _) = estimate(&r, "nrf_est");
    assert!(nrf > 0.0 && nrf < 1.0, "{nrf}");
}

#[test]
fn reports_are_deterministic_across_runs_and_workers() {
    let sb = Sandbox::new();
    let files = ["twin_beam", "coherent", "dark"].map(|k| sb.simulate(k));
    let first = fs::read(sb.path(&files[0])).unwrap();
    sb.run_env(
        &["simulate", "--config", "cfg.json", "--out", "again.csv", "--quiet"],
        &[("TWINBEAM_THREADS", "3")],
    );
    assert_eq!(first, fs::read(sb.path("again.csv")).unwrap());

    let args = |out: &'static str| {
        [
            "analyze",
            "twin_beam.csv",
            "coherent.csv",
            "dark.csv",
            "--out",
            out,
            "--quiet",
        ]
    };
    sb.ok(&args("r1.json"));
    let out = sb.run_env(&args("r2.json"), &[("TWINBEAM_THREADS", "2")]);
    assert!(out.status.success());
    let (a, b) = (load_report(&sb.path("r1.json")), load_report(&sb.path("r2.json")));
    assert_eq!(a["determinism_hash"], b["determinism_hash"]);
    assert_eq!(a["results"], b["results"]);
}

#[test]
fn seed_flag_overrides_config() {
    let sb = Sandbox::new();
    sb.ok(&["simulate", "--config", "cfg.json", "--out", "a.csv", "--quiet"]);
    sb.ok(&[
        "simulate", "--config", "cfg.json", "--seed", "6", "--out", "b.csv", "--quiet",
    ]);
    let b = fs::read_to_string(sb.path("b.csv")).unwrap();
    assert!(b.starts_with("# twinbeam-dataset v1; kind=twin_beam; seed=6; n=20000"));
    assert_ne!(fs::read(sb.path("a.csv")).unwrap(), b.into_bytes());
}

#[test]
fn missing_calibration_names_the_run_to_generate() {
    let sb = Sandbox::new();
    let twin = sb.simulate("twin_beam");
    let out = sb.run(&["analyze", &twin]);
    assert_eq!(out.status.code(), Some(4));
    let e = error_record(&out);
    assert_eq!(e["kind"], "missing_calibration");
    assert!(e["message"].as_str().unwrap().contains("--kind coherent"));

    let coh = sb.simulate("coherent");
    let e = error_record(&sb.run(&["analyze", &twin, &coh]));
    assert!(e["message"].as_str().unwrap().contains("--kind dark"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let sb = Sandbox::new();
    fs::write(sb.path("bad.json"), CONFIG.replace("0.88", "1.2")).unwrap();
    let out = sb.run(&["simulate", "--config", "bad.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_record(&out);
    assert_eq!(e["kind"], "invalid_parameter");
    assert_eq!(e["field"], "detectors[1].efficiency");

    fs::write(sb.path("typo.json"), CONFIG.replace("\"seed\"", "\"sed\"")).unwrap();
    let out = sb.run(&["simulate", "--config", "typo.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["kind"], "parse");

    let out = sb.run_env(
        &["simulate", "--config", "cfg.json", "--out", "x.csv"],
        &[("TWINBEAM_THREADS", "zero")],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!sb.path("x.csv").exists());
}

#[test]
fn io_errors_exit_with_code_3() {
    let sb = Sandbox::new();
    let out = sb.run(&["simulate", "--config", "nope.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["kind"], "io");

    let coh = sb.simulate("coherent");
    let text = fs::read_to_string(sb.path(&coh)).unwrap();
    fs::write(sb.path("tampered.csv"), text.replacen(",1", ",2", 1)).unwrap();
    let out = sb.run(&["analyze", "tampered.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["kind"], "checksum");
}

#[test]
fn noise_above_shot_noise_exits_with_code_4() {
    let sb = Sandbox::new();
    // coherent run of ~2·10⁴ photons against 10⁶ of electronic noise variance
    let noisy = CONFIG.replace("\"noise_var\": 400.0", "\"noise_var\": 1000000.0");
    fs::write(sb.path("noisy.json"), noisy).unwrap();
    for kind in ["twin_beam", "coherent", "dark"] {
        sb.ok(&[
            "simulate",
            "--config",
            "noisy.json",
            "--kind",
            kind,
            "--out",
            &format!("{kind}.csv"),
            "--quiet",
        ]);
    }
    let out = sb.run(&["analyze", "twin_beam.csv", "coherent.csv", "dark.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["kind"], "noise_above_shot_noise");
}

#[test]
fn condition_reports_heralded_fano() {
    let sb = Sandbox::new();
    let twin = sb.simulate("twin_beam");
    let dark = sb.simulate("dark");
    sb.ok(&[
        "condition",
        &twin,
        "--dark",
        &dark,
        "--q",
        "4",
        "--q",
        "8",
        "--out",
        "c.json",
        "--quiet",
    ]);
    let r = load_report(&sb.path("c.json"));
    let c4 = &r["results"]["cond00_q4"];
    let c8 = &r["results"]["cond01_q8"];
    assert_eq!(c4["type"], "conditional");
    assert!(c4["success_rate"].as_f64().unwrap() > c8["success_rate"].as_f64().unwrap());
    assert!(c4["fano_target"]["value"].as_f64().unwrap() < 1.0);

    // a window that selects nothing is an analysis error
    let out = sb.run(&["condition", &twin, "--level=-1e9", "--q", "40"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["kind"], "empty_selection");
}

#[test]
fn sweep_output_feeds_fit() {
    let sb = Sandbox::new();
    let cfg = CONFIG.replace(
        "\"seed\": 5,",
        "\"seed\": 5, \"pump_sweep\": { \"powers_mW\": [40.0, 80.0, 120.0], \"gain_coeff\": 0.0891 }, \
         \"conditioning\": [{ \"q\": 2.0 }, { \"q\": 8.0 }],",
    );
    fs::write(sb.path("sweep.json"), cfg).unwrap();
    sb.ok(&["sweep", "--config", "sweep.json", "--out", "sweep.json.out", "--quiet"]);
    let table = fs::read_to_string(sb.path("sweep.json.nrf.csv")).unwrap();
    assert!(table.starts_with("power_mw,n_mode,k,nrf,nrf_se,"), "{table}");
    assert_eq!(table.lines().count(), 4);
    let q_table = fs::read_to_string(sb.path("sweep.json.q.csv")).unwrap();
    assert_eq!(q_table.lines().count(), 3);

    sb.ok(&["fit", "sweep.json.nrf.csv", "--out", "fit.json", "--quiet"]);
    let r = load_report(&sb.path("fit.json"));
    assert_eq!(r["results"]["fit"]["type"], "fit");
    assert_eq!(r["results"]["eta1"]["type"], "efficiency");
    let (alpha, _) = estimate(&r, "alpha");
    assert!(alpha > 0.5 && alpha < 1.0, "{alpha}");

    sb.ok(&["report", "fit.json", "--format", "csv", "--out", "fit.csv"]);
    let csv = fs::read_to_string(sb.path("fit.csv")).unwrap();
    assert!(csv.starts_with("name,field,value,std_error,n_samples\n"));
    assert!(csv.contains("fit,alpha,"));
}

#[test]
fn fit_rejects_degenerate_tables() {
    let sb = Sandbox::new();
    fs::write(sb.path("p.csv"), "n_mode,nrf,nrf_se\n0.5,0.2,0.01\n0.5,0.21,0.01\n").unwrap();
    let out = sb.run(&["fit", "p.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["kind"], "rank_deficient");

    fs::write(sb.path("q.csv"), "x,y\n1,2\n").unwrap();
    assert_eq!(sb.run(&["fit", "q.csv"]).status.code(), Some(2));
}
