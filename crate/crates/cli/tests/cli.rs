use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smc_lab::experiments::{table1, table2};
use smc_lab::{run, ControllerParams, PerturbationSpec, SimConfig, Trace, TraceSummary};
use tempfile::TempDir;

fn smc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smc-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn smc_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    let out = smc(&all);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect()
}

#[test]
fn horizon_shorter_than_step_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = smc(&[
        "simulate",
        "--tmax",
        "0.0001",
        "--dt",
        "0.001",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_max"));
}

#[test]
fn bad_flags_and_params_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        &["simulate", "--U", "-1"][..],
        &["simulate", "--Phi", "-0.1"],
        &["simulate", "--perturbation", "gusty"],
        &["simulate", "--perturbation", "const:0.5", "--Phi", "0.3"],
        &["sweep", "--beta1-range", "0.1,0.2"],
        &["tune", "--refine-tol", "0"],
    ] {
        let status = smc(&[args, &["--out", out]].concat()).status;
        assert_eq!(status.code(), Some(1), "{args:?}");
    }
    assert_eq!(smc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    let help = smc(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("Exit status") && text.contains("2  runtime"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let out = smc(&["hb", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
[controller]
U = 2.0
Phi = 0.4
beta1 = 0.8
beta2 = 0.3

[sim]
dt = 0.002
t_max = 1.0
sigma0 = 0.5
perturbation = "co"
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    smc_in(
        &out_dir,
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--beta2",
            "0.1",
            "--tmax",
            "0.5",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["params"]["U"], 2.0);
    assert_eq!(report["params"]["beta2"], 0.1);
    assert_eq!(report["config"]["dt"], 0.002);
    assert_eq!(report["config"]["t_max"], 0.5);
    assert_eq!(report["config"]["perturbation"]["kind"], "sign_sigma_dot");
    assert_eq!(report["config"]["perturbation"]["value"], 0.4);

    fs::write(&cfg, "[controller]\nbeta3 = 1.0\n").unwrap();
    assert_eq!(
        smc(&["simulate", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        smc(&["simulate", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn simulate_round_trip() {
    let dir = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--beta1",
        "0.8",
        "--beta2",
        "0.3",
        "--sigma0",
        "0.4",
        "--sigmadot0",
        "-0.1",
        "--perturbation",
        "opp",
        "--tmax",
        "3",
    ];
    smc_in(dir.path(), &args);

    let mut trace = Trace::read_csv(fs::File::open(dir.path().join("trace.csv")).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let summary: TraceSummary = serde_json::from_value(report["summary"].clone()).unwrap();
    trace.attach_summary(summary).unwrap();

    let params: ControllerParams = serde_json::from_value(report["params"].clone()).unwrap();
    let cfg: SimConfig = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(
        params,
        ControllerParams::energy_saving(1.0, 0.3, 0.8, 0.3).unwrap()
    );
    assert_eq!(cfg.perturbation, PerturbationSpec::SignSigmaDot(-0.3));
    let direct = run(&params, &cfg).unwrap();
    assert_eq!(trace, direct);

    let rows = records(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "energy_saving");
    assert_eq!(&rows[0][6], "simulation");
}

#[test]
fn reruns_overwrite_identically() {
    let dir = TempDir::new().unwrap();
    let snapshot = |d: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let args = ["compare", "--perturbation", "co", "--tmax", "2"];
    smc_in(dir.path(), &args);
    let first = snapshot(dir.path());
    smc_in(dir.path(), &args);
    assert_eq!(first, snapshot(dir.path()));
    assert_eq!(first.len(), 4);
}

#[test]
fn dichotomy_marks_convergent_and_divergent() {
    let dir = TempDir::new().unwrap();
    smc_in(dir.path(), &["dichotomy"]);
    let path = dir.path().join("summary.csv");
    let h = header(&path);
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let rows = records(&path);
    assert_eq!(rows.len(), 2);
    assert_eq!(
        (&rows[0][col("beta2")], &rows[0][col("verdict")]),
        ("0.25", "convergent")
    );
    assert_eq!(
        (&rows[1][col("beta2")], &rows[1][col("verdict")]),
        ("0.19", "divergent")
    );
    assert!(!rows[0][col("t_c")].is_empty());
    assert!(rows[1][col("t_c")].is_empty());
    for b2 in ["0.25", "0.19"] {
        let tr = Trace::read_csv(
            fs::File::open(dir.path().join(format!("trace_beta2_{b2}.csv"))).unwrap(),
        )
        .unwrap();
        assert!(tr.len() > 1000);
    }
}

#[test]
fn hb_prints_reference_predictions() {
    let dir = TempDir::new().unwrap();
    smc_in(dir.path(), &["hb"]);
    let rows = records(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 3);
    let omega: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let sigma: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    for ((w, s), (w_ref, s_ref)) in
        omega
            .iter()
            .zip(&sigma)
            .zip([(21.1, 0.0019), (33.3, 0.00085), (63.3, 0.00021)])
    {
        assert!((w - w_ref).abs() < 0.05, "{w}");
        assert!((s - s_ref).abs() < 0.005 * s_ref + 5e-6, "{s}");
    }

    smc_in(
        dir.path(),
        &["hb", "--mu", "0.02", "--beta1", "0.6", "--beta2", "0.0"],
    );
    let rows = records(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 1);
    let w: f64 = rows[0][3].parse().unwrap();
    assert!((w - 50.0 / 3.0).abs() < 1e-9);
}

#[test]
fn table2_has_six_rows() {
    let dir = TempDir::new().unwrap();
    smc_in(dir.path(), &["table2"]);
    let rows: Vec<table2::Row> = csv::Reader::from_path(dir.path().join("summary.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].source, "harmonic_balance");
        assert_eq!(pair[1].source, "simulation");
        assert_eq!(pair[0].mu, pair[1].mu);
        assert!(pair[1].omega_c.is_some());
    }
    assert!(rows.iter().all(|r| !r.provenance.is_empty()));
    let report: Vec<table2::Case> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.len(), 3);
}

#[test]
fn table1_rows_and_flags() {
    let dir = TempDir::new().unwrap();
    smc_in(dir.path(), &["table1"]);
    let rows: Vec<table1::Row> = csv::Reader::from_path(dir.path().join("summary.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(rows.len(), 12);
    let shaded: Vec<&table1::Row> = rows.iter().filter(|r| r.shaded).collect();
    assert_eq!(shaded.len(), 1);
    assert_eq!(
        (shaded[0].beta1, shaded[0].perturbation.as_str()),
        (0.83, "opp")
    );
    assert!(shaded[0].slow);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["calibration"]["t_c"].as_f64().is_some());
}

#[test]
fn tune_and_sweep_summaries() {
    let dir = TempDir::new().unwrap();
    smc_in(dir.path(), &["tune", "--beta1", "0.83"]);
    let rows = records(&dir.path().join("summary.csv"));
    let objective: f64 = rows[0][2].parse().unwrap();
    assert!(objective <= -1.52);

    smc_in(
        dir.path(),
        &[
            "sweep",
            "--beta1-range",
            "0.5,0.9,3",
            "--beta2-range",
            "-0.5,0.9,5",
            "--tmax",
            "5",
        ],
    );
    let path = dir.path().join("summary.csv");
    let rows = records(&path);
    // pairs with beta2 <= beta1 only
    assert_eq!(rows.len(), 3 + 4 + 5);
    assert_eq!(header(&path).last().map(String::as_str), Some("provenance"));
}
