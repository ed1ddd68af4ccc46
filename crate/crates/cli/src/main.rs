mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use smc_lab::experiments::{self, dichotomy, linspace, table1, table2};
use smc_lab::{
    describing_function, harmonic_balance, measure_energy, optimize_beta2, optimize_pair, run,
    ChatteringPrediction, ControllerParams, DfValue, Mode, SimConfig, TraceSummary, TuneRequest,
    TuneResult,
};
use thiserror::Error;

use config::{Common, Defaults, Range, Settings};
use output::OutDir;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  1  invalid configuration, flags or parameters
  2  runtime failure (unwritable output, simulation or solver error)";

#[derive(Parser, Debug)]
#[command(name = "smc-lab", version, about = "Threshold-switching sliding-mode control experiments", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one run and write its trace
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run the energy-saving and conventional laws from the same state
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Contracting versus non-contracting inner thresholds
    Dichotomy {
        #[command(flatten)]
        common: Common,
        /// Inner thresholds to compare [default: 0.25,0.19]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta2_set: Vec<f64>,
    },
    /// Minimize J - J_hat over the inner threshold (or over both with no --beta1)
    Tune {
        #[command(flatten)]
        common: Common,
        /// Cap on J_hat [default: three times its minimum]
        #[arg(long)]
        j_hat_max: Option<f64>,
        #[arg(long)]
        grid_resolution: Option<usize>,
        #[arg(long)]
        refine_tol: Option<f64>,
    },
    /// Harmonic-balance prediction of the chattering cycle. Without --mu the
    /// three reference cases are evaluated.
    Hb {
        #[command(flatten)]
        common: Common,
    },
    /// Fuel and convergence-time table. --sigma0/--sigmadot0 skip the calibration.
    Table1 {
        #[command(flatten)]
        common: Common,
    },
    /// Chattering table: harmonic balance against simulation
    Table2 {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a grid of threshold pairs
    Sweep {
        #[command(flatten)]
        common: Common,
        /// lo,hi,n [default: 0.35,0.95,13]
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        beta1_range: Option<Range>,
        /// lo,hi,n [default: -0.5,0.95,30]
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        beta2_range: Option<Range>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    EnergySaving,
    Conventional,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::EnergySaving => Mode::EnergySaving,
            ModeArg::Conventional => Mode::Conventional,
        }
    }
}

fn parse_range(s: &str) -> Result<Range, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo,hi,n, got {s:?}"));
    };
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((
        num(lo)?,
        num(hi)?,
        n.parse().map_err(|e| format!("{n:?}: {e}"))?,
    ))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Lab(#[from] smc_lab::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use smc_lab::Error as E;
        match self {
            Self::Config(_) => 1,
            Self::Lab(E::InvalidParams(_) | E::InvalidConfig(_) | E::Parse(_)) => 1,
            Self::Output { .. } | Self::Lab(_) => 2,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    mode: Mode,
    beta1: f64,
    beta2: f64,
    t_c: Option<f64>,
    fuel: Option<f64>,
    extrema: usize,
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateReport {
    params: ControllerParams,
    config: SimConfig,
    fuel: Option<f64>,
    summary: TraceSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct DichotomyRow {
    beta1: f64,
    beta2: f64,
    sum_ok: bool,
    t_c: Option<f64>,
    extrema: usize,
    max_ratio: Option<f64>,
    strictly_decreasing: bool,
    verdict: String,
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TuneRow {
    beta1: f64,
    beta2: f64,
    objective: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "J_hat")]
    j_hat: f64,
    #[serde(rename = "J_hat_max")]
    j_hat_max: f64,
    feasible_region_fraction: f64,
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct HbRow {
    mu: f64,
    beta1: f64,
    beta2: f64,
    omega_c: f64,
    sigma_a_closed_form: f64,
    sigma_a: f64,
    balance_residual: f64,
    closed_form_residual: f64,
    phase_residual: f64,
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct HbReport {
    params: ControllerParams,
    prediction: ChatteringPrediction,
    /// Describing function at the predicted amplitude.
    describing_function: DfValue,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepCsvRow {
    beta1: f64,
    beta2: f64,
    feasible: bool,
    t_c: Option<f64>,
    fuel: Option<f64>,
    bound: Option<f64>,
    #[serde(rename = "J")]
    j: Option<f64>,
    #[serde(rename = "J_hat")]
    j_hat: Option<f64>,
    provenance: String,
}

fn label(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

fn simulate(s: &Settings, mode: Option<ModeArg>) -> Result<(), CliError> {
    let mut params = s.params(Defaults::default())?;
    if let Some(m) = mode {
        params = params.with_mode(m.into());
    }
    let cfg = s.sim_config(
        SimConfig {
            sigma0: 1.0,
            ..SimConfig::default()
        },
        params.phi,
    )?;
    let trace = run(&params, &cfg)?;
    let fuel = measure_energy(&trace).ok();
    let out = OutDir::create(s.out_dir())?;
    out.trace("trace.csv", &trace)?;
    let report = SimulateReport {
        params,
        config: cfg,
        fuel,
        summary: trace.summary(),
    };
    out.json("report.json", &report)?;
    out.rows(
        "summary.csv",
        &[RunRow {
            mode: params.mode,
            beta1: params.beta1,
            beta2: params.effective_beta2(),
            t_c: trace.t_c,
            fuel,
            extrema: trace.events.len(),
            provenance: "simulation".into(),
        }],
    )?;
    println!(
        "t_c = {:?}, fuel = {:?}, {} extrema",
        trace.t_c,
        fuel,
        trace.events.len()
    );
    Ok(())
}

fn compare(s: &Settings) -> Result<(), CliError> {
    let params = s.params(Defaults::default())?;
    let cfg = s.sim_config(
        SimConfig {
            sigma0: 1.0,
            ..SimConfig::default()
        },
        params.phi,
    )?;
    let cmp = experiments::compare_modes(&params, &cfg)?;
    let out = OutDir::create(s.out_dir())?;
    out.trace(
        "trace_energy_saving.csv",
        &run(&params.with_mode(Mode::EnergySaving), &cfg)?,
    )?;
    out.trace(
        "trace_conventional.csv",
        &run(&params.as_conventional(), &cfg)?,
    )?;
    out.json("report.json", &cmp)?;
    let rows: Vec<RunRow> = [&cmp.conventional, &cmp.energy_saving]
        .into_iter()
        .map(|r| RunRow {
            mode: r.mode,
            beta1: r.beta1,
            beta2: r.beta2,
            t_c: r.t_c,
            fuel: r.fuel,
            extrema: r.extrema,
            provenance: "comparison".into(),
        })
        .collect();
    out.rows("summary.csv", &rows)?;
    println!(
        "T_c ratio {:?}, fuel ratio {:?}",
        cmp.t_c_ratio, cmp.fuel_ratio
    );
    Ok(())
}

fn run_dichotomy(s: &Settings, beta2_set: Vec<f64>) -> Result<(), CliError> {
    let d = Defaults {
        u_max: dichotomy::U,
        phi: dichotomy::PHI,
        beta1: dichotomy::BETA1,
        ..Defaults::default()
    };
    let set = if !beta2_set.is_empty() {
        beta2_set
    } else {
        s.dichotomy()
            .beta2
            .clone()
            .unwrap_or_else(|| dichotomy::BETA2.to_vec())
    };
    let base = s.params(Defaults { beta2: set[0], ..d })?;
    let cfg = s.sim_config(
        dichotomy::config(dichotomy::SIGMA0, dichotomy::HORIZON),
        base.phi,
    )?;
    let out = OutDir::create(s.out_dir())?;
    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for &b2 in &set {
        let params = ControllerParams {
            beta2: b2,
            mode: Mode::EnergySaving,
            ..base
        };
        params.validate()?;
        let o = dichotomy::outcome(&params, &cfg)?;
        out.trace(
            &format!("trace_beta2_{}.csv", label(b2)),
            &run(&params, &cfg)?,
        )?;
        let verdict = if o.strictly_decreasing && o.converged {
            "convergent"
        } else if o.ratios.iter().any(|&r| r >= 1.0) {
            "divergent"
        } else {
            "undetermined"
        };
        println!("beta2 = {b2}: {verdict}, T_c = {:?}", o.t_c);
        rows.push(DichotomyRow {
            beta1: o.beta1,
            beta2: o.beta2,
            sum_ok: o.sum_ok,
            t_c: o.t_c,
            extrema: o.extrema.len(),
            max_ratio: o.ratios.iter().cloned().reduce(f64::max),
            strictly_decreasing: o.strictly_decreasing,
            verdict: verdict.into(),
            provenance: "Fig. 5".into(),
        });
        outcomes.push(o);
    }
    out.json("report.json", &outcomes)?;
    out.rows("summary.csv", &rows)?;
    Ok(())
}

fn tune(
    s: &Settings,
    j_hat_max: Option<f64>,
    grid_resolution: Option<usize>,
    refine_tol: Option<f64>,
) -> Result<(), CliError> {
    let d = TuneRequest::default();
    let t = s.tune();
    let req = TuneRequest {
        u_max: s.u_max().unwrap_or(d.u_max),
        phi: s.phi().unwrap_or(d.phi),
        j_hat_max: j_hat_max.or(t.j_hat_max),
        beta1_fixed: s.beta1(),
        grid_resolution: grid_resolution
            .or(t.grid_resolution)
            .unwrap_or(d.grid_resolution),
        refine_tol: refine_tol.or(t.refine_tol).unwrap_or(d.refine_tol),
    };
    req.validate()?;
    let r: TuneResult = match req.beta1_fixed {
        Some(b1) => optimize_beta2(b1, &req)?,
        None => optimize_pair(&req)?,
    };
    let out = OutDir::create(s.out_dir())?;
    out.json(
        "report.json",
        &serde_json::json!({ "request": req, "result": r }),
    )?;
    out.rows(
        "summary.csv",
        &[TuneRow {
            beta1: r.beta1,
            beta2: r.beta2,
            objective: r.objective,
            j: r.j,
            j_hat: r.j_hat,
            j_hat_max: r.j_hat_max,
            feasible_region_fraction: r.feasible_region_fraction,
            provenance: "tuning".into(),
        }],
    )?;
    println!(
        "beta1 = {:.6}, beta2 = {:.6}, J - J_hat = {:.6}",
        r.beta1, r.beta2, r.objective
    );
    Ok(())
}

fn hb(s: &Settings) -> Result<(), CliError> {
    let cases: Vec<(f64, ControllerParams, &str)> = match s.mu() {
        Some(mu) => vec![(
            mu,
            s.params(Defaults {
                phi: 0.0,
                ..Defaults::default()
            })?,
            "prediction",
        )],
        None => table2::CASES
            .iter()
            .map(|&((mu, b1, b2), _, _)| {
                let p = ControllerParams::energy_saving(s.u_max().unwrap_or(1.0), 0.0, b1, b2)?;
                Ok((mu, p, "Table 2"))
            })
            .collect::<Result<_, CliError>>()?,
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (mu, params, provenance) in cases {
        let p = harmonic_balance(mu, &params)?;
        println!(
            "mu = {mu}: omega_c = {:.4}, sigma_A = {:.4e} (balanced {:.4e})",
            p.omega_c, p.sigma_a_closed_form, p.sigma_a
        );
        rows.push(HbRow {
            mu,
            beta1: params.beta1,
            beta2: params.effective_beta2(),
            omega_c: p.omega_c,
            sigma_a_closed_form: p.sigma_a_closed_form,
            sigma_a: p.sigma_a,
            balance_residual: p.balance_residual,
            closed_form_residual: p.closed_form_residual,
            phase_residual: p.phase_residual,
            provenance: provenance.into(),
        });
        reports.push(HbReport {
            params,
            describing_function: describing_function(p.sigma_a, &params)?,
            prediction: p,
        });
    }
    let out = OutDir::create(s.out_dir())?;
    out.json("report.json", &reports)?;
    out.rows("summary.csv", &rows)?;
    Ok(())
}

fn run_table1(s: &Settings) -> Result<(), CliError> {
    let (sigma0, sigmadot0, calibration) = match s.sigma0() {
        Some(sigma0) => (sigma0, s.sigmadot0().unwrap_or(0.0), None),
        None => {
            let c = table1::calibrate(table1::CALIBRATION_TARGET)?;
            (c.sigma0, c.sigmadot0, Some(c))
        }
    };
    let rows = table1::reproduce(sigma0, sigmadot0)?;
    for r in &rows {
        println!(
            "({}, {}) {:4} {:13} T_c = {:?} fuel = {:?}{}",
            r.beta1,
            r.beta2,
            r.perturbation,
            format!("{:?}", r.mode),
            r.t_c,
            r.fuel,
            if r.slow { " slow" } else { "" }
        );
    }
    let out = OutDir::create(s.out_dir())?;
    out.json(
        "report.json",
        &serde_json::json!({ "sigma0": sigma0, "sigmadot0": sigmadot0, "calibration": calibration, "rows": rows }),
    )?;
    out.rows("summary.csv", &rows)?;
    Ok(())
}

fn run_table2(s: &Settings) -> Result<(), CliError> {
    let (cases, rows) = table2::reproduce()?;
    for c in &cases {
        println!(
            "mu = {}: predicted {:?}, measured {:?}",
            c.mu, c.prediction.omega_c, c.measurement
        );
    }
    let out = OutDir::create(s.out_dir())?;
    out.json("report.json", &cases)?;
    out.rows("summary.csv", &rows)?;
    Ok(())
}

fn sweep(s: &Settings, beta1: Option<Range>, beta2: Option<Range>) -> Result<(), CliError> {
    let params = s.params(Defaults::default())?;
    let base = SimConfig {
        sigma0: 1.0,
        stop_on_convergence: true,
        ..SimConfig::default()
    };
    let cfg = s.sim_config(base, params.phi)?;
    let grid = |r: Option<Range>, file: Option<Range>, d: Range| {
        let (lo, hi, n) = r.or(file).unwrap_or(d);
        linspace(lo, hi, n)
    };
    let b1 = grid(beta1, s.sweep().beta1, (0.35, 0.95, 13));
    let b2 = grid(beta2, s.sweep().beta2, (-0.5, 0.95, 30));
    let rows: Vec<SweepCsvRow> = experiments::sweep(params.u_max, params.phi, &b1, &b2, &cfg)?
        .into_iter()
        .map(|r| SweepCsvRow {
            beta1: r.beta1,
            beta2: r.beta2,
            feasible: r.feasible,
            t_c: r.t_c,
            fuel: r.fuel,
            bound: r.bound,
            j: r.j,
            j_hat: r.j_hat,
            provenance: "Fig. 1".into(),
        })
        .collect();
    let out = OutDir::create(s.out_dir())?;
    out.rows("summary.csv", &rows)?;
    println!(
        "{} pairs, {} feasible",
        rows.len(),
        rows.iter().filter(|r| r.feasible).count()
    );
    Ok(())
}

type Verb = Box<dyn FnOnce(&Settings) -> Result<(), CliError>>;

fn dispatch(cmd: Command) -> Result<PathBuf, CliError> {
    let (common, verb): (Common, Verb) = match cmd {
        Command::Simulate { common, mode } => (common, Box::new(move |s| simulate(s, mode))),
        Command::Compare { common } => (common, Box::new(compare)),
        Command::Dichotomy { common, beta2_set } => {
            (common, Box::new(move |s| run_dichotomy(s, beta2_set)))
        }
        Command::Tune {
            common,
            j_hat_max,
            grid_resolution,
            refine_tol,
        } => (
            common,
            Box::new(move |s| tune(s, j_hat_max, grid_resolution, refine_tol)),
        ),
        Command::Hb { common } => (common, Box::new(hb)),
        Command::Table1 { common } => (common, Box::new(run_table1)),
        Command::Table2 { common } => (common, Box::new(run_table2)),
        Command::Sweep {
            common,
            beta1_range,
            beta2_range,
        } => (
            common,
            Box::new(move |s| sweep(s, beta1_range, beta2_range)),
        ),
    };
    let settings = Settings::load(common)?;
    verb(&settings)?;
    Ok(settings.out_dir())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
