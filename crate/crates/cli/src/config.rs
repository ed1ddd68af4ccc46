//! Settings from an optional TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use smc_lab::experiments::named_perturbation;
use smc_lab::{ControllerParams, Mode, SimConfig};

use crate::CliError;

/// Flags shared by every verb. Unset flags fall back to the config file, then
/// to the verb's defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Control magnitude
    #[arg(long = "U", allow_hyphen_values = true)]
    pub u_max: Option<f64>,
    /// Perturbation bound
    #[arg(long = "Phi", allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Outer switching threshold, as a fraction of the last extreme value
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    /// Inner switching threshold
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    /// Actuator time constant (0 = ideal actuator)
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Integration step
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    /// Simulated horizon
    #[arg(long = "tmax", allow_hyphen_values = true)]
    pub t_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigmadot0: Option<f64>,
    /// zero, co (+Phi*sgn(sigmadot)), opp (-Phi*sgn(sigmadot)) or const:<v>
    #[arg(long)]
    pub perturbation: Option<String>,
    /// Output directory [default: out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with [controller], [sim], [output], [tune], [sweep] and
    /// [dichotomy] sections
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    #[serde(rename = "U")]
    u_max: Option<f64>,
    #[serde(rename = "Phi")]
    phi: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    mode: Option<Mode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    dt: Option<f64>,
    t_max: Option<f64>,
    sigma0: Option<f64>,
    sigmadot0: Option<f64>,
    mu: Option<f64>,
    v0: Option<f64>,
    conv_eps: Option<f64>,
    perturbation: Option<String>,
    stop_on_convergence: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    #[serde(rename = "J_hat_max")]
    pub j_hat_max: Option<f64>,
    pub grid_resolution: Option<usize>,
    pub refine_tol: Option<f64>,
}

/// `[lo, hi, n]`
pub type Range = (f64, f64, usize);

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub beta1: Option<Range>,
    pub beta2: Option<Range>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomySection {
    pub beta2: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    controller: ControllerSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    tune: TuneSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    dichotomy: DichotomySection,
}

/// Values a verb falls back to when neither flag nor file sets them.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub u_max: f64,
    pub phi: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub mode: Mode,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            u_max: 1.0,
            phi: 0.3,
            beta1: 0.7,
            beta2: 0.55,
            mode: Mode::EnergySaving,
        }
    }
}

#[derive(Debug)]
pub struct Settings {
    flags: Common,
    file: FileConfig,
}

impl Settings {
    pub fn load(flags: Common) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        Ok(Self { flags, file })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.flags
            .out
            .clone()
            .or_else(|| self.file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn u_max(&self) -> Option<f64> {
        self.flags.u_max.or(self.file.controller.u_max)
    }

    pub fn phi(&self) -> Option<f64> {
        self.flags.phi.or(self.file.controller.phi)
    }

    pub fn beta1(&self) -> Option<f64> {
        self.flags.beta1.or(self.file.controller.beta1)
    }

    pub fn beta2(&self) -> Option<f64> {
        self.flags.beta2.or(self.file.controller.beta2)
    }

    pub fn mu(&self) -> Option<f64> {
        self.flags.mu.or(self.file.sim.mu)
    }

    pub fn sigma0(&self) -> Option<f64> {
        self.flags.sigma0.or(self.file.sim.sigma0)
    }

    pub fn sigmadot0(&self) -> Option<f64> {
        self.flags.sigmadot0.or(self.file.sim.sigmadot0)
    }

    pub fn mode(&self) -> Option<Mode> {
        self.file.controller.mode
    }

    pub fn tune(&self) -> &TuneSection {
        &self.file.tune
    }

    pub fn sweep(&self) -> &SweepSection {
        &self.file.sweep
    }

    pub fn dichotomy(&self) -> &DichotomySection {
        &self.file.dichotomy
    }

    pub fn params(&self, d: Defaults) -> Result<ControllerParams, CliError> {
        let p = ControllerParams::new(
            self.u_max().unwrap_or(d.u_max),
            self.phi().unwrap_or(d.phi),
            self.beta1().unwrap_or(d.beta1),
            self.beta2().unwrap_or(d.beta2),
            self.mode().unwrap_or(d.mode),
        )?;
        Ok(p)
    }

    /// Applies every simulation setting on top of `base`. The perturbation
    /// name is resolved against `phi`.
    pub fn sim_config(&self, base: SimConfig, phi: f64) -> Result<SimConfig, CliError> {
        let s = &self.file.sim;
        let f = &self.flags;
        let mut cfg = base;
        let set = |slot: &mut f64, flag: Option<f64>, file: Option<f64>| {
            if let Some(v) = flag.or(file) {
                *slot = v;
            }
        };
        set(&mut cfg.dt, f.dt, s.dt);
        set(&mut cfg.t_max, f.t_max, s.t_max);
        set(&mut cfg.sigma0, f.sigma0, s.sigma0);
        set(&mut cfg.sigmadot0, f.sigmadot0, s.sigmadot0);
        set(&mut cfg.mu, f.mu, s.mu);
        set(&mut cfg.v0, None, s.v0);
        set(&mut cfg.conv_eps, None, s.conv_eps);
        if let Some(stop) = s.stop_on_convergence {
            cfg.stop_on_convergence = stop;
        }
        if let Some(name) = f.perturbation.as_ref().or(s.perturbation.as_ref()) {
            cfg.perturbation = named_perturbation(name, phi)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
