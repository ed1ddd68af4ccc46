//! Fixed-step simulation of `σ̈ = f + v` with an optional first-order
//! actuator `μ v̇ + v = u`, plus measurements taken on the recorded trace.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::controller::{sgn, Controller, ControllerParams, ControllerState};
use crate::error::{Error, Result};

/// Matched perturbation acting on the plant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PerturbationSpec {
    #[default]
    Zero,
    /// `c·sgn(σ̇)`. Positive `c` co-acts with the motion, negative `c` damps it.
    SignSigmaDot(f64),
    Constant(f64),
    /// `(t, f)` breakpoints held constant until the next breakpoint.
    /// Before the first breakpoint the first value applies.
    Custom(Vec<(f64, f64)>),
}

impl PerturbationSpec {
    pub fn eval(&self, _sigma: f64, sigmadot: f64, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::SignSigmaDot(c) => c * sgn(sigmadot),
            Self::Constant(c) => *c,
            Self::Custom(table) => {
                let idx = table.partition_point(|&(ti, _)| ti <= t);
                match idx {
                    0 => table.first().map_or(0.0, |p| p.1),
                    i => table[i - 1].1,
                }
            }
        }
    }

    /// Largest `|f|` this perturbation can emit.
    pub fn magnitude(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::SignSigmaDot(c) | Self::Constant(c) => c.abs(),
            Self::Custom(table) => table.iter().fold(0.0, |m, p| m.max(p.1.abs())),
        }
    }

    /// Checks `|f| <= phi` everywhere and that custom tables are well formed.
    pub fn validate(&self, phi: f64) -> Result<()> {
        if let Self::Custom(table) = self {
            if table.is_empty() {
                return Err(Error::InvalidConfig(
                    "custom perturbation table is empty".into(),
                ));
            }
            if table.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                return Err(Error::InvalidConfig(
                    "custom perturbation table has non-finite entries".into(),
                ));
            }
            if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidConfig(
                    "custom perturbation breakpoints must be strictly increasing".into(),
                ));
            }
        }
        let m = self.magnitude();
        if !m.is_finite() {
            return Err(Error::InvalidConfig(
                "perturbation magnitude is not finite".into(),
            ));
        }
        if m > phi {
            return Err(Error::InvalidConfig(format!(
                "perturbation magnitude {m} exceeds the bound Phi = {phi}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub sigma0: f64,
    pub sigmadot0: f64,
    /// Actuator time constant; 0 means `v = u`.
    pub mu: f64,
    /// Initial actuator output (only used when `mu > 0`).
    pub v0: f64,
    pub conv_eps: f64,
    pub perturbation: PerturbationSpec,
    /// Minimum `|Δσ|` the extremum detector reacts to.
    /// `None` picks `Φ·dt²`, the size of the increments Euler produces
    /// when a perturbation holds the state still.
    pub detector_deadband: Option<f64>,
    pub stop_on_convergence: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 10.0,
            sigma0: 0.0,
            sigmadot0: 0.0,
            mu: 0.0,
            v0: 0.0,
            conv_eps: 4e-3,
            perturbation: PerturbationSpec::Zero,
            detector_deadband: None,
            stop_on_convergence: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return bad(format!("t_max must be >= dt, got {}", self.t_max));
        }
        if !(self.conv_eps.is_finite() && self.conv_eps > 0.0) {
            return bad(format!("conv_eps must be > 0, got {}", self.conv_eps));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.sigma0.is_finite() && self.sigmadot0.is_finite() && self.v0.is_finite()) {
            return bad("initial state must be finite".into());
        }
        if let Some(d) = self.detector_deadband {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("detector_deadband must be >= 0, got {d}"));
            }
        }
        Ok(())
    }

    /// Number of steps; the trace has one more sample than this.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub sigma: f64,
    pub sigmadot: f64,
    pub v: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.sigma.is_finite() && self.sigmadot.is_finite() && self.v.is_finite()
    }
}

/// One explicit Euler step. Returns the new state and the perturbation used.
///
/// The actuator is advanced first and the plant is driven by the new
/// actuator output; `σ` moves with the old `σ̇`. With `mu = 0` this is the
/// plain double-integrator step driven by `u`.
pub fn step(state: PlantState, t: f64, u: f64, cfg: &SimConfig) -> Result<(PlantState, f64)> {
    if !state.is_finite() {
        return Err(Error::NonFinite {
            what: "plant state",
            t,
        });
    }
    let dt = cfg.dt;
    let f = cfg.perturbation.eval(state.sigma, state.sigmadot, t);
    let v = if cfg.mu == 0.0 {
        u
    } else {
        state.v + dt * (u - state.v) / cfg.mu
    };
    let next = PlantState {
        sigma: state.sigma + dt * state.sigmadot,
        sigmadot: state.sigmadot + dt * (f + v),
        v,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite {
            what: "plant state",
            t: t + dt,
        });
    }
    Ok((next, f))
}

/// An extreme value reported by the detector, timed at the turning point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremumEvent {
    pub t: f64,
    pub sigma_m: f64,
}

/// Recorded run. Row `k` holds the state at `t_k`, the control computed from
/// it, and the actuator output and perturbation applied over `[t_k, t_k+dt)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dt: f64,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigmadot: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub events: Vec<ExtremumEvent>,
    pub t_c: Option<f64>,
}

/// Event log and convergence instant, the part of a trace that is not in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub dt: f64,
    pub samples: usize,
    pub t_c: Option<f64>,
    pub events: Vec<ExtremumEvent>,
}

const CSV_HEADER: [&str; 6] = ["t", "sigma", "sigmadot", "u", "v", "f"];

impl Trace {
    fn with_capacity(dt: f64, n: usize) -> Self {
        Self {
            dt,
            t: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            sigmadot: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            events: Vec::new(),
            t_c: None,
        }
    }

    fn push(&mut self, t: f64, s: PlantState, u: f64, v: f64, f: f64) {
        self.t.push(t);
        self.sigma.push(s.sigma);
        self.sigmadot.push(s.sigmadot);
        self.u.push(u);
        self.v.push(v);
        self.f.push(f);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            dt: self.dt,
            samples: self.len(),
            t_c: self.t_c,
            events: self.events.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for k in 0..self.len() {
            let row = [
                self.t[k],
                self.sigma[k],
                self.sigmadot[k],
                self.u[k],
                self.v[k],
                self.f[k],
            ];
            out.write_record(row.iter().map(f64::to_string))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the series back. The event log and `t_c` come from the JSON
    /// summary, see [`Trace::attach_summary`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Parse(format!("unexpected trace header {header:?}")));
        }
        let mut tr = Trace::default();
        for rec in rd.records() {
            let rec = rec?;
            let mut vals = [0.0; 6];
            for (slot, field) in vals.iter_mut().zip(rec.iter()) {
                *slot = field
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad number {field:?}: {e}")))?;
            }
            let s = PlantState {
                sigma: vals[1],
                sigmadot: vals[2],
                v: vals[4],
            };
            tr.push(vals[0], s, vals[3], vals[4], vals[5]);
        }
        if tr.len() >= 2 {
            tr.dt = tr.t[1] - tr.t[0];
        }
        Ok(tr)
    }

    pub fn attach_summary(&mut self, s: TraceSummary) -> Result<()> {
        if s.samples != self.len() {
            return Err(Error::Parse(format!(
                "summary describes {} samples, trace has {}",
                s.samples,
                self.len()
            )));
        }
        self.dt = s.dt;
        self.t_c = s.t_c;
        self.events = s.events;
        Ok(())
    }
}

/// Simulates the closed loop: observe, pick the control, step.
///
/// Parameters are not checked for convergence so that divergent settings can
/// be reproduced. A missing `t_c` means the horizon ran out first.
pub fn run(params: &ControllerParams, cfg: &SimConfig) -> Result<Trace> {
    let mut tr = Trace::with_capacity(cfg.dt, cfg.steps() + 1);
    let summary = simulate(params, cfg, |t, x, u, v, f| tr.push(t, x, u, v, f))?;
    tr.events = summary.events;
    tr.t_c = summary.t_c;
    Ok(tr)
}

/// Same run as [`run`] without keeping the rows, for long horizons.
pub fn run_summary(params: &ControllerParams, cfg: &SimConfig) -> Result<TraceSummary> {
    simulate(params, cfg, |_, _, _, _, _| {})
}

fn simulate(
    params: &ControllerParams,
    cfg: &SimConfig,
    mut on_row: impl FnMut(f64, PlantState, f64, f64, f64),
) -> Result<TraceSummary> {
    params.validate()?;
    cfg.validate()?;
    cfg.perturbation.validate(params.phi)?;

    let deadband = cfg
        .detector_deadband
        .unwrap_or(params.phi * cfg.dt * cfg.dt);
    let state = ControllerState::new(cfg.sigma0).with_min_increment(deadband);
    let mut ctrl = Controller::new(*params, state)?;

    let n = cfg.steps();
    let mut out = TraceSummary {
        dt: cfg.dt,
        samples: 0,
        t_c: None,
        events: Vec::new(),
    };
    let mut x = PlantState {
        sigma: cfg.sigma0,
        sigmadot: cfg.sigmadot0,
        v: if cfg.mu == 0.0 { 0.0 } else { cfg.v0 },
    };

    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        let sample = ctrl.sample(x.sigma).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, t },
            other => other,
        })?;
        if let Some(e) = sample.extremum {
            out.events.push(ExtremumEvent {
                t: t - f64::from(e.lag) * cfg.dt,
                sigma_m: e.value,
            });
        }
        let u = sample.output.u;
        let converged_now = out.t_c.is_none() && x.sigma.hypot(x.sigmadot) < cfg.conv_eps;
        if converged_now {
            out.t_c = Some(t);
        }
        let (next, f) = step(x, t, u, cfg)?;
        on_row(t, x, u, next.v, f);
        out.samples += 1;
        if converged_now && cfg.stop_on_convergence {
            break;
        }
        x = next;
    }
    Ok(out)
}

/// `∫|u| dt` over `[0, t_c)` by the rectangle rule.
pub fn measure_energy(trace: &Trace) -> Result<f64> {
    let t_c = trace.t_c.ok_or(Error::NotConverged)?;
    Ok(trace
        .t
        .iter()
        .zip(&trace.u)
        .take_while(|(t, _)| **t < t_c)
        .map(|(_, u)| u.abs() * trace.dt)
        .sum())
}

pub fn extract_extrema(trace: &Trace) -> Vec<ExtremumEvent> {
    trace.events.clone()
}

/// Extreme values of the reaching phase: events before `t_c`, with
/// same-sign events closer than `merge_window` seconds collapsed onto the
/// first one. Such pairs come from a slow monotone approach where the
/// sampled `σ` flattens for a couple of samples.
pub fn reaching_sequence(
    events: &[ExtremumEvent],
    t_c: Option<f64>,
    merge_window: f64,
) -> Vec<ExtremumEvent> {
    let t_end = t_c.unwrap_or(f64::INFINITY);
    let mut out: Vec<ExtremumEvent> = Vec::new();
    for e in events.iter().filter(|e| e.t < t_end) {
        if let Some(last) = out.last() {
            if sgn(last.sigma_m) == sgn(e.sigma_m) && e.t - last.t <= merge_window {
                continue;
            }
        }
        out.push(*e);
    }
    out
}

/// `|σ_{M,i+1}| / |σ_{M,i}|` for consecutive entries with a nonzero denominator.
pub fn contraction_ratios(seq: &[ExtremumEvent]) -> Vec<f64> {
    seq.windows(2)
        .filter(|w| w[0].sigma_m != 0.0)
        .map(|w| w[1].sigma_m.abs() / w[0].sigma_m.abs())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleMeasurement {
    pub sigma_a: f64,
    pub omega_c: f64,
    pub cycles_used: usize,
}

pub const DEFAULT_SETTLE_FRACTION: f64 = 0.5;
const MIN_CYCLES: usize = 4;

/// Steady oscillation in the last `1 - settle_fraction` of the trace.
///
/// The amplitude is the mean `|σ|` over detected extrema; the frequency comes
/// from the mean period between upward zero crossings, located by linear
/// interpolation. `None` when fewer than four full cycles are present.
pub fn measure_limit_cycle(
    trace: &Trace,
    settle_fraction: f64,
) -> Result<Option<LimitCycleMeasurement>> {
    if !(settle_fraction > 0.0 && settle_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "settle_fraction must be in (0, 1), got {settle_fraction}"
        )));
    }
    if trace.len() < 2 {
        return Ok(None);
    }
    let start = (trace.len() as f64 * settle_fraction).floor() as usize;
    let t0 = trace.t[start];

    let mut crossings = Vec::new();
    for k in start..trace.len() - 1 {
        let (a, b) = (trace.sigma[k], trace.sigma[k + 1]);
        if a < 0.0 && b >= 0.0 {
            let (ta, tb) = (trace.t[k], trace.t[k + 1]);
            crossings.push(ta + (tb - ta) * (-a) / (b - a));
        }
    }
    if crossings.len() < MIN_CYCLES + 1 {
        return Ok(None);
    }
    let cycles = crossings.len() - 1;
    let period = (crossings[cycles] - crossings[0]) / cycles as f64;

    let peaks: Vec<f64> = trace
        .events
        .iter()
        .filter(|e| e.t >= t0)
        .map(|e| e.sigma_m.abs())
        .collect();
    if peaks.is_empty() || period <= 0.0 {
        return Ok(None);
    }
    let sigma_a = peaks.iter().sum::<f64>() / peaks.len() as f64;
    if sigma_a <= 0.0 {
        return Ok(None);
    }
    Ok(Some(LimitCycleMeasurement {
        sigma_a,
        omega_c: 2.0 * std::f64::consts::PI / period,
        cycles_used: cycles,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Mode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    fn state(sigma: f64, sigmadot: f64, v: f64) -> PlantState {
        PlantState { sigma, sigmadot, v }
    }

    #[test]
    fn one_euler_step() {
        let (x, _) = step(state(0.0, 0.0, 0.0), 0.0, 1.0, &cfg()).unwrap();
        assert_eq!(x.sigmadot, 0.001);
        assert_eq!(x.sigma, 0.0);
    }

    #[test]
    fn free_drift() {
        let (x, _) = step(state(0.0, 1.0, 0.0), 0.0, 0.0, &cfg()).unwrap();
        assert_eq!(x.sigma, 0.001);
        assert_eq!(x.sigmadot, 1.0);
    }

    #[test]
    fn actuator_lag() {
        let c = SimConfig { mu: 0.01, ..cfg() };
        let (x, _) = step(state(0.0, 0.0, 0.0), 0.0, 1.0, &c).unwrap();
        assert_relative_eq!(x.v, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn step_rejects_non_finite() {
        assert!(matches!(
            step(state(f64::NAN, 0.0, 0.0), 0.0, 0.0, &cfg()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let p = ControllerParams::energy_saving(1.0, 0.0, 0.7, 0.7).unwrap();
        let tr = run(
            &p,
            &SimConfig {
                t_max: 1.0,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(tr.t_c, Some(0.0));
        assert!(tr.sigma.iter().all(|&s| s == 0.0));
        assert!(extract_extrema(&tr).is_empty());
    }

    #[test]
    fn config_validation() {
        let p = ControllerParams::energy_saving(1.0, 0.3, 0.7, 0.55).unwrap();
        let short = SimConfig {
            t_max: 0.0005,
            ..cfg()
        };
        assert!(matches!(run(&p, &short), Err(Error::InvalidConfig(_))));
        let loud = SimConfig {
            perturbation: PerturbationSpec::Constant(0.5),
            ..cfg()
        };
        assert!(matches!(run(&p, &loud), Err(Error::InvalidConfig(_))));
        let table = PerturbationSpec::Custom(vec![(0.0, 0.1), (1.0, 0.31)]);
        assert!(table.validate(0.3).is_err());
        assert!(SimConfig { mu: -1.0, ..cfg() }.validate().is_err());
        assert!(SimConfig {
            conv_eps: 0.0,
            ..cfg()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn custom_table_holds_values() {
        let p = PerturbationSpec::Custom(vec![(0.5, 0.1), (1.0, -0.2)]);
        assert_eq!(p.eval(0.0, 0.0, 0.0), 0.1);
        assert_eq!(p.eval(0.0, 0.0, 0.7), 0.1);
        assert_eq!(p.eval(0.0, 0.0, 1.0), -0.2);
        assert_eq!(p.eval(0.0, 0.0, 9.0), -0.2);
        assert_eq!(PerturbationSpec::SignSigmaDot(0.3).eval(0.0, 0.0, 0.0), 0.0);
    }

    fn constant_u_trace(u: f64, n: usize, t_c: f64) -> Trace {
        let dt = 0.001;
        Trace {
            dt,
            t: (0..n).map(|k| k as f64 * dt).collect(),
            sigma: vec![0.0; n],
            sigmadot: vec![0.0; n],
            u: vec![u; n],
            v: vec![u; n],
            f: vec![0.0; n],
            events: vec![],
            t_c: Some(t_c),
        }
    }

    #[test]
    fn energy_rectangle_rule() {
        assert_relative_eq!(
            measure_energy(&constant_u_trace(1.0, 1000, 0.5)).unwrap(),
            0.5,
            max_relative = 1e-9
        );
        assert_eq!(
            measure_energy(&constant_u_trace(0.0, 1000, 0.5)).unwrap(),
            0.0
        );
        let mut tr = constant_u_trace(1.0, 10, 0.0);
        tr.t_c = None;
        assert!(matches!(measure_energy(&tr), Err(Error::NotConverged)));
    }

    #[test]
    fn reaching_sequence_merges_flex_pairs() {
        let tr = Trace {
            events: vec![
                ExtremumEvent {
                    t: 0.0,
                    sigma_m: 1.0,
                },
                ExtremumEvent {
                    t: 1.0,
                    sigma_m: -0.5,
                },
                ExtremumEvent {
                    t: 1.002,
                    sigma_m: -0.5,
                },
                ExtremumEvent {
                    t: 2.0,
                    sigma_m: 0.2,
                },
                ExtremumEvent {
                    t: 3.0,
                    sigma_m: 0.01,
                },
            ],
            t_c: Some(2.5),
            dt: 0.001,
            ..Default::default()
        };
        let seq = reaching_sequence(&tr.events, tr.t_c, 0.005);
        assert_eq!(seq.len(), 3);
        let r = contraction_ratios(&seq);
        assert_relative_eq!(r[0], 0.5);
        assert_relative_eq!(r[1], 0.4);
    }

    #[test]
    fn limit_cycle_on_a_sine() {
        let dt = 1e-3;
        let w = 20.0;
        let n = 10_001;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let sigma: Vec<f64> = t.iter().map(|&t| 0.002 * (w * t).sin()).collect();
        let events = t
            .iter()
            .zip(&sigma)
            .enumerate()
            .filter(|(k, _)| *k > 0 && *k + 1 < n)
            .filter(|(k, (_, &s))| (s - sigma[k - 1]) * (sigma[k + 1] - s) < 0.0)
            .map(|(_, (&t, &s))| ExtremumEvent { t, sigma_m: s })
            .collect();
        let tr = Trace {
            dt,
            t,
            sigma,
            events,
            ..Default::default()
        };
        let m = measure_limit_cycle(&tr, 0.5).unwrap().unwrap();
        assert_relative_eq!(m.omega_c, w, max_relative = 1e-4);
        assert_relative_eq!(m.sigma_a, 0.002, max_relative = 1e-3);
        assert!(m.cycles_used >= 4);
        assert!(measure_limit_cycle(&tr, 1.0).is_err());
    }

    #[test]
    fn limit_cycle_absent_on_short_tail() {
        let dt = 1e-3;
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * dt).collect();
        let sigma = t.iter().map(|&t| (2.0 * t).sin()).collect();
        let tr = Trace {
            dt,
            t,
            sigma,
            ..Default::default()
        };
        assert_eq!(measure_limit_cycle(&tr, 0.5).unwrap(), None);
    }

    #[test]
    fn csv_round_trip() {
        let p = ControllerParams::energy_saving(1.0, 0.3, 0.7, 0.55).unwrap();
        let c = SimConfig {
            sigma0: 0.03,
            t_max: 0.3,
            perturbation: PerturbationSpec::SignSigmaDot(0.3),
            mu: 0.01,
            ..cfg()
        };
        let tr = run(&p, &c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,sigma,sigmadot,u,v,f\n"));
        let mut back = Trace::read_csv(buf.as_slice()).unwrap();
        let json = serde_json::to_string(&tr.summary()).unwrap();
        back.attach_summary(serde_json::from_str(&json).unwrap())
            .unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn summary_run_matches_full_run() {
        let p = ControllerParams::energy_saving(1.0, 0.3, 0.8, 0.3).unwrap();
        for stop in [false, true] {
            let c = SimConfig {
                sigma0: 0.5,
                t_max: 5.0,
                perturbation: PerturbationSpec::SignSigmaDot(-0.3),
                stop_on_convergence: stop,
                ..cfg()
            };
            assert_eq!(run_summary(&p, &c).unwrap(), run(&p, &c).unwrap().summary());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn traces_respect_invariants(
            phi in 0.0..0.4f64, b1 in 0.5..0.95f64, gap in 0.0..0.5f64,
            s0 in -0.2..0.2f64, sd0 in -0.3..0.3f64, kind in 0u8..4, mu_on in any::<bool>(),
        ) {
            let b2 = b1 - gap;
            let p = ControllerParams::energy_saving(1.0, phi, b1, b2).unwrap();
            let perturbation = match kind {
                0 => PerturbationSpec::Zero,
                1 => PerturbationSpec::SignSigmaDot(phi),
                2 => PerturbationSpec::SignSigmaDot(-phi),
                _ => PerturbationSpec::Constant(-phi),
            };
            let c = SimConfig {
                sigma0: s0, sigmadot0: sd0, t_max: 1.0, perturbation,
                mu: if mu_on { 0.02 } else { 0.0 }, ..cfg()
            };
            let tr = run(&p, &c).unwrap();
            let again = run(&p, &c).unwrap();
            prop_assert_eq!(&tr, &again);
            let n = tr.len();
            prop_assert!([tr.sigma.len(), tr.sigmadot.len(), tr.u.len(), tr.v.len(), tr.f.len()].iter().all(|&l| l == n));
            for w in tr.t.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!((w[1] - w[0] - c.dt).abs() < 1e-12);
            }
            for k in 0..n {
                prop_assert!(tr.f[k].abs() <= phi);
                if mu_on {
                    prop_assert!(tr.v[k].abs() <= 1.0 + c.v0.abs());
                } else {
                    prop_assert_eq!(tr.v[k], tr.u[k]);
                }
            }
        }

        #[test]
        fn detector_tracks_true_extrema(
            b1 in 0.5..0.95f64, gap in 0.0..0.6f64, s0 in 0.01..0.5f64, sd0 in -0.5..0.5f64,
        ) {
            // Extremum values from the detector are within one step's travel of
            // the true turning points of the sampled arc.
            let p = ControllerParams::new(1.0, 0.0, b1, b1 - gap, Mode::EnergySaving).unwrap();
            let c = SimConfig { sigma0: s0, sigmadot0: sd0, t_max: 2.0, ..cfg() };
            let tr = run(&p, &c).unwrap();
            let vmax = tr.sigmadot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let slack = vmax * c.dt + 0.5 * c.dt * c.dt + 1e-12;
            for e in &tr.events {
                let k = (e.t / c.dt).round() as usize;
                let lo = k.saturating_sub(2);
                let hi = (k + 2).min(tr.len() - 1);
                let near = tr.sigma[lo..=hi].iter().any(|&s| (s - e.sigma_m).abs() <= slack);
                prop_assert!(near);
                let local_extreme = if e.sigma_m >= tr.sigma[lo..=hi].iter().cloned().fold(f64::MIN, f64::max) - slack { true }
                    else { e.sigma_m <= tr.sigma[lo..=hi].iter().cloned().fold(f64::MAX, f64::min) + slack };
                prop_assert!(local_extreme);
            }
        }
    }
}
