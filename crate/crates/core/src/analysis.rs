//! Closed-form results for the energy-saving law: feasibility conditions,
//! reaching-cycle geometry, worst-case phase times, time and contraction
//! factors, convergence-time bounds and energy costs.
//!
//! All quantities are for the worst-case perturbation `|f| = Φ` and a cycle
//! starting from an extreme value `σ_Mi > 0` (the negative side is mirrored).

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, Mode};
use crate::error::{Error, Result};

/// A finite value or "no finite value exists".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn from_f64(x: f64) -> Self {
        if x.is_finite() {
            Self::Finite(x)
        } else {
            Self::Unbounded
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Self::Finite(x) => Some(x),
            Self::Unbounded => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }

    /// Unbounded maps to `+∞`.
    pub fn or_inf(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl From<Option<f64>> for Bound {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Unbounded, Self::from_f64)
    }
}

impl From<Bound> for Option<f64> {
    fn from(b: Bound) -> Self {
        b.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub mode: Mode,
    pub authority_ok: bool,
    pub sum_ok: bool,
    pub beta1_ok: bool,
    pub beta2_ok: bool,
    pub arc_positive: bool,
    pub twisting_ok: bool,
    pub monotonic_ok: bool,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Membership in the open triangle `β₁+β₂ > 2Φ/U`, `0 ≤ β₁ < 1`, `-1 < β₂ < β₁`.
    pub fn in_triangle(&self) -> bool {
        self.sum_ok && self.beta1_ok && self.beta2_ok
    }
}

/// Radicands shared by every formula, arranged so that `β₂ = β₁` gives
/// bit-identical energy-saving and conventional results.
#[derive(Debug, Clone, Copy)]
struct Radicands {
    /// `U − Φ`
    net: f64,
    /// `(U−Φ)(1−β₁)`
    descent: f64,
    /// `(U+Φ)(1−β₁)`
    peak: f64,
    /// `U(1−β₁) + Φ(1−2β₁+β₂)`
    arc: f64,
    /// `U(1−β₁) + Φ(1−β₂)`
    second: f64,
}

impl Radicands {
    fn new(p: &ControllerParams) -> Self {
        let (u, phi, b1, b2) = (p.u_max, p.phi, p.beta1, p.effective_beta2());
        let u1 = u * (1.0 - b1);
        Self {
            net: u - phi,
            descent: (u - phi) * (1.0 - b1),
            peak: u1 + phi * (1.0 - b1),
            arc: u1 + phi * ((1.0 - b1) + (b2 - b1)),
            second: u1 + phi * (1.0 - b2),
        }
    }

    fn require_valid(&self) -> Result<()> {
        if !(self.net > 0.0) {
            return Err(Error::Infeasible(
                "control authority requires U > Phi".into(),
            ));
        }
        if self.descent < 0.0 || self.peak < 0.0 || self.second < 0.0 {
            return Err(Error::Infeasible("beta1 must not exceed 1".into()));
        }
        if !(self.arc >= 0.0) {
            return Err(Error::Infeasible(
                "U(1-beta1) + Phi(1-2beta1+beta2) must not be negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn check_feasibility(params: &ControllerParams) -> FeasibilityReport {
    let (u, phi, b1, b2) = (
        params.u_max,
        params.phi,
        params.beta1,
        params.effective_beta2(),
    );
    let authority_ok = u > phi;
    let sum_ok = b1 + b2 > 2.0 * phi / u;
    let beta1_ok = (0.0..1.0).contains(&b1);
    let beta2_ok = -1.0 < b2 && b2 < b1;
    let arc_positive = Radicands::new(params).arc > 0.0;
    let twisting_ok = b1 > phi / u;
    let monotonic_ok = b1 > (phi + u) / (2.0 * u);
    let feasible = match params.mode {
        Mode::EnergySaving => authority_ok && sum_ok && beta1_ok && beta2_ok && arc_positive,
        Mode::Conventional => authority_ok && twisting_ok,
    };
    FeasibilityReport {
        mode: params.mode,
        authority_ok,
        sum_ok,
        beta1_ok,
        beta2_ok,
        arc_positive,
        twisting_ok,
        monotonic_ok,
        feasible,
    }
}

/// Velocities at the peaking points of one reaching cycle (all `≤ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachingGeometry {
    /// Switching point of the best case, perturbation opposing the control.
    #[serde(rename = "sdot_Pprime")]
    pub sdot_pprime: f64,
    /// Outer threshold crossed with the perturbation aiding the descent.
    #[serde(rename = "sdot_Pdprime")]
    pub sdot_pdprime: f64,
    /// Inner threshold reached after an off phase against the perturbation.
    #[serde(rename = "sdot_P1")]
    pub sdot_p1: f64,
    /// Inner threshold reached after an off phase with the perturbation.
    #[serde(rename = "sdot_P2")]
    pub sdot_p2: f64,
}

fn check_sigma_m(sigma_mi: f64) -> Result<()> {
    if sigma_mi.is_finite() && sigma_mi > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "sigma_Mi must be > 0, got {sigma_mi}"
        )))
    }
}

pub fn reaching_geometry(sigma_mi: f64, params: &ControllerParams) -> Result<ReachingGeometry> {
    check_sigma_m(sigma_mi)?;
    let r = Radicands::new(params);
    r.require_valid()?;
    let v = |rad: f64| -(2.0 * sigma_mi * rad).sqrt();
    Ok(ReachingGeometry {
        sdot_pprime: v(r.descent),
        sdot_pdprime: v(r.peak),
        sdot_p1: v(r.arc),
        sdot_p2: v(r.second),
    })
}

/// Worst-case durations of the phases of one reaching cycle.
/// Off-phase times are `None` (unbounded) when `Φ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    /// First control-on phase, from the extreme value to the outer threshold.
    #[serde(rename = "T_prime")]
    pub t_prime: f64,
    /// Off phase when the perturbation opposes the motion.
    #[serde(rename = "T1_star")]
    pub t1_star: Option<f64>,
    #[serde(rename = "T1_star_max")]
    pub t1_star_max: Option<f64>,
    /// Off phase when the perturbation aids the motion.
    #[serde(rename = "T2_star")]
    pub t2_star: Option<f64>,
    #[serde(rename = "T2_star_max")]
    pub t2_star_max: Option<f64>,
    /// Second control-on phase, from the inner threshold to the next extreme value.
    #[serde(rename = "T1_dstar")]
    pub t1_dstar: f64,
    #[serde(rename = "T2_dstar")]
    pub t2_dstar: f64,
}

pub fn phase_times(sigma_mi: f64, params: &ControllerParams) -> Result<PhaseTimes> {
    check_sigma_m(sigma_mi)?;
    let r = Radicands::new(params);
    r.require_valid()?;
    let k = (2.0 * sigma_mi).sqrt();
    let phi = params.phi;
    let off = |x: f64| (phi > 0.0).then(|| k / phi * x);
    let (peak, arc, second) = (r.peak.sqrt(), r.arc.sqrt(), r.second.sqrt());
    Ok(PhaseTimes {
        t_prime: k * r.descent.sqrt() / r.net,
        t1_star: off(peak - arc),
        t1_star_max: off(peak),
        t2_star: off(second - peak),
        t2_star_max: off(second),
        t1_dstar: k / r.net * arc,
        t2_dstar: k / r.net * second,
    })
}

/// Reaching-time and contraction factors. `Ω` maps `√(2σ_Mi)` to the worst
/// reaching time of one cycle; the `_on` part covers the control-on phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFactors {
    #[serde(rename = "Omega1")]
    pub omega1: Bound,
    #[serde(rename = "Omega2")]
    pub omega2: Bound,
    #[serde(rename = "Omega1_on")]
    pub omega1_on: f64,
    #[serde(rename = "Omega2_on")]
    pub omega2_on: f64,
    #[serde(rename = "Omega1_off")]
    pub omega1_off: Bound,
    #[serde(rename = "Omega2_off")]
    pub omega2_off: Bound,
    #[serde(rename = "Omega_hat")]
    pub omega_hat: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta_hat: f64,
    /// `η₁ < 1` and `η₂ < 1`.
    pub contractive: bool,
    /// `η̂ < 1`.
    pub conventional_contractive: bool,
}

impl TimeFactors {
    pub fn omega_max(&self) -> Bound {
        match (self.omega1, self.omega2) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a.max(b)),
            _ => Bound::Unbounded,
        }
    }

    pub fn eta_max(&self) -> f64 {
        self.eta1.max(self.eta2)
    }
}

pub fn time_factors(params: &ControllerParams) -> Result<TimeFactors> {
    let r = Radicands::new(params);
    r.require_valid()?;
    let (phi, b1, b2) = (params.phi, params.beta1, params.effective_beta2());
    let (descent, peak, arc, second) = (
        r.descent.sqrt(),
        r.peak.sqrt(),
        r.arc.sqrt(),
        r.second.sqrt(),
    );

    let omega1_on = (descent + arc) / r.net;
    let omega2_on = (descent + second) / r.net;
    let omega_hat = (peak + descent) / r.net;
    let (omega1_off, omega2_off) = if phi > 0.0 {
        (Bound::from_f64(peak / phi), Bound::from_f64(second / phi))
    } else {
        (Bound::Unbounded, Bound::Unbounded)
    };
    let total = |off: Bound, on: f64| match off {
        Bound::Finite(x) => Bound::from_f64(x + on),
        Bound::Unbounded => Bound::Unbounded,
    };

    let eta1 = (b2 - r.arc / r.net).abs();
    let eta2 = (b2 - r.second / r.net).abs();
    let eta_hat = (b1 - r.peak / r.net).abs();
    Ok(TimeFactors {
        omega1: total(omega1_off, omega1_on),
        omega2: total(omega2_off, omega2_on),
        omega1_on,
        omega2_on,
        omega1_off,
        omega2_off,
        omega_hat,
        eta1,
        eta2,
        eta_hat,
        contractive: eta1 < 1.0 && eta2 < 1.0,
        conventional_contractive: eta_hat < 1.0,
    })
}

/// Upper bound on the convergence instant given the first extreme value
/// `sigma_m1` reached at `t_m1`. Uses the mode's own factors.
pub fn convergence_bound(params: &ControllerParams, sigma_m1: f64, t_m1: f64) -> Result<Bound> {
    if !(sigma_m1.is_finite() && t_m1.is_finite()) {
        return Err(Error::InvalidParams(
            "sigma_M1 and t_M1 must be finite".into(),
        ));
    }
    let tf = time_factors(params)?;
    if sigma_m1 == 0.0 {
        return Ok(Bound::Finite(t_m1));
    }
    let (omega, eta) = match params.mode {
        Mode::EnergySaving => (tf.omega_max(), tf.eta_max()),
        Mode::Conventional => (Bound::Finite(tf.omega_hat), tf.eta_hat),
    };
    let Bound::Finite(omega) = omega else {
        return Ok(Bound::Unbounded);
    };
    if !(eta < 1.0) {
        return Ok(Bound::Unbounded);
    }
    let tail = std::f64::consts::SQRT_2 * omega / (1.0 - eta.sqrt()) * sigma_m1.abs().sqrt();
    Ok(Bound::from_f64(t_m1 + tail))
}

/// Energy costs of both laws at the same `β₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(rename = "J")]
    pub j: Bound,
    #[serde(rename = "J_hat")]
    pub j_hat: Bound,
    pub delta: Bound,
    /// `J − Ĵ < 0` with both finite.
    pub constraint_ok: bool,
    /// `Ĵ < Ĵ_max`; absent when no cap was given.
    pub cap_ok: Option<bool>,
}

fn cost(on: f64, eta: f64) -> Bound {
    if eta < 1.0 {
        Bound::from_f64(on / (1.0 - eta.sqrt()))
    } else {
        Bound::Unbounded
    }
}

pub fn energy_cost(params: &ControllerParams, j_hat_max: Option<f64>) -> Result<CostReport> {
    let tf = time_factors(params)?;
    Ok(cost_from_factors(&tf, j_hat_max))
}

pub(crate) fn cost_from_factors(tf: &TimeFactors, j_hat_max: Option<f64>) -> CostReport {
    // max(√η₁, √η₂) = √max(η₁, η₂)
    let j = cost(tf.omega1_on.max(tf.omega2_on), tf.eta_max());
    let j_hat = cost(tf.omega_hat, tf.eta_hat);
    let delta = match (j, j_hat) {
        (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a - b),
        _ => Bound::Unbounded,
    };
    CostReport {
        j,
        j_hat,
        delta,
        constraint_ok: matches!(delta, Bound::Finite(d) if d < 0.0),
        cap_ok: j_hat_max.map(|cap| matches!(j_hat, Bound::Finite(v) if v < cap)),
    }
}

fn keep<T>(r: Result<T>, note: &mut Option<String>) -> Option<T> {
    r.map_err(|e| {
        note.get_or_insert_with(|| e.to_string());
    })
    .ok()
}

/// Everything above for one parameter set, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: ControllerParams,
    pub feasibility: FeasibilityReport,
    pub sigma_mi: f64,
    pub geometry: Option<ReachingGeometry>,
    pub phase_times: Option<PhaseTimes>,
    pub factors: Option<TimeFactors>,
    pub convergence_bound: Option<Bound>,
    pub cost: Option<CostReport>,
    /// Why the optional parts are missing.
    pub note: Option<String>,
}

/// Evaluates every closed form at `σ_Mi = sigma_mi`, with the bound taken
/// from `(sigma_mi, t_m1)`.
pub fn analyze(
    params: &ControllerParams,
    sigma_mi: f64,
    t_m1: f64,
    j_hat_max: Option<f64>,
) -> AnalysisReport {
    let feasibility = check_feasibility(params);
    let mut note = None;
    let geometry = keep(reaching_geometry(sigma_mi, params), &mut note);
    let phase_times = keep(phase_times(sigma_mi, params), &mut note);
    let factors = keep(time_factors(params), &mut note);
    let convergence_bound = keep(convergence_bound(params, sigma_mi, t_m1), &mut note);
    let cost = keep(energy_cost(params, j_hat_max), &mut note);
    AnalysisReport {
        params: *params,
        feasibility,
        sigma_mi,
        geometry,
        phase_times,
        factors,
        convergence_bound,
        cost,
        note,
    }
}
