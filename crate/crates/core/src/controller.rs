//! Sub-optimal second-order sliding mode control laws.
//!
//! Two laws share one extremum detector:
//!
//! * the conventional sub-optimal law `u = -U sgn(σ - β₁σ_M)`, and
//! * the energy-saving law `u = -½U sgn(σ - β₁σ_M) - ½U sgn(σ - β₂σ_M)`,
//!   which inserts a control-off band between the two thresholds.
//!
//! Until the first extreme value is seen the controller runs the
//! initializing action `u = -U sgn(σ - σ(0))`.
//!
//! `σ̇` is never measured. The last extreme value `σ_M` is recovered from the
//! sampled `σ` alone by watching the sign of successive increments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signum with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EnergySaving,
    Conventional,
}

/// Controller tuning: magnitude `U`, perturbation bound `Φ` and the two
/// switching thresholds. In [`Mode::Conventional`] `beta2` is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    #[serde(rename = "U")]
    pub u_max: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub mode: Mode,
}

impl ControllerParams {
    pub fn new(u_max: f64, phi: f64, beta1: f64, beta2: f64, mode: Mode) -> Result<Self> {
        let p = Self {
            u_max,
            phi,
            beta1,
            beta2,
            mode,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn energy_saving(u_max: f64, phi: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Self::new(u_max, phi, beta1, beta2, Mode::EnergySaving)
    }

    pub fn conventional(u_max: f64, phi: f64, beta1: f64) -> Result<Self> {
        Self::new(u_max, phi, beta1, beta1, Mode::Conventional)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_max.is_finite() && self.u_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "U must be > 0, got {}",
                self.u_max
            )));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "Phi must be >= 0, got {}",
                self.phi
            )));
        }
        if !self.beta1.is_finite() {
            return Err(Error::InvalidParams("beta1 must be finite".into()));
        }
        if self.mode == Mode::EnergySaving && !self.beta2.is_finite() {
            return Err(Error::InvalidParams("beta2 must be finite".into()));
        }
        Ok(())
    }

    /// `β₂` as the laws see it: equal to `β₁` in conventional mode.
    pub fn effective_beta2(&self) -> f64 {
        match self.mode {
            Mode::EnergySaving => self.beta2,
            Mode::Conventional => self.beta1,
        }
    }

    /// The same thresholds run as the benchmark conventional law.
    pub fn as_conventional(&self) -> Self {
        Self {
            beta2: self.beta1,
            mode: Mode::Conventional,
            ..*self
        }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    OnNegative,
    Off,
    OnPositive,
    Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub u: f64,
    pub phase: Phase,
}

impl ControlOutput {
    fn from_level(level: f64, u_max: f64) -> Self {
        let phase = if level > 0.0 {
            Phase::OnPositive
        } else if level < 0.0 {
            Phase::OnNegative
        } else {
            Phase::Off
        };
        Self {
            u: level * u_max,
            phase,
        }
    }
}

/// An extreme value reported by [`ControllerState::observe`].
///
/// `lag` is the number of samples between the turning point and the sample
/// that revealed it: 1 for a sign flip, 0 for a zero increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub lag: u8,
}

/// Detector memory plus the initialization flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub sigma_m: f64,
    pub prev_sigma: Option<f64>,
    /// Sign of the last increment larger than `min_increment` (-1, 0, +1).
    pub prev_delta: i8,
    pub initializing: bool,
    pub sigma0: f64,
    /// Increments with `|Δσ| <= min_increment` are ignored when this is positive.
    pub min_increment: f64,
    /// Set once a plateau has fired, so the flip that ends it does not fire again.
    latched: bool,
    increments_seen: u64,
}

impl ControllerState {
    pub fn new(sigma0: f64) -> Self {
        Self {
            sigma_m: 0.0,
            prev_sigma: None,
            prev_delta: 0,
            initializing: true,
            sigma0,
            min_increment: 0.0,
            latched: false,
            increments_seen: 0,
        }
    }

    pub fn with_min_increment(mut self, min_increment: f64) -> Self {
        self.min_increment = min_increment.max(0.0);
        self
    }

    /// A state that has already left initialization with `σ_M = sigma_m`.
    pub fn with_extreme_value(sigma_m: f64) -> Self {
        Self {
            sigma_m,
            initializing: false,
            sigma0: sigma_m,
            ..Self::new(sigma_m)
        }
    }

    /// Feed one sample. Must be called once per sample, in time order, before
    /// the control law. Returns the extreme value if one was detected.
    ///
    /// * Flip of the increment sign: the previous sample is the turning point.
    /// * Exact zero increment after motion: horizontal flex, current sample.
    ///   Only without a deadband; otherwise zero increments are ignored too.
    /// * Exact zero on the very first increment while initializing with
    ///   `σ ≠ 0`: a start at rest is itself an extreme point.
    pub fn observe(&mut self, sigma: f64) -> Option<Extremum> {
        let prev = self.prev_sigma.replace(sigma)?;
        let first = self.increments_seen == 0;
        self.increments_seen = self.increments_seen.saturating_add(1);
        let delta = sigma - prev;

        let event = if delta == 0.0 {
            // with a deadband a plateau looks the same as a held state
            let flex = self.min_increment == 0.0 && self.prev_delta != 0 && !self.latched;
            let rest_start = first && self.initializing && sigma != 0.0;
            if flex || rest_start {
                self.latched = true;
                Some(Extremum {
                    value: sigma,
                    lag: 0,
                })
            } else {
                None
            }
        } else if delta.abs() > self.min_increment {
            let dir = if delta > 0.0 { 1 } else { -1 };
            let flipped = self.prev_delta != 0 && dir != self.prev_delta && !self.latched;
            self.prev_delta = dir;
            self.latched = false;
            flipped.then_some(Extremum {
                value: prev,
                lag: 1,
            })
        } else {
            None
        };

        if let Some(e) = event {
            self.sigma_m = e.value;
            self.initializing = false;
        }
        event
    }
}

fn check_finite(sigma: f64) -> Result<()> {
    if sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "sigma",
            t: f64::NAN,
        })
    }
}

/// Both threshold terms as a single level in {-1, 0, +1}.
///
/// Disagreeing terms cancel. A sample sitting exactly on one threshold
/// belongs to the off band, which keeps `u` three-valued.
fn threshold_level(sigma: f64, sigma_m: f64, beta1: f64, beta2: f64) -> f64 {
    let a = sgn(sigma - beta1 * sigma_m);
    let b = sgn(sigma - beta2 * sigma_m);
    if a == b {
        -a
    } else {
        0.0
    }
}

pub fn control_energy_saving(
    sigma: f64,
    state: &ControllerState,
    params: &ControllerParams,
) -> Result<ControlOutput> {
    check_finite(sigma)?;
    if state.initializing {
        return Err(Error::Initializing);
    }
    let level = threshold_level(sigma, state.sigma_m, params.beta1, params.beta2);
    Ok(ControlOutput::from_level(level, params.u_max))
}

pub fn control_conventional(
    sigma: f64,
    state: &ControllerState,
    params: &ControllerParams,
) -> Result<ControlOutput> {
    check_finite(sigma)?;
    if state.initializing {
        return Err(Error::Initializing);
    }
    let level = -sgn(sigma - params.beta1 * state.sigma_m);
    Ok(ControlOutput::from_level(level, params.u_max))
}

pub fn control_init(
    sigma: f64,
    state: &ControllerState,
    params: &ControllerParams,
) -> Result<ControlOutput> {
    check_finite(sigma)?;
    if !state.initializing {
        return Err(Error::NotInitializing);
    }
    Ok(ControlOutput {
        u: -params.u_max * sgn(sigma - state.sigma0),
        phase: Phase::Init,
    })
}

/// One sample of a running controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub output: ControlOutput,
    pub extremum: Option<Extremum>,
}

/// Parameters plus detector state, fed one sample at a time.
#[derive(Debug, Clone)]
pub struct Controller {
    params: ControllerParams,
    state: ControllerState,
}

impl Controller {
    pub fn new(params: ControllerParams, state: ControllerState) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    /// observe, then apply the law the current phase calls for.
    pub fn sample(&mut self, sigma: f64) -> Result<Sample> {
        check_finite(sigma)?;
        let extremum = self.state.observe(sigma);
        let output = if self.state.initializing {
            control_init(sigma, &self.state, &self.params)?
        } else {
            match self.params.mode {
                Mode::EnergySaving => control_energy_saving(sigma, &self.state, &self.params)?,
                Mode::Conventional => control_conventional(sigma, &self.state, &self.params)?,
            }
        };
        Ok(Sample { output, extremum })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn es(beta1: f64, beta2: f64) -> ControllerParams {
        ControllerParams::energy_saving(1.0, 0.0, beta1, beta2).unwrap()
    }

    fn run_detector(samples: &[f64]) -> (ControllerState, Vec<Extremum>) {
        let mut st = ControllerState::new(samples[0]);
        let events = samples.iter().filter_map(|&s| st.observe(s)).collect();
        (st, events)
    }

    #[test]
    fn energy_saving_bands() {
        let st = ControllerState::with_extreme_value(1.0);
        let p = es(0.8, 0.2);
        assert_eq!(control_energy_saving(0.9, &st, &p).unwrap().u, -1.0);
        assert_eq!(control_energy_saving(0.5, &st, &p).unwrap().u, 0.0);
        assert_eq!(
            control_energy_saving(0.5, &st, &p).unwrap().phase,
            Phase::Off
        );
        assert_eq!(control_energy_saving(0.1, &st, &p).unwrap().u, 1.0);
    }

    #[test]
    fn equal_thresholds_reduce_to_conventional() {
        let st = ControllerState::with_extreme_value(1.0);
        let p = es(0.8, 0.8);
        let out = control_energy_saving(0.5, &st, &p).unwrap();
        assert_eq!(out.u, 1.0);
        assert_eq!(
            out,
            control_conventional(0.5, &st, &p.as_conventional()).unwrap()
        );
    }

    #[test]
    fn conventional_examples() {
        let p = ControllerParams::conventional(1.0, 0.0, 0.8).unwrap();
        let st = ControllerState::with_extreme_value(1.0);
        assert_eq!(control_conventional(0.9, &st, &p).unwrap().u, -1.0);
        assert_eq!(control_conventional(0.5, &st, &p).unwrap().u, 1.0);
        let mirror = ControllerState::with_extreme_value(-1.0);
        assert_eq!(control_conventional(-0.5, &mirror, &p).unwrap().u, -1.0);
    }

    #[test]
    fn init_law() {
        let p = es(0.8, 0.2);
        let st = ControllerState::new(1.0);
        assert_eq!(control_init(1.2, &st, &p).unwrap().u, -1.0);
        assert_eq!(control_init(1.0, &st, &p).unwrap().u, 0.0);
        assert_eq!(control_init(0.7, &st, &p).unwrap().u, 1.0);
        assert_eq!(control_init(0.7, &st, &p).unwrap().phase, Phase::Init);
    }

    #[test]
    fn law_phase_errors() {
        let p = es(0.8, 0.2);
        let init = ControllerState::new(1.0);
        assert!(matches!(
            control_energy_saving(0.5, &init, &p),
            Err(Error::Initializing)
        ));
        assert!(matches!(
            control_conventional(0.5, &init, &p),
            Err(Error::Initializing)
        ));
        let running = ControllerState::with_extreme_value(1.0);
        assert!(matches!(
            control_init(0.5, &running, &p),
            Err(Error::NotInitializing)
        ));
    }

    #[test]
    fn rejects_non_finite_sigma() {
        let p = es(0.8, 0.2);
        let st = ControllerState::with_extreme_value(1.0);
        assert!(control_energy_saving(f64::NAN, &st, &p).is_err());
        assert!(control_conventional(f64::INFINITY, &st, &p).is_err());
        assert!(control_init(f64::NAN, &ControllerState::new(0.0), &p).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ControllerParams::energy_saving(0.0, 0.0, 0.5, 0.2).is_err());
        assert!(ControllerParams::energy_saving(1.0, -0.1, 0.5, 0.2).is_err());
        assert!(ControllerParams::energy_saving(1.0, 0.1, f64::NAN, 0.2).is_err());
        // beta2 is ignored in conventional mode
        assert!(ControllerParams::new(1.0, 0.1, 0.5, f64::NAN, Mode::Conventional).is_ok());
    }

    #[test]
    fn detects_strict_maximum() {
        let (st, ev) = run_detector(&[0.0, 0.5, 1.0, 0.9]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0], Extremum { value: 1.0, lag: 1 });
        assert_eq!(st.sigma_m, 1.0);
        assert!(!st.initializing);
    }

    #[test]
    fn detects_strict_minimum() {
        let (st, _) = run_detector(&[0.0, -0.5, -1.0, -0.9]);
        assert_eq!(st.sigma_m, -1.0);
    }

    #[test]
    fn monotone_samples_leave_state_alone() {
        let (st, ev) = run_detector(&[0.0, 0.1, 0.2, 0.3]);
        assert!(ev.is_empty());
        assert_eq!(st.sigma_m, 0.0);
        assert!(st.initializing);
    }

    #[test]
    fn horizontal_flex_fires_once() {
        // rising, flat, rising again: one event at the first flat sample
        let (st, ev) = run_detector(&[0.0, 0.5, 1.0, 1.0, 1.0, 1.2, 1.1]);
        assert_eq!(ev[0], Extremum { value: 1.0, lag: 0 });
        // the later genuine maximum still fires
        assert_eq!(ev.len(), 2);
        assert_eq!(st.sigma_m, 1.2);
    }

    #[test]
    fn plateau_then_reversal_does_not_fire_twice() {
        let (_, ev) = run_detector(&[0.0, 0.5, 1.0, 1.0, 0.8]);
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn start_at_rest_is_an_extremum() {
        let (st, ev) = run_detector(&[0.3, 0.3, 0.3]);
        assert_eq!(ev, vec![Extremum { value: 0.3, lag: 0 }]);
        assert_eq!(st.sigma_m, 0.3);
    }

    #[test]
    fn rest_at_origin_is_not_an_extremum() {
        let (st, ev) = run_detector(&[0.0, 0.0, 0.0]);
        assert!(ev.is_empty());
        assert!(st.initializing);
    }

    #[test]
    fn sub_threshold_wiggles_are_ignored() {
        let mut st = ControllerState::new(0.0).with_min_increment(1e-6);
        let samples = [0.0, 0.1, 0.2, 0.2 + 5e-7, 0.2, 0.2 + 5e-7, 0.2, 0.3];
        let ev: Vec<_> = samples.iter().filter_map(|&s| st.observe(s)).collect();
        assert!(ev.is_empty());
    }

    #[test]
    fn deadband_suppresses_plateaus() {
        let mut st = ControllerState::new(0.0).with_min_increment(1e-6);
        let samples = [0.0, 0.5, 1.0, 1.0, 1.0, 1.2];
        assert!(samples.iter().all(|&s| st.observe(s).is_none()));
        // the stationary start still counts
        let mut st = ControllerState::new(0.3).with_min_increment(1e-6);
        assert!(st.observe(0.3).is_none());
        assert_eq!(st.observe(0.3), Some(Extremum { value: 0.3, lag: 0 }));
    }

    #[test]
    fn controller_runs_init_then_switches() {
        let p = es(0.8, 0.2);
        let mut c = Controller::new(p, ControllerState::new(0.0)).unwrap();
        let rising = [0.0, 0.1, 0.2];
        for s in rising {
            assert_eq!(c.sample(s).unwrap().output.phase, Phase::Init);
        }
        let s = c.sample(0.15).unwrap();
        assert_eq!(s.extremum.unwrap().value, 0.2);
        assert_eq!(s.output.phase, Phase::Off);
    }

    proptest! {
        #[test]
        fn output_is_three_valued(sigma in -5.0..5.0f64, sm in -5.0..5.0f64,
                                  b1 in -1.0..1.0f64, b2 in -1.0..1.0f64, u in 0.1..10.0f64) {
            let p = ControllerParams::energy_saving(u, 0.0, b1, b2).unwrap();
            let st = ControllerState::with_extreme_value(sm);
            for out in [control_energy_saving(sigma, &st, &p).unwrap(),
                        control_conventional(sigma, &st, &p).unwrap()] {
                prop_assert!(out.u == 0.0 || out.u == u || out.u == -u);
            }
        }

        #[test]
        fn equal_thresholds_match_conventional(sigma in -5.0..5.0f64, sm in -5.0..5.0f64,
                                               b in -1.0..1.0f64) {
            let p = ControllerParams::energy_saving(1.3, 0.0, b, b).unwrap();
            let st = ControllerState::with_extreme_value(sm);
            let a = control_energy_saving(sigma, &st, &p).unwrap();
            let c = control_conventional(sigma, &st, &p.as_conventional()).unwrap();
            prop_assert_eq!(a.u.to_bits(), c.u.to_bits());
        }

        #[test]
        fn odd_symmetry(sigma in -5.0..5.0f64, sm in -5.0..5.0f64,
                        b1 in -1.0..1.0f64, b2 in -1.0..1.0f64) {
            let p = ControllerParams::energy_saving(1.0, 0.0, b1, b2).unwrap();
            let u = control_energy_saving(sigma, &ControllerState::with_extreme_value(sm), &p).unwrap().u;
            let v = control_energy_saving(-sigma, &ControllerState::with_extreme_value(-sm), &p).unwrap().u;
            prop_assert_eq!(u, -v);
        }

        #[test]
        fn band_monotonicity(sm in 0.01..5.0f64, b2 in -0.99..0.98f64, gap in 0.001..1.0f64,
                             mut xs in proptest::collection::vec(-6.0..6.0f64, 2..40)) {
            let b1 = (b2 + gap).min(0.999);
            prop_assume!(b2 < b1);
            let p = ControllerParams::energy_saving(1.0, 0.0, b1, b2).unwrap();
            let st = ControllerState::with_extreme_value(sm);
            xs.sort_by(f64::total_cmp);
            let us: Vec<f64> = xs.iter().map(|&x| control_energy_saving(x, &st, &p).unwrap().u).collect();
            for w in us.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for (&x, &u) in xs.iter().zip(&us) {
                let expect = if x < b2 * sm { 1.0 } else if x > b1 * sm { -1.0 } else { 0.0 };
                prop_assert_eq!(u, expect);
            }
        }
    }
}
