//! Energy-saving sub-optimal second-order sliding mode control.
//!
//! * [`controller`]: the switching laws and the extremum detector
//! * [`plant`]: fixed-step simulation of the perturbed double integrator
//! * [`analysis`]: closed-form feasibility, reaching-time and energy results
//! * [`tuner`]: constrained threshold selection
//! * [`chattering`]: describing-function prediction of residual oscillations
//! * [`experiments`]: reproducible scenarios built on the above

// NaN must fail the range checks, so they are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chattering;
pub mod controller;
pub mod error;
pub mod experiments;
pub mod plant;
pub mod tuner;

pub use analysis::{
    check_feasibility, convergence_bound, energy_cost, phase_times, reaching_geometry,
    time_factors, Bound, CostReport, FeasibilityReport, PhaseTimes, ReachingGeometry, TimeFactors,
};
pub use chattering::{
    compare_prediction, describing_function, harmonic_balance, ChatteringPrediction, DfValue,
    PredictionError,
};
pub use controller::{
    control_conventional, control_energy_saving, control_init, sgn, ControlOutput, Controller,
    ControllerParams, ControllerState, Extremum, Mode, Phase,
};
pub use error::{Error, Result};
pub use plant::{
    extract_extrema, measure_energy, measure_limit_cycle, run, run_summary, step, ExtremumEvent,
    LimitCycleMeasurement, PerturbationSpec, PlantState, SimConfig, Trace, TraceSummary,
};
pub use tuner::{optimize_beta2, optimize_pair, TuneRequest, TuneResult};
