//! Threshold selection: minimize `J − Ĵ` over the admissible `(β₁, β₂)`
//! region subject to `J − Ĵ < 0` and `Ĵ < Ĵ_max`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{cost_from_factors, time_factors, Bound};
use crate::controller::ControllerParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneRequest {
    #[serde(rename = "U")]
    pub u_max: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    /// Cap on `Ĵ`; `None` means three times the smallest `Ĵ` over `β₁`.
    #[serde(rename = "J_hat_max")]
    pub j_hat_max: Option<f64>,
    pub beta1_fixed: Option<f64>,
    pub grid_resolution: usize,
    pub refine_tol: f64,
}

impl Default for TuneRequest {
    fn default() -> Self {
        Self {
            u_max: 1.0,
            phi: 0.3,
            j_hat_max: None,
            beta1_fixed: None,
            grid_resolution: 256,
            refine_tol: 1e-6,
        }
    }
}

impl TuneRequest {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.u_max.is_finite()
            && self.phi.is_finite()
            && self.u_max > self.phi
            && self.phi > 0.0)
        {
            return bad(format!(
                "need U > Phi > 0, got U = {}, Phi = {}",
                self.u_max, self.phi
            ));
        }
        if let Some(cap) = self.j_hat_max {
            if !(cap > 0.0) {
                return bad(format!("J_hat_max must be > 0, got {cap}"));
            }
        }
        if self.grid_resolution < 64 {
            return bad(format!(
                "grid_resolution must be >= 64, got {}",
                self.grid_resolution
            ));
        }
        if !(self.refine_tol.is_finite() && self.refine_tol > 0.0) {
            return bad(format!("refine_tol must be > 0, got {}", self.refine_tol));
        }
        Ok(())
    }

    fn params(&self, beta1: f64, beta2: f64) -> ControllerParams {
        ControllerParams {
            u_max: self.u_max,
            phi: self.phi,
            beta1,
            beta2,
            mode: crate::controller::Mode::EnergySaving,
        }
    }

    fn beta1_range(&self) -> (f64, f64) {
        let m = self.refine_tol;
        (self.phi / self.u_max + m, 1.0 - m)
    }

    fn beta2_range(&self, beta1: f64) -> (f64, f64) {
        let m = self.refine_tol;
        let lo = (-1.0f64).max(2.0 * self.phi / self.u_max - beta1) + m;
        (lo, beta1 - m)
    }

    /// `Ĵ(β₁)`, or `+∞` when the conventional law does not contract.
    pub fn j_hat(&self, beta1: f64) -> f64 {
        time_factors(&self.params(beta1, beta1))
            .map(|tf| cost_from_factors(&tf, None).j_hat.or_inf())
            .unwrap_or(f64::INFINITY)
    }

    /// The cap in force: the explicit one, or three times the interior minimum of `Ĵ`.
    pub fn effective_j_hat_max(&self) -> f64 {
        self.j_hat_max.unwrap_or_else(|| {
            let (lo, hi) = self.beta1_range();
            let n = self.grid_resolution;
            let f = |b: f64| self.j_hat(b);
            let (i, _) = grid_argmin(lo, hi, n, f);
            let (a, b) = bracket(lo, hi, n, i);
            3.0 * golden_min(a, b, self.refine_tol, f)
                .1
                .min(f(grid_point(lo, hi, n, i)))
        })
    }

    /// `J − Ĵ` where every constraint holds at `(β₁, β₂)`, `+∞` elsewhere.
    pub fn objective(&self, beta1: f64, beta2: f64, cap: f64) -> f64 {
        self.evaluate(beta1, beta2, cap)
            .map_or(f64::INFINITY, |e| e.objective)
    }

    fn evaluate(&self, beta1: f64, beta2: f64, cap: f64) -> Option<Eval> {
        let m = self.refine_tol;
        let (u, phi) = (self.u_max, self.phi);
        let inside = beta1 + beta2 > 2.0 * phi / u + m * 0.5
            && (0.0..1.0 - m * 0.5).contains(&beta1)
            && beta2 > -1.0 + m * 0.5
            && beta2 < beta1 - m * 0.5;
        if !inside {
            return None;
        }
        let tf = time_factors(&self.params(beta1, beta2)).ok()?;
        if !(tf.contractive && tf.conventional_contractive) {
            return None;
        }
        let c = cost_from_factors(&tf, Some(cap));
        match (c.j, c.j_hat, c.delta) {
            (Bound::Finite(j), Bound::Finite(j_hat), Bound::Finite(d))
                if d < 0.0 && c.cap_ok == Some(true) =>
            {
                Some(Eval {
                    objective: d,
                    j,
                    j_hat,
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    objective: f64,
    j: f64,
    j_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub beta1: f64,
    pub beta2: f64,
    /// `J − Ĵ` at the returned pair.
    pub objective: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_hat")]
    pub j_hat: f64,
    #[serde(rename = "J_hat_max")]
    pub j_hat_max: f64,
    /// Share of the scanned grid that met every constraint.
    pub feasible_region_fraction: f64,
}

fn grid_point(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

/// First index with the smallest value (ties go to the smaller abscissa).
fn grid_argmin(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> (usize, f64) {
    (0..n)
        .map(|i| (i, f(grid_point(lo, hi, n, i))))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn bracket(lo: f64, hi: f64, n: usize, i: usize) -> (f64, f64) {
    (
        grid_point(lo, hi, n, i.saturating_sub(1)),
        grid_point(lo, hi, n, (i + 1).min(n - 1)),
    )
}

/// Golden-section search for a minimum on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn check_beta1(req: &TuneRequest, beta1: f64, cap: f64) -> Result<()> {
    if !beta1.is_finite() {
        return Err(Error::InvalidParams("beta1 must be finite".into()));
    }
    if beta1 <= req.phi / req.u_max {
        return Err(Error::NoSolution(format!(
            "beta1 = {beta1} does not exceed Phi/U, the conventional law cannot contract"
        )));
    }
    if beta1 >= 1.0 {
        return Err(Error::NoSolution(format!(
            "beta1 = {beta1} must be below 1"
        )));
    }
    let jh = req.j_hat(beta1);
    if !(jh < cap) {
        return Err(Error::NoSolution(format!(
            "J_hat({beta1}) = {jh} is not below the cap {cap}"
        )));
    }
    Ok(())
}

/// Best `β₂` for `(β₁, β₂)` at fixed `β₁` plus the grid feasibility count.
fn best_beta2(req: &TuneRequest, beta1: f64, cap: f64) -> (Option<(f64, Eval)>, usize) {
    let (lo, hi) = req.beta2_range(beta1);
    let n = req.grid_resolution;
    if lo >= hi {
        return (None, 0);
    }
    let f = |b2: f64| req.objective(beta1, b2, cap);
    let values: Vec<f64> = (0..n).map(|i| f(grid_point(lo, hi, n, i))).collect();
    let feasible = values.iter().filter(|v| v.is_finite()).count();
    let (i, best) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |b, (i, &v)| if v < b.1 { (i, v) } else { b },
        );
    if !best.is_finite() {
        return (None, feasible);
    }
    let mut b2 = grid_point(lo, hi, n, i);
    let (a, b) = bracket(lo, hi, n, i);
    let (r2, rv) = golden_min(a, b, req.refine_tol, f);
    if rv < best {
        b2 = r2;
    }
    (req.evaluate(beta1, b2, cap).map(|e| (b2, e)), feasible)
}

pub fn optimize_beta2(beta1: f64, req: &TuneRequest) -> Result<TuneResult> {
    req.validate()?;
    let cap = req.effective_j_hat_max();
    check_beta1(req, beta1, cap)?;
    let (best, feasible) = best_beta2(req, beta1, cap);
    let (beta2, e) = best.ok_or_else(|| {
        Error::NoSolution(format!(
            "no beta2 satisfies the constraints at beta1 = {beta1}"
        ))
    })?;
    Ok(TuneResult {
        beta1,
        beta2,
        objective: e.objective,
        j: e.j,
        j_hat: e.j_hat,
        j_hat_max: cap,
        feasible_region_fraction: feasible as f64 / req.grid_resolution as f64,
    })
}

/// Joint search. Runs [`optimize_beta2`] when `beta1_fixed` is set.
pub fn optimize_pair(req: &TuneRequest) -> Result<TuneResult> {
    req.validate()?;
    if let Some(b1) = req.beta1_fixed {
        return optimize_beta2(b1, req);
    }
    let cap = req.effective_j_hat_max();
    let (lo, hi) = req.beta1_range();
    let n = req.grid_resolution;

    // one grid row per β₁, evaluated in parallel, reduced in order
    let rows: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b1 = grid_point(lo, hi, n, i);
            let (b2lo, b2hi) = req.beta2_range(b1);
            let mut best = f64::INFINITY;
            let mut count = 0;
            if b2lo < b2hi {
                for j in 0..n {
                    let v = req.objective(b1, grid_point(b2lo, b2hi, n, j), cap);
                    if v.is_finite() {
                        count += 1;
                        if v < best {
                            best = v;
                        }
                    }
                }
            }
            (best, count)
        })
        .collect();
    let feasible: usize = rows.iter().map(|r| r.1).sum();
    let (i, grid_best) =
        rows.iter().enumerate().fold(
            (0, f64::INFINITY),
            |b, (i, r)| if r.0 < b.1 { (i, r.0) } else { b },
        );
    if !grid_best.is_finite() {
        return Err(Error::NoSolution(format!(
            "no admissible (beta1, beta2) for U = {}, Phi = {}, J_hat_max = {cap}",
            req.u_max, req.phi
        )));
    }

    // refine β₁ on the profile min over β₂, keeping the grid incumbent unless beaten
    let profile = |b1: f64| {
        if check_beta1(req, b1, cap).is_err() {
            return f64::INFINITY;
        }
        best_beta2(req, b1, cap)
            .0
            .map_or(f64::INFINITY, |(_, e)| e.objective)
    };
    let incumbent_b1 = grid_point(lo, hi, n, i);
    let incumbent = profile(incumbent_b1);
    let (a, b) = bracket(lo, hi, n, i);
    let (r1, rv) = golden_min(a, b, req.refine_tol, profile);
    let beta1 = if rv < incumbent { r1 } else { incumbent_b1 };

    let (beta2, e) = best_beta2(req, beta1, cap)
        .0
        .ok_or_else(|| Error::NoSolution("refinement lost feasibility".into()))?;
    Ok(TuneResult {
        beta1,
        beta2,
        objective: e.objective,
        j: e.j,
        j_hat: e.j_hat,
        j_hat_max: cap,
        feasible_region_fraction: feasible as f64 / (n * n) as f64,
    })
}
