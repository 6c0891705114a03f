//! Hysteresis-switched gradient feedback on Sⁿ:
//!
//! ```text
//! ẋ = Π(x)ω,  ω = −∇V^y(x),  ẏ = 0      while μ(x, y) ≤ δ
//! y⁺ ∈ argmin over Y of V(x, ·)          when  μ(x, y) ≥ δ
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::{self, HybridArc, HybridError, HybridSystem, SolverConfig};
use crate::potential::{self, argmin_over_y, grad_unchecked, synergy_gap, ExpConstants, PotentialConfig, PotentialError};
use crate::report::{Check, Report};
use crate::sphere::{geodesic_distance, path_length, project, GeomError, UnitVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizerError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("state is not in the flow set: mu = {mu} > delta = {delta}")]
    NotInFlowSet { mu: f64, delta: f64 },
    #[error("the arc does not start with a jump at t = 0")]
    NotAJumpStart,
    #[error("the arc is empty")]
    EmptyArc,
}

/// State (x, y) ∈ Sⁿ × Y of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopState {
    pub x: UnitVector,
    pub y: UnitVector,
}

impl ClosedLoopState {
    pub fn new(cfg: &PotentialConfig, x: UnitVector, y: UnitVector) -> Result<Self, PotentialError> {
        potential::potential(cfg, &x, &y)?;
        Ok(Self { x, y })
    }
}

/// Overlap tolerance on μ ≤ δ used by [`controller_output`].
pub const FLOW_TOL: f64 = 1e-9;

/// ω = −∇V^y(x).
pub fn controller_output(cfg: &PotentialConfig, s: &ClosedLoopState) -> Result<DVector<f64>, StabilizerError> {
    let mu = synergy_gap(cfg, &s.x, &s.y)?;
    if mu > cfg.delta + FLOW_TOL {
        return Err(StabilizerError::NotInFlowSet { mu, delta: cfg.delta });
    }
    Ok(-grad_unchecked(cfg, &s.x, &s.y))
}

pub fn should_jump(cfg: &PotentialConfig, s: &ClosedLoopState) -> Result<bool, PotentialError> {
    Ok(synergy_gap(cfg, &s.x, &s.y)? >= cfg.delta)
}

pub fn jump_update(cfg: &PotentialConfig, s: &ClosedLoopState) -> ClosedLoopState {
    ClosedLoopState { x: s.x.clone(), y: argmin_over_y(cfg, &s.x) }
}

/// The closed loop as a [`HybridSystem`].
pub struct SphereClosedLoop<'a> {
    pub cfg: &'a PotentialConfig,
}

impl SphereClosedLoop<'_> {
    fn field(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        -project(x, &grad_unchecked(self.cfg, x, y))
    }
}

impl HybridSystem for SphereClosedLoop<'_> {
    type State = ClosedLoopState;

    fn flow_step(&self, _t: f64, s: &ClosedLoopState, h: f64) -> ClosedLoopState {
        let y = s.y.as_vector();
        let next = hybrid::rk4_step(|x| self.field(x, y), s.x.as_vector(), h);
        // Renormalise: the RK4 combination leaves the sphere at O(h⁵).
        ClosedLoopState { x: UnitVector::new(next).expect("finite flow"), y: s.y.clone() }
    }

    fn jump_margin(&self, _t: f64, s: &ClosedLoopState) -> f64 {
        synergy_gap(self.cfg, &s.x, &s.y).unwrap_or(f64::INFINITY) - self.cfg.delta
    }

    fn jump_map(&self, _t: f64, s: &ClosedLoopState) -> ClosedLoopState {
        jump_update(self.cfg, s)
    }

    fn is_finite(&self, s: &ClosedLoopState) -> bool {
        s.x.iter().chain(s.y.iter()).all(|c| c.is_finite())
    }
}

pub fn simulate(
    cfg: &PotentialConfig,
    x0: &UnitVector,
    y0: &UnitVector,
    solver: &SolverConfig,
) -> Result<HybridArc<ClosedLoopState>, StabilizerError> {
    let s0 = ClosedLoopState::new(cfg, x0.clone(), y0.clone())?;
    Ok(hybrid::solve(&SphereClosedLoop { cfg }, s0, solver)?)
}

/// V at a state, with the height evaluated as ‖x − r‖²/2 so that values far
/// below machine epsilon remain meaningful.
fn v_accurate(cfg: &PotentialConfig, s: &ClosedLoopState) -> f64 {
    let h = 0.5 * (s.x.as_vector() - cfg.r.as_vector()).norm_squared();
    h / (h + cfg.k * (1.0 - s.y.dot(&s.x)))
}

/// Outcome of [`check_exponential_decay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Slope of a least-squares fit of −log V(t) over flow samples with
    /// V ≥ 1e-12 (None if fewer than two such samples).
    pub lambda_emp: Option<f64>,
    pub lambda: f64,
    pub lambda_unsquared: f64,
    pub jump_count: usize,
    pub checks: Report,
}

/// Compares a closed-loop arc with the exponential-stability estimate.
///
/// Checks: `envelope` V(t, j) ≤ V(0, 0) e^{−(λ − 1e-6)t}; `distance_envelope`
/// ‖x − r‖ ≤ √(ᾱ/α̲) e^{−λt/2} ‖x(0) − r‖ (1 + 1e-6); `flow_monotone` V
/// non-increasing within phases (slack 1e-9); `jump_decrease` V drops by at
/// least δ − 1e-9 at every jump.
pub fn check_exponential_decay(
    arc: &HybridArc<ClosedLoopState>,
    cfg: &PotentialConfig,
    consts: &ExpConstants,
) -> Result<DecayReport, StabilizerError> {
    let (_, s0) = arc.first().ok_or(StabilizerError::EmptyArc)?;
    let v0 = v_accurate(cfg, s0);
    let e0 = (s0.x.as_vector() - cfg.r.as_vector()).norm();
    let lam = consts.lambda;
    let ratio = (consts.alpha_up / consts.alpha_low).sqrt();

    let mut env_worst = f64::NEG_INFINITY;
    let mut dist_worst = f64::NEG_INFINITY;
    let (mut st, mut sl, mut stt, mut stl, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, _, s) in arc.iter() {
        let v = v_accurate(cfg, s);
        env_worst = env_worst.max(v - v0 * (-(lam - 1e-6) * t).exp());
        let e = (s.x.as_vector() - cfg.r.as_vector()).norm();
        dist_worst = dist_worst.max(e - ratio * (-lam * t / 2.0).exp() * e0 * (1.0 + 1e-6));
        if v >= 1e-12 {
            let l = v.ln();
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
            n += 1.0;
        }
    }
    let lambda_emp = if n >= 2.0 && n * stt - st * st > 0.0 { Some(-(n * stl - st * sl) / (n * stt - st * st)) } else { None };

    let mut mono_worst = f64::NEG_INFINITY;
    for p in &arc.phases {
        for w in p.samples.windows(2) {
            mono_worst = mono_worst.max(v_accurate(cfg, &w[1].1) - v_accurate(cfg, &w[0].1));
        }
    }
    let mut jump_worst = f64::NEG_INFINITY;
    for (_, pre, post) in arc.jumps() {
        let drop = v_accurate(cfg, pre) - v_accurate(cfg, post);
        jump_worst = jump_worst.max(cfg.delta - 1e-9 - drop);
    }

    let mut checks = Report::default();
    checks.push(Check::new("envelope", env_worst <= 0.0, env_worst, 0.0, "max of V(t) − V(0,0)e^{−(λ−ε)t}"));
    checks.push(Check::new("distance_envelope", dist_worst <= 0.0, dist_worst, 0.0, "max of ‖x−r‖ minus its exponential envelope"));
    checks.push(Check::new("flow_monotone", mono_worst <= 1e-9, mono_worst.max(0.0), 1e-9, "largest increase of V between consecutive flow samples"));
    checks.push(Check::new(
        "jump_decrease",
        jump_worst <= 0.0,
        if arc.jump_count() == 0 { 0.0 } else { jump_worst },
        0.0,
        format!("{} jumps; worst shortfall of the V drop below δ − 1e-9", arc.jump_count()),
    ));
    Ok(DecayReport { lambda_emp, lambda: lam, lambda_unsquared: consts.lambda_unsquared, jump_count: arc.jump_count(), checks })
}

/// Outcome of [`check_geodesic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicReport {
    pub path_length: f64,
    pub expected: f64,
    pub difference: f64,
}

/// Compares the length travelled by x with the geodesic distance from x(0)
/// to r. The arc must start with a jump at t = 0.
pub fn check_geodesic(arc: &HybridArc<ClosedLoopState>, cfg: &PotentialConfig) -> Result<GeodesicReport, StabilizerError> {
    if arc.jump_count() == 0 || arc.jump_times()[0] != 0.0 {
        return Err(StabilizerError::NotAJumpStart);
    }
    let (_, s0) = arc.first().ok_or(StabilizerError::EmptyArc)?;
    let xs: Vec<UnitVector> = arc.phases[1..].iter().flat_map(|p| p.samples.iter().map(|(_, s)| s.x.clone())).collect();
    let len = path_length(&xs)?;
    let expected = geodesic_distance(&s0.x, &cfg.r);
    Ok(GeodesicReport { path_length: len, expected, difference: len - expected })
}
