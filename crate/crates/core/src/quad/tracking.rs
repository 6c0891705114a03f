//! Thrust-vector tracking for a quadrotor
//!
//! ```text
//! ṗ = v,   v̇ = R r κ_u + g,   Ṙ = R S(ω)
//! ```
//!
//! The position loop commands an acceleration w = Sat(K(p̃; ṽ)); the thrust
//! direction ρ = (w − g + p̈_d)/‖w − g + p̈_d‖ is tracked by driving
//! x = Rᵀρ to r on S² with the hysteresis-switched potential, plus a
//! feedforward that cancels the motion of ρ.

use nalgebra::{DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::{self, HybridArc, HybridError, HybridSystem, SolverConfig};
use crate::potential::{argmin_over_y, denominator_bounds, grad_unchecked, synergy_gap, PotentialConfig, PotentialError};
use crate::quad::gains::PositionGains;
use crate::quad::reference::{RefSample, Reference};
use crate::quad::saturation::{saturation, saturation_jacobian, SatConfig};
use crate::sphere::{integrate_rotation_step, rotation_exp, skew, GeomError, Rotation, UnitVector};

pub type Matrix3x9 = SMatrix<f64, 3, 9>;
pub type Vector9 = SVector<f64, 9>;

/// Fixed attitude gain k₁. With the fixture gains k_p ν* is about 150 at
/// hover; k₁ = 100 shortens the flip enough that ‖p̃(8)‖ < 1e-2 in the
/// upside-down scenario (k₁ = 1 leaves 1.24e-2).
pub const DEFAULT_K1: f64 = 100.0;
pub const DEFAULT_KP: f64 = 1.0;
/// Reference frequency (Hz) of the default circle.
pub const DEFAULT_FREQ: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("commanded thrust w − g + p̈_d has norm {0:e}")]
    ZeroCommandedThrust(f64),
    #[error("state is not in the flow set: mu = {mu} > delta = {delta}")]
    NotInFlowSet { mu: f64, delta: f64 },
    #[error("potential reference r = {pot:?} differs from the body thrust axis {body:?}")]
    AxisMismatch { pot: Vec<f64>, body: Vec<f64> },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    /// Gravitational acceleration (m/s²).
    pub gravity: Vector3<f64>,
    /// Unit thrust direction in the body frame.
    pub r_body: Vector3<f64>,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self { gravity: Vector3::new(0.0, 0.0, 9.81), r_body: Vector3::new(0.0, 0.0, -1.0) }
    }
}

/// Plant state plus logic variable. The error coordinates z = (p̈_d, p̃, ṽ)
/// are formed from (t, p, v) and the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFullState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub rot: Rotation,
    pub y: UnitVector,
}

/// z = (p̈_d, p̃, ṽ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCoords {
    pub accel_d: Vector3<f64>,
    pub p_err: Vector3<f64>,
    pub v_err: Vector3<f64>,
}

impl ErrorCoords {
    pub fn new(t: f64, s: &QuadFullState, reference: &dyn Reference) -> Self {
        let d = reference.eval(t);
        Self { accel_d: d.a, p_err: s.p - d.p, v_err: s.v - d.v }
    }

    /// z̃ = (p̃; ṽ).
    pub fn ztilde(&self) -> SVector<f64, 6> {
        SVector::<f64, 6>::from_iterator(self.p_err.iter().chain(self.v_err.iter()).copied())
    }
}

/// w = Sat(K (p̃; ṽ)).
pub fn position_feedback(gains: &PositionGains, sat: &SatConfig, p_err: &Vector3<f64>, v_err: &Vector3<f64>) -> Vector3<f64> {
    let z = SVector::<f64, 6>::from_iterator(p_err.iter().chain(v_err.iter()).copied());
    saturation(sat, &(gains.k * z))
}

fn thrust_vector(params: &QuadParams, w: &Vector3<f64>, accel_d: &Vector3<f64>) -> Result<Vector3<f64>, TrackingError> {
    let u = w - params.gravity + accel_d;
    let n = u.norm();
    if !(n >= 1e-9) {
        return Err(TrackingError::ZeroCommandedThrust(n));
    }
    Ok(u)
}

/// ρ = (w − g + p̈_d)/‖w − g + p̈_d‖.
pub fn commanded_thrust_dir(params: &QuadParams, w: &Vector3<f64>, accel_d: &Vector3<f64>) -> Result<UnitVector, TrackingError> {
    Ok(UnitVector::from_vector3(&thrust_vector(params, w, accel_d)?)?)
}

/// κ_u = rᵀRᵀ(w − g + p̈_d), the least-squares thrust along the body axis.
pub fn thrust_magnitude(params: &QuadParams, rot: &Rotation, w: &Vector3<f64>, accel_d: &Vector3<f64>) -> f64 {
    params.r_body.dot(&(rot.matrix().transpose() * (w - params.gravity + accel_d)))
}

/// D_z ρ(z) = (I − ρρᵀ)/‖u‖ · [I | J_Sat K], columns ordered (p̈_d, p̃, ṽ).
pub fn rho_jacobian(params: &QuadParams, gains: &PositionGains, sat: &SatConfig, z: &ErrorCoords) -> Result<Matrix3x9, TrackingError> {
    let kz = gains.k * z.ztilde();
    let w = saturation(sat, &kz);
    let u = thrust_vector(params, &w, &z.accel_d)?;
    let n = u.norm();
    let rho = u / n;
    let proj = (Matrix3::identity() - rho * rho.transpose()) / n;
    let jk = saturation_jacobian(sat, &kz) * gains.k;
    let mut du = Matrix3x9::zeros();
    du.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    du.fixed_view_mut::<3, 6>(0, 3).copy_from(&jk);
    Ok(proj * du)
}

/// ν* = (2/√α̲) σ_max([0 I] P^{1/2}) ‖w − g + p̈_d‖.
pub fn nu_star(params: &QuadParams, gains: &PositionGains, cfg: &PotentialConfig, w: &Vector3<f64>, accel_d: &Vector3<f64>) -> f64 {
    let alpha_low = 1.0 / (2.0 * denominator_bounds(cfg.k, cfg.gamma).1);
    2.0 / alpha_low.sqrt() * gains.p22_sigma * (w - params.gravity + accel_d).norm()
}

/// Closed loop H₁: plant, position loop, hybrid attitude loop and reference.
pub struct TrackingLoop<'a> {
    pub params: QuadParams,
    pub gains: &'a PositionGains,
    /// Potential on S² whose reference point is the body thrust axis.
    pub pot: &'a PotentialConfig,
    pub sat: SatConfig,
    pub k1: f64,
    pub kp: f64,
    pub reference: &'a dyn Reference,
}

/// Quantities derived from a state, exported alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    /// V(Rᵀρ, y).
    pub v1: f64,
    pub mu: f64,
    /// ‖K(p̃; ṽ)‖.
    pub kz_norm: f64,
    pub kappa_u: f64,
    pub p_err_norm: f64,
    pub v_err_norm: f64,
    /// z̃ᵀPz̃.
    pub vp: f64,
}

struct Eval {
    x: Vector3<f64>,
    omega: Vector3<f64>,
    accel: Vector3<f64>,
}

impl<'a> TrackingLoop<'a> {
    pub fn new(
        params: QuadParams,
        gains: &'a PositionGains,
        pot: &'a PotentialConfig,
        sat: SatConfig,
        k1: f64,
        kp: f64,
        reference: &'a dyn Reference,
    ) -> Result<Self, TrackingError> {
        if pot.dim() != 3 || (pot.r.to_vector3() - params.r_body).norm() > 1e-12 {
            return Err(TrackingError::AxisMismatch { pot: pot.r.as_slice().to_vec(), body: params.r_body.as_slice().to_vec() });
        }
        Ok(Self { params, gains, pot, sat, k1, kp, reference })
    }

    /// x = Rᵀρ(z).
    pub fn attitude_error(&self, t: f64, s: &QuadFullState) -> Result<UnitVector, TrackingError> {
        let z = ErrorCoords::new(t, s, self.reference);
        let w = position_feedback(self.gains, &self.sat, &z.p_err, &z.v_err);
        let u = thrust_vector(&self.params, &w, &z.accel_d)?;
        Ok(UnitVector::from_vector3(&(s.rot.matrix().transpose() * u.normalize()))?)
    }

    fn eval(&self, d: &RefSample, p: &Vector3<f64>, v: &Vector3<f64>, rot: &Matrix3<f64>, y: &DVector<f64>) -> Result<Eval, TrackingError> {
        let z = ErrorCoords { accel_d: d.a, p_err: p - d.p, v_err: v - d.v };
        let w = position_feedback(self.gains, &self.sat, &z.p_err, &z.v_err);
        let u = thrust_vector(&self.params, &w, &z.accel_d)?;
        let rho = u.normalize();
        let rr = rot * self.params.r_body;
        let kappa = rr.dot(&u);
        let accel = rr * kappa + self.params.gravity;
        let fp = Vector9::from_iterator(d.jerk.iter().chain(z.v_err.iter()).chain((accel - d.a).iter()).copied());
        let d_rho = rho_jacobian(&self.params, self.gains, &self.sat, &z)?;
        let x = rot.transpose() * rho;
        let xd = DVector::from_column_slice(x.as_slice());
        let g = grad_unchecked(self.pot, &xd, y);
        let g = Vector3::new(g[0], g[1], g[2]);
        let gain = self.k1 + self.kp * nu_star(&self.params, self.gains, self.pot, &w, &z.accel_d);
        let omega = skew(&x) * (rot.transpose() * (d_rho * fp) + g * gain);
        Ok(Eval { x, omega, accel })
    }

    /// ω of the attitude loop at a flow-set state.
    pub fn omega_command(&self, t: f64, s: &QuadFullState) -> Result<Vector3<f64>, TrackingError> {
        let x = self.attitude_error(t, s)?;
        let mu = synergy_gap(self.pot, &x, &s.y)?;
        if mu > self.pot.delta + crate::stabilizer::FLOW_TOL {
            return Err(TrackingError::NotInFlowSet { mu, delta: self.pot.delta });
        }
        Ok(self.eval(&self.reference.eval(t), &s.p, &s.v, s.rot.matrix(), &s.y)?.omega)
    }

    pub fn derived(&self, t: f64, s: &QuadFullState) -> Derived {
        let z = ErrorCoords::new(t, s, self.reference);
        let zt = z.ztilde();
        let kz = self.gains.k * zt;
        let w = saturation(&self.sat, &kz);
        let (v1, mu) = match self.attitude_error(t, s) {
            Ok(x) => {
                let v1 = crate::potential::potential(self.pot, &x, &s.y).unwrap_or(f64::NAN);
                (v1, synergy_gap(self.pot, &x, &s.y).unwrap_or(f64::NAN))
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        Derived {
            v1,
            mu,
            kz_norm: kz.norm(),
            kappa_u: thrust_magnitude(&self.params, &s.rot, &w, &z.accel_d),
            p_err_norm: z.p_err.norm(),
            v_err_norm: z.v_err.norm(),
            vp: (zt.transpose() * self.gains.p * zt)[(0, 0)],
        }
    }

    fn nan_state(s: &QuadFullState) -> QuadFullState {
        QuadFullState { p: Vector3::repeat(f64::NAN), ..s.clone() }
    }
}

impl HybridSystem for TrackingLoop<'_> {
    type State = QuadFullState;

    /// Commutator-free fourth-order Lie–Runge–Kutta step: (p, v) advance with
    /// the classical RK4 weights, R with two exponentials of combined stage
    /// rates, so R stays on SO(3) up to rounding.
    fn flow_step(&self, t: f64, s: &QuadFullState, h: f64) -> QuadFullState {
        let y = s.y.as_vector();
        let r0 = *s.rot.matrix();
        let d0 = self.reference.eval(t);
        let dm = self.reference.eval(t + h / 2.0);
        let d1 = self.reference.eval(t + h);
        let run = || -> Result<QuadFullState, TrackingError> {
            let e1 = self.eval(&d0, &s.p, &s.v, &r0, y)?;
            let r2 = r0 * rotation_exp(&(e1.omega * (h / 2.0)));
            let (p2, v2) = (s.p + s.v * (h / 2.0), s.v + e1.accel * (h / 2.0));
            let e2 = self.eval(&dm, &p2, &v2, &r2, y)?;
            let r3 = r0 * rotation_exp(&(e2.omega * (h / 2.0)));
            let (p3, v3) = (s.p + v2 * (h / 2.0), s.v + e2.accel * (h / 2.0));
            let e3 = self.eval(&dm, &p3, &v3, &r3, y)?;
            let r4 = r2 * rotation_exp(&((e3.omega - e1.omega / 2.0) * h));
            let (p4, v4) = (s.p + v3 * h, s.v + e3.accel * h);
            let e4 = self.eval(&d1, &p4, &v4, &r4, y)?;
            let a = e1.omega / 4.0 + e2.omega / 6.0 + e3.omega / 6.0 - e4.omega / 12.0;
            let b = -e1.omega / 12.0 + e2.omega / 6.0 + e3.omega / 6.0 + e4.omega / 4.0;
            let rot = integrate_rotation_step(&integrate_rotation_step(&s.rot, &a, h), &b, h);
            let p = s.p + (s.v + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
            let v = s.v + (e1.accel + e2.accel * 2.0 + e3.accel * 2.0 + e4.accel) * (h / 6.0);
            let _ = e1.x;
            Ok(QuadFullState { p, v, rot, y: s.y.clone() })
        };
        run().unwrap_or_else(|_| Self::nan_state(s))
    }

    fn jump_margin(&self, t: f64, s: &QuadFullState) -> f64 {
        match self.attitude_error(t, s) {
            Ok(x) => synergy_gap(self.pot, &x, &s.y).unwrap_or(f64::INFINITY) - self.pot.delta,
            Err(_) => f64::NAN,
        }
    }

    fn jump_map(&self, t: f64, s: &QuadFullState) -> QuadFullState {
        match self.attitude_error(t, s) {
            Ok(x) => QuadFullState { y: argmin_over_y(self.pot, &x), ..s.clone() },
            Err(_) => Self::nan_state(s),
        }
    }

    fn is_finite(&self, s: &QuadFullState) -> bool {
        s.p.iter().chain(s.v.iter()).chain(s.rot.matrix().iter()).chain(s.y.iter()).all(|c| c.is_finite())
    }
}

pub fn simulate_tracking(
    lp: &TrackingLoop<'_>,
    initial: QuadFullState,
    solver: &SolverConfig,
) -> Result<HybridArc<QuadFullState>, TrackingError> {
    crate::potential::potential(lp.pot, &lp.pot.r, &initial.y)?;
    Ok(hybrid::solve(lp, initial, solver)?)
}

/// The upside-down start: p = p_d(0), v = ṗ_d(0), R = diag(1, −1, −1),
/// y = (0, 0, 1).
pub fn upside_down_initial(reference: &dyn Reference) -> QuadFullState {
    let d = reference.eval(0.0);
    QuadFullState {
        p: d.p,
        v: d.v,
        rot: Rotation::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))).expect("diag(1,-1,-1) is a rotation"),
        y: UnitVector::from_slice(&[0.0, 0.0, 1.0]).expect("unit"),
    }
}

/// Summary of a tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub max_kz_norm: f64,
    /// max ‖K z̃‖ ≤ b over the run: the saturation never engaged.
    pub saturation_inactive: bool,
    /// z̃(0)ᵀHz̃(0) ≤ 1: the run starts in the certified set.
    pub initial_in_u: bool,
    /// Least-squares slope of −log W₁ over samples with W₁ ≥ 1e-9.
    pub w1_rate: Option<f64>,
    /// W₁ drop at each jump and the lower bound k̄₁(√V₁⁻ − √V₁⁺).
    pub w1_jump_drops: Vec<(f64, f64)>,
    pub jump_count: usize,
    pub jump_times: Vec<f64>,
    pub final_p_err: f64,
    pub final_v_err: f64,
    pub min_kappa_u: f64,
}

/// W₁ = √(z̃ᵀPz̃) + k̄₁√V₁.
pub fn w1(gains: &PositionGains, d: &Derived) -> f64 {
    d.vp.max(0.0).sqrt() + gains.kbar1 * d.v1.max(0.0).sqrt()
}

pub fn tracking_metrics(arc: &HybridArc<QuadFullState>, lp: &TrackingLoop<'_>) -> TrackingMetrics {
    let mut max_kz = 0.0f64;
    let mut min_kappa = f64::INFINITY;
    let (mut st, mut sl, mut stt, mut stl, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, _, s) in arc.iter() {
        let d = lp.derived(t, s);
        max_kz = max_kz.max(d.kz_norm);
        min_kappa = min_kappa.min(d.kappa_u);
        let w = w1(lp.gains, &d);
        if w >= 1e-9 {
            st += t;
            sl += w.ln();
            stt += t * t;
            stl += t * w.ln();
            n += 1.0;
        }
    }
    let w1_rate = if n >= 2.0 && n * stt - st * st > 0.0 { Some(-(n * stl - st * sl) / (n * stt - st * st)) } else { None };
    let w1_jump_drops = arc
        .jumps()
        .into_iter()
        .map(|(t, pre, post)| {
            let (a, b) = (lp.derived(t, pre), lp.derived(t, post));
            (w1(lp.gains, &a) - w1(lp.gains, &b), lp.gains.kbar1 * (a.v1.sqrt() - b.v1.sqrt()))
        })
        .collect();
    let (t0, s0) = arc.first().expect("nonempty arc");
    let z0 = ErrorCoords::new(t0, s0, lp.reference).ztilde();
    let (tf, sf) = arc.last().expect("nonempty arc");
    let df = lp.derived(tf, sf);
    TrackingMetrics {
        max_kz_norm: max_kz,
        saturation_inactive: max_kz <= lp.sat.b,
        initial_in_u: (z0.transpose() * lp.gains.h * z0)[(0, 0)] <= 1.0,
        w1_rate,
        w1_jump_drops,
        jump_count: arc.jump_count(),
        jump_times: arc.jump_times(),
        final_p_err: df.p_err_norm,
        final_v_err: df.v_err_norm,
        min_kappa_u: min_kappa,
    }
}
