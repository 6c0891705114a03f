//! The centrally synergistic potential
//!
//! ```text
//! V(x, y) = (1 − rᵀx) / (1 − rᵀx + k (1 − yᵀx)),   y ∈ Y = {y ∈ Sⁿ : rᵀy ≤ γ}
//! ```
//!
//! with its gradient, closed-form minimisation over the logic set Y, the
//! synergy gap μ, and the constants of the exponential-stability estimate.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Check, Report};
use crate::sampling::{sphere_grid, tangent_basis, uniform_in_cap, uniform_sphere};
use crate::sphere::{geodesic_distance, project, UnitVector};

/// Slack on the membership test rᵀy ≤ γ. Boundary points produced by
/// [`argmin_over_y`] for x within ~1e-6 rad of −r carry rounding of order 1e-10
/// in rᵀy, so the check is looser than machine precision.
pub const Y_TOL: f64 = 1e-9;

/// Width of the half-open branch comparisons in the argmin.
const BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("k must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error("gamma must lie in (-1, 1), got {0}")]
    InvalidGamma(f64),
    #[error("delta must be < (1+gamma)/(2/k+1+gamma) = {bound} and positive, got {delta}")]
    InvalidDelta { delta: f64, bound: f64 },
    #[error("(x, y) = (r, r) is outside the domain of V")]
    OutsideDomain,
    #[error("logic variable outside Y: rᵀy = {ry} > gamma = {gamma}")]
    LogicVarOutsideY { ry: f64, gamma: f64 },
    #[error("dimension mismatch: reference has {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("property verification needs at least 1000 samples, got {0}")]
    TooFewSamples(usize),
}

/// Parameters (r, k, γ, δ) of the potential family and the hysteresis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub r: UnitVector,
    pub k: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl PotentialConfig {
    pub fn new(r: UnitVector, k: f64, gamma: f64, delta: f64) -> Result<Self, PotentialError> {
        let cfg = Self { r, k, gamma, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(PotentialError::InvalidGain(self.k));
        }
        if !(self.gamma > -1.0 && self.gamma < 1.0) {
            return Err(PotentialError::InvalidGamma(self.gamma));
        }
        let bound = self.delta_bound();
        if !(self.delta > 0.0 && self.delta < bound) {
            return Err(PotentialError::InvalidDelta { delta: self.delta, bound });
        }
        Ok(())
    }

    /// Supremum of admissible hysteresis gaps, equal to the minimum synergy gap.
    pub fn delta_bound(&self) -> f64 {
        min_synergy_gap(self.k, self.gamma)
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn in_y(&self, y: &UnitVector) -> bool {
        self.r.dot(y) <= self.gamma + Y_TOL
    }

    fn check(&self, x: &UnitVector, y: &UnitVector) -> Result<(), PotentialError> {
        for v in [x, y] {
            if v.dim() != self.dim() {
                return Err(PotentialError::DimensionMismatch { expected: self.dim(), got: v.dim() });
            }
        }
        let ry = self.r.dot(y);
        if ry > self.gamma + Y_TOL {
            if (x.as_vector() - self.r.as_vector()).norm() < 1e-12 && ry > 1.0 - 1e-12 {
                return Err(PotentialError::OutsideDomain);
            }
            return Err(PotentialError::LogicVarOutsideY { ry, gamma: self.gamma });
        }
        Ok(())
    }
}

/// Constants of the exponential-stability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpConstants {
    /// α̲ in α̲‖x − r‖² ≤ V.
    pub alpha_low: f64,
    /// ᾱ in V ≤ ᾱ‖x − r‖².
    pub alpha_up: f64,
    /// Decay rate 2k(1 − V*)(1 − γ) / D̄² with D̄ the denominator upper bound.
    pub lambda: f64,
    /// Same numerator over D̄ instead of D̄².
    pub lambda_unsquared: f64,
    /// Numerical estimate of V* = max of V over the flow set.
    pub v_flow_max: f64,
    /// Closed-form upper bound δ + 2/(2 + k(1 + γ)) on V*.
    pub v_flow_bound: f64,
}

/// 1 − rᵀx = ‖x − r‖²/2.
pub fn height(r: &UnitVector, x: &UnitVector) -> f64 {
    1.0 - r.dot(x)
}

/// Denominator 1 − rᵀx + k(1 − yᵀx) of V.
pub fn denominator(cfg: &PotentialConfig, x: &UnitVector, y: &UnitVector) -> f64 {
    height(&cfg.r, x) + cfg.k * (1.0 - y.dot(x))
}

/// [1 + k − √(1+2kγ+k²), 1 + k + √(1+2kγ+k²)]: range of the denominator over
/// Sⁿ × Y.
pub fn denominator_bounds(k: f64, gamma: f64) -> (f64, f64) {
    let s = (1.0 + 2.0 * k * gamma + k * k).sqrt();
    (1.0 + k - s, 1.0 + k + s)
}

/// (1 + γ)/(2/k + 1 + γ): the smallest value of μ(x, x) over x ∈ Y.
pub fn min_synergy_gap(k: f64, gamma: f64) -> f64 {
    (1.0 + gamma) / (2.0 / k + 1.0 + gamma)
}

pub fn potential(cfg: &PotentialConfig, x: &UnitVector, y: &UnitVector) -> Result<f64, PotentialError> {
    cfg.check(x, y)?;
    Ok(potential_unchecked(cfg, x, y))
}

fn potential_unchecked(cfg: &PotentialConfig, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let h = 1.0 - cfg.r.dot(x);
    let d = h + cfg.k * (1.0 - y.dot(x));
    // Clamp away rounding that would push the ratio a few ulps outside [0, 1].
    (h.max(0.0) / d).clamp(0.0, 1.0)
}

/// Ambient gradient ∇V^y(x) = (k V y − (1 − V) r) / D.
pub fn grad_potential(cfg: &PotentialConfig, x: &UnitVector, y: &UnitVector) -> Result<DVector<f64>, PotentialError> {
    cfg.check(x, y)?;
    Ok(grad_unchecked(cfg, x, y))
}

pub(crate) fn grad_unchecked(cfg: &PotentialConfig, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let h = 1.0 - cfg.r.dot(x);
    let d = h + cfg.k * (1.0 - y.dot(x));
    let v = h / d;
    (y * (cfg.k * v) - cfg.r.as_vector() * (1.0 - v)) / d
}

/// ‖Π(x)∇V^y(x)‖² in closed form: 2kV(1 − V)(1 − rᵀy)/D².
pub fn tangent_grad_norm_sq(cfg: &PotentialConfig, x: &UnitVector, y: &UnitVector) -> Result<f64, PotentialError> {
    cfg.check(x, y)?;
    let d = denominator(cfg, x, y);
    let v = potential_unchecked(cfg, x, y);
    Ok(2.0 * cfg.k * v * (1.0 - v) * (1.0 - cfg.r.dot(y)) / (d * d))
}

/// α(v) = γv − √((1 − v²)(1 − γ²)).
pub fn alpha(gamma: f64, v: f64) -> f64 {
    gamma * v - ((1.0 - v * v).max(0.0) * (1.0 - gamma * gamma)).sqrt()
}

/// σ(v) = γ√(1 − v²) + v√(1 − γ²).
pub fn sigma(gamma: f64, v: f64) -> f64 {
    gamma * (1.0 - v * v).max(0.0).sqrt() + v * (1.0 - gamma * gamma).sqrt()
}

/// min over y ∈ Y of V(x, y).
pub fn min_over_y(cfg: &PotentialConfig, x: &UnitVector) -> f64 {
    min_over_y_v(cfg.k, cfg.gamma, cfg.r.dot(x).clamp(-1.0, 1.0))
}

fn min_over_y_v(k: f64, gamma: f64, v: f64) -> f64 {
    let h = 1.0 - v;
    if v >= -gamma - BRANCH_TOL {
        h / (h + 2.0 * k)
    } else {
        h / (h + k * (1.0 - alpha(gamma, v)))
    }
}

/// max over y ∈ Y of V(x, y): 1 when x ∈ Y, otherwise attained on ∂Y at the
/// point nearest x.
pub fn max_over_y(cfg: &PotentialConfig, x: &UnitVector) -> f64 {
    max_over_y_v(cfg.k, cfg.gamma, cfg.r.dot(x).clamp(-1.0, 1.0))
}

fn max_over_y_v(k: f64, gamma: f64, v: f64) -> f64 {
    if v <= gamma {
        return 1.0;
    }
    let c = gamma * v + ((1.0 - v * v) * (1.0 - gamma * gamma)).sqrt();
    let h = 1.0 - v;
    h / (h + k * (1.0 - c))
}

/// The fixed point of ∂Y used wherever the minimiser is not unique:
/// γr + √(1 − γ²) t with t the normalised tangent projection of the first
/// canonical axis e_i having ‖Π(r)e_i‖ > 1/2.
pub fn tie_break_point(r: &UnitVector, gamma: f64) -> UnitVector {
    let dim = r.dim();
    let t = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            project(r, &e)
        })
        .find(|p| p.norm() > 0.5)
        .expect("some canonical axis is far from r");
    let t = &t / t.norm();
    UnitVector::new(r.as_vector() * gamma + t * (1.0 - gamma * gamma).sqrt()).expect("unit combination")
}

/// A minimiser of V(x, ·) over Y, chosen deterministically.
///
/// - x = r: every y ∈ Y gives V = 0; returns [`tie_break_point`].
/// - rᵀx ≥ −γ: −x.
/// - −1 < rᵀx < −γ: σ(v) Π(x)r/‖Π(x)r‖ + α(v) x, which lies on ∂Y.
/// - x = −r: every point of ∂Y is a minimiser; returns [`tie_break_point`].
pub fn argmin_over_y(cfg: &PotentialConfig, x: &UnitVector) -> UnitVector {
    let v = cfg.r.dot(x).clamp(-1.0, 1.0);
    let dir = project(x, &cfg.r);
    let n = dir.norm();
    if n < BRANCH_TOL {
        return tie_break_point(&cfg.r, cfg.gamma);
    }
    if v >= -cfg.gamma - BRANCH_TOL {
        return x.neg();
    }
    let y = dir * (sigma(cfg.gamma, v) / n) + x.as_vector() * alpha(cfg.gamma, v);
    UnitVector::new(y).expect("boundary point is unit up to rounding")
}

/// μ(x, y) = V(x, y) − min over Y of V(x, ·).
pub fn synergy_gap(cfg: &PotentialConfig, x: &UnitVector, y: &UnitVector) -> Result<f64, PotentialError> {
    Ok(potential(cfg, x, y)? - min_over_y(cfg, x))
}

/// max over y ∈ Y with μ(x, y) ≤ δ of V(x, y), in closed form. V(x, ·) is
/// continuous on the connected set Y, so it sweeps every value between its
/// extremes.
fn flow_set_sup_at(cfg: &PotentialConfig, x: &DVector<f64>) -> f64 {
    let v = cfg.r.dot(x).clamp(-1.0, 1.0);
    (min_over_y_v(cfg.k, cfg.gamma, v) + cfg.delta).min(max_over_y_v(cfg.k, cfg.gamma, v))
}

/// Estimate of V* = max of V over the flow set {μ ≤ δ}.
///
/// The inner maximisation over y is exact; the outer one runs over a
/// Fibonacci lattice (20000 points on S²; 10(n+1)² seeded points otherwise),
/// then 50 steps of projected gradient ascent from the best point.
pub fn flow_set_max(cfg: &PotentialConfig) -> f64 {
    let dim = cfg.dim();
    let n = if dim == 3 { 20_000 } else { 10 * dim * dim };
    let grid = sphere_grid(dim, n);
    let (mut best_x, mut best) = grid
        .iter()
        .map(|x| (x.as_vector().clone(), flow_set_sup_at(cfg, x)))
        .fold((DVector::zeros(dim), f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });

    let fd = 1e-7;
    let mut eta = 0.1;
    for _ in 0..50 {
        let basis = tangent_basis(&UnitVector::new(best_x.clone()).expect("unit"));
        let mut g = DVector::zeros(dim);
        for b in &basis {
            let plus = (&best_x + b * fd).normalize();
            let minus = (&best_x - b * fd).normalize();
            g += b * ((flow_set_sup_at(cfg, &plus) - flow_set_sup_at(cfg, &minus)) / (2.0 * fd));
        }
        let gn = g.norm();
        if gn < 1e-14 {
            break;
        }
        let cand = (&best_x + g * (eta / gn)).normalize();
        let val = flow_set_sup_at(cfg, &cand);
        if val > best {
            best = val;
            best_x = cand;
            eta *= 1.5;
        } else {
            eta *= 0.5;
        }
    }
    best
}

pub fn exp_constants(cfg: &PotentialConfig) -> ExpConstants {
    let (dmin, dmax) = denominator_bounds(cfg.k, cfg.gamma);
    let v_flow_max = flow_set_max(cfg);
    let num = 2.0 * cfg.k * (1.0 - v_flow_max) * (1.0 - cfg.gamma);
    ExpConstants {
        alpha_low: 1.0 / (2.0 * dmax),
        alpha_up: 1.0 / (2.0 * dmin),
        lambda: num / (dmax * dmax),
        lambda_unsquared: num / dmax,
        v_flow_max,
        v_flow_bound: cfg.delta + 2.0 / (2.0 + cfg.k * (1.0 + cfg.gamma)),
    }
}

/// Sampled checks of the structural properties of V:
///
/// - `range`: 0 ≤ V ≤ 1, with V = 0 at x = r and V = 1 at x = y;
/// - `critical_points`: ‖Π∇V‖ stays above an explicit floor whenever x is at
///   least 0.1 rad from both r and y;
/// - `denominator_bounds`: D within [`denominator_bounds`];
/// - `sandwich`: α̲‖x − r‖² ≤ V ≤ ᾱ‖x − r‖²;
/// - `mu_continuity`: a Lipschitz constant fitted on pairs 1e-3 apart holds on
///   fresh pairs 1e-5 apart.
pub fn verify_potential_properties(cfg: &PotentialConfig, sample_count: usize, seed: u64) -> Result<Report, PotentialError> {
    if sample_count < 1000 {
        return Err(PotentialError::TooFewSamples(sample_count));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cfg.dim();
    let (dmin, dmax) = denominator_bounds(cfg.k, cfg.gamma);
    let (a_lo, a_up) = (1.0 / (2.0 * dmax), 1.0 / (2.0 * dmin));

    // Explicit floor for ‖Π∇V‖ at geodesic distance ≥ 0.1 from {r, y}. With
    // chord c: V ≥ α̲c², 1 − V = k(1 − yᵀx)/D ≥ kc²/(2D̄), 1 − rᵀy ≥ 1 − γ.
    let c2 = (2.0 * (0.05f64).sin()).powi(2);
    let (lo, hi) = (a_lo * c2, cfg.k * c2 / (2.0 * dmax));
    let vv = (lo * (1.0 - lo)).min(hi * (1.0 - hi));
    let grad_floor = (2.0 * cfg.k * vv * (1.0 - cfg.gamma) / (dmax * dmax)).sqrt();

    let mut range_worst = 0.0f64;
    let mut grad_min = f64::INFINITY;
    let mut denom_worst = 0.0f64;
    let mut sandwich_worst = 0.0f64;
    let mut sandwich_bad = 0usize;
    let mut range_bad = 0usize;
    let mut denom_bad = 0usize;

    for _ in 0..sample_count {
        let x = uniform_sphere(&mut rng, dim);
        let y = uniform_in_cap(&mut rng, &cfg.r, cfg.gamma);
        let d = denominator(cfg, &x, &y);
        let h = height(&cfg.r, &x);
        let v = h / d;
        let out = (-v).max(v - 1.0);
        range_worst = range_worst.max(out);
        if out > 0.0 {
            range_bad += 1;
        }
        let dv = (dmin - d).max(d - dmax);
        denom_worst = denom_worst.max(dv);
        if dv > 1e-12 {
            denom_bad += 1;
        }
        let e2 = 2.0 * h;
        let sv = (a_lo * e2 - v).max(v - a_up * e2);
        sandwich_worst = sandwich_worst.max(sv);
        if sv > 1e-14 {
            sandwich_bad += 1;
        }
        if geodesic_distance(&x, &cfg.r) > 0.1 && geodesic_distance(&x, &y) > 0.1 {
            let g = 2.0 * cfg.k * v * (1.0 - v) * (1.0 - cfg.r.dot(&y)) / (d * d);
            grad_min = grad_min.min(g.sqrt());
        }
    }
    let y0 = uniform_in_cap(&mut rng, &cfg.r, cfg.gamma);
    let endpoints_ok = potential(cfg, &cfg.r, &y0)? == 0.0 && (potential(cfg, &y0, &y0)? - 1.0).abs() < 1e-15;

    let mut report = Report::default();
    report.push(Check::new(
        "range",
        range_bad == 0 && endpoints_ok,
        range_worst,
        0.0,
        format!("{range_bad} of {sample_count} samples outside [0, 1]; endpoint cases ok: {endpoints_ok}"),
    ));
    report.push(Check::new(
        "critical_points",
        grad_min >= grad_floor,
        grad_min,
        grad_floor,
        "minimum tangent gradient norm at distance > 0.1 from {r, y}".to_string(),
    ));
    report.push(Check::new(
        "denominator_bounds",
        denom_bad == 0,
        denom_worst,
        0.0,
        format!("{denom_bad} samples outside [{dmin}, {dmax}]"),
    ));
    report.push(Check::new(
        "sandwich",
        sandwich_bad == 0,
        sandwich_worst,
        0.0,
        format!("{sandwich_bad} samples violate {a_lo}‖x−r‖² ≤ V ≤ {a_up}‖x−r‖²"),
    ));
    report.push(mu_continuity(cfg, (sample_count / 10).max(1000), &mut rng));
    Ok(report)
}

fn mu_continuity(cfg: &PotentialConfig, pairs: usize, rng: &mut ChaCha8Rng) -> Check {
    let dim = cfg.dim();
    let pair = |sep: f64, rng: &mut ChaCha8Rng| {
        let x1 = uniform_sphere(rng, dim);
        let y = uniform_in_cap(rng, &cfg.r, cfg.gamma);
        let t = project(&x1, uniform_sphere(rng, dim).as_vector());
        let tn = t.norm().max(1e-300);
        let x2 = UnitVector::new(x1.as_vector() + t * (sep / tn)).expect("perturbed point");
        let dmu = (synergy_gap(cfg, &x1, &y).unwrap() - synergy_gap(cfg, &x2, &y).unwrap()).abs();
        (dmu, (x1.as_vector() - x2.as_vector()).norm())
    };
    let mut ratio = 0.0f64;
    for _ in 0..pairs {
        let (dmu, dx) = pair(1e-3, rng);
        ratio = ratio.max(dmu / dx);
    }
    let lip = 2.0 * ratio;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let (dmu, dx) = pair(1e-5, rng);
        worst = worst.max(dmu - lip * dx);
    }
    Check::new(
        "mu_continuity",
        worst <= 1e-9,
        worst,
        1e-9,
        format!("fitted L = {lip:.6}; max |Δμ| − L‖Δx‖ over {pairs} validation pairs"),
    )
}
