//! Position-loop gain synthesis with ellipsoid certificates.
//!
//! The loop z̃̇ = A z̃ + B w, w = Sat(K z̃) never saturates from
//! U ⊂ Ω_H(ℓ_H) when
//!
//! ```text
//! Ω_H(ℓ_H) ⊂ Ω_P(ℓ_P) ⊂ Ω_{KᵀK}(b²),   Ω_M(ℓ) = {z : zᵀMz ≤ ℓ}
//! ```
//!
//! and Ω_P(ℓ_P) is forward invariant. P comes from the Riccati equation with
//! weight εQ̂₀; shrinking ε shrinks P until both inclusions hold.

use nalgebra::{DMatrix, Matrix3, Matrix3x6, Matrix6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{max_eigenvalue, max_singular_value, min_eigenvalue, sqrtm_psd};
use crate::potential::{exp_constants, PotentialConfig};
use crate::quad::riccati::{care_solve, double_integrator, RiccatiError};
use crate::quad::saturation::SatConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("no epsilon in [1e-8, 1] satisfies both ellipsoid inclusions (b = {b})")]
    Infeasible { b: f64 },
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Design inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpec {
    /// Ω_H(1) bounds the set of initial position/velocity errors.
    pub h: Matrix6<f64>,
    pub r_hat: Matrix3<f64>,
    /// Unscaled state weight; the synthesised weight is ε Q̂₀.
    pub q_hat0: Matrix6<f64>,
    pub sat: SatConfig,
    pub kbar1: f64,
    pub kp: f64,
}

impl GainSpec {
    /// H = diag(500, 500, 500, 100, 100, 100), Q̂₀ = diag(10, 10, 100, 100,
    /// 100, 1), R̂ = 10 I, k̄₁ = 12, k_p = 1.
    pub fn experiment_fixture(sat: SatConfig) -> Self {
        Self {
            h: Matrix6::from_diagonal(&[500.0, 500.0, 500.0, 100.0, 100.0, 100.0].into()),
            r_hat: Matrix3::identity() * 10.0,
            q_hat0: Matrix6::from_diagonal(&[10.0, 10.0, 100.0, 100.0, 100.0, 1.0].into()),
            sat,
            kbar1: 12.0,
            kp: 1.0,
        }
    }
}

/// Numerical evidence that a gain set satisfies the design conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificates {
    /// λ_max((A+BK)ᵀP + P(A+BK) + Q̂ + KᵀR̂K); must be ≤ 1e-8.
    pub qr_max_eig: f64,
    /// λ_min(H/ℓ_H − P/ℓ_P); must be ≥ −1e-10.
    pub ph_min_eig: f64,
    /// σ_max(R̂⁻¹BᵀP^{1/2})².
    pub svmax_sq: f64,
    /// b²/ℓ_P.
    pub svmax_bound: f64,
    /// k_p k̄₁ λ₁ with λ₁ from the squared-denominator formula.
    pub bark1_product: f64,
    /// k_p k̄₁ λ₁ with the unsquared-denominator variant.
    pub bark1_product_unsquared: f64,
}

impl GainCertificates {
    pub fn qr_ok(&self) -> bool {
        self.qr_max_eig <= 1e-8
    }

    pub fn ph_ok(&self) -> bool {
        self.ph_min_eig >= -1e-10
    }

    pub fn svmax_ok(&self) -> bool {
        self.svmax_sq <= self.svmax_bound
    }

    pub fn svmax_slack(&self) -> f64 {
        self.svmax_bound - self.svmax_sq
    }

    /// The three containment/invariance certificates (the k_p k̄₁ λ₁ > 1
    /// condition is reported separately).
    pub fn all_ok(&self) -> bool {
        self.qr_ok() && self.ph_ok() && self.svmax_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionGains {
    /// w = Sat(K (p̃; ṽ)).
    pub k: Matrix3x6<f64>,
    pub p: Matrix6<f64>,
    pub q_hat: Matrix6<f64>,
    pub r_hat: Matrix3<f64>,
    pub h: Matrix6<f64>,
    pub ell_p: f64,
    pub ell_h: f64,
    pub epsilon: f64,
    pub sat: SatConfig,
    pub kbar1: f64,
    pub kp: f64,
    /// σ_max([0 I] P^{1/2}) = √λ_max(P₂₂), used by the adaptive attitude gain.
    pub p22_sigma: f64,
    pub certificates: GainCertificates,
}

fn to_d6(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}

fn is_spd(m: &Matrix6<f64>) -> bool {
    (m - m.transpose()).norm() <= 1e-12 * m.norm() && min_eigenvalue(&to_d6(m)) > 0.0
}

/// Evaluates the certificates of an arbitrary (K, P, Q̂) triple.
pub fn certify(
    k: &Matrix3x6<f64>,
    p: &Matrix6<f64>,
    q_hat: &Matrix6<f64>,
    r_hat: &Matrix3<f64>,
    h: &Matrix6<f64>,
    ell_p: f64,
    ell_h: f64,
    b: f64,
    lambdas: (f64, f64),
    kp_kbar1: f64,
) -> GainCertificates {
    let (a, bm) = double_integrator(3);
    let a = Matrix6::from_column_slice(a.as_slice());
    let bm = nalgebra::Matrix6x3::from_column_slice(bm.as_slice());
    let acl = a + bm * k;
    let qr = acl.transpose() * p + p * acl + q_hat + k.transpose() * r_hat * k;
    let ph = h / ell_h - p / ell_p;
    let r_inv = r_hat.try_inverse().expect("R̂ is positive definite");
    let m = r_inv * bm.transpose() * Matrix6::from_column_slice(sqrtm_psd(&to_d6(p)).as_slice());
    GainCertificates {
        qr_max_eig: max_eigenvalue(&to_d6(&qr)),
        ph_min_eig: min_eigenvalue(&to_d6(&ph)),
        svmax_sq: max_singular_value(&DMatrix::from_column_slice(3, 6, m.as_slice())).powi(2),
        svmax_bound: b * b / ell_p,
        bark1_product: kp_kbar1 * lambdas.0,
        bark1_product_unsquared: kp_kbar1 * lambdas.1,
    }
}

struct Candidate {
    k: Matrix3x6<f64>,
    p: Matrix6<f64>,
    q_hat: Matrix6<f64>,
}

fn candidate(spec: &GainSpec, eps: f64) -> Result<Candidate, RiccatiError> {
    let (a, b) = double_integrator(3);
    let q = to_d6(&spec.q_hat0) * eps;
    let r = DMatrix::from_column_slice(3, 3, spec.r_hat.as_slice());
    let sol = care_solve(&a, &b, &q, &r)?;
    Ok(Candidate {
        k: Matrix3x6::from_column_slice(sol.k.as_slice()),
        p: Matrix6::from_column_slice(sol.p.as_slice()),
        q_hat: spec.q_hat0 * eps,
    })
}

fn feasible(spec: &GainSpec, c: &Candidate, ell: f64) -> bool {
    let cert = certify(&c.k, &c.p, &c.q_hat, &spec.r_hat, &spec.h, ell, ell, spec.sat.b, (0.0, 0.0), 0.0);
    cert.ph_ok() && cert.svmax_ok()
}

/// Synthesises the position gains.
///
/// ℓ_H = ℓ_P = (1 + k̄₁)² (the potential attains its maximum 1). ε runs over a
/// 60-point log grid on [1e-8, 1]; the bracket between the largest feasible
/// and the next infeasible grid point is refined by 30 bisections in log ε,
/// and the largest feasible ε is kept.
pub fn synthesize_gains(spec: &GainSpec, cfg: &PotentialConfig) -> Result<PositionGains, GainError> {
    for (name, m) in [("H", &spec.h), ("Q̂₀", &spec.q_hat0)] {
        if !is_spd(m) {
            return Err(GainError::NotPositiveDefinite(name));
        }
    }
    let r6 = Matrix6::from_fn(|i, j| if i < 3 && j < 3 { spec.r_hat[(i, j)] } else if i == j { 1.0 } else { 0.0 });
    if !is_spd(&r6) {
        return Err(GainError::NotPositiveDefinite("R̂"));
    }
    if !(spec.kbar1 > 0.0 && spec.kp > 0.0) {
        return Err(GainError::InvalidParameter(format!("kbar1 = {} and kp = {} must be positive", spec.kbar1, spec.kp)));
    }
    let nu_bar = spec.kbar1;
    let ell = (1.0 + nu_bar).powi(2);

    let grid: Vec<f64> = (0..60).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 59.0)).collect();
    let mut best: Option<(f64, Candidate)> = None;
    let mut upper: Option<f64> = None;
    for (i, &eps) in grid.iter().enumerate().rev() {
        let c = candidate(spec, eps)?;
        if feasible(spec, &c, ell) {
            best = Some((eps, c));
            upper = grid.get(i + 1).copied();
            break;
        }
    }
    let (mut eps, mut cand) = best.ok_or(GainError::Infeasible { b: spec.sat.b })?;
    if let Some(hi_eps) = upper {
        let (mut lo, mut hi) = (eps.ln(), hi_eps.ln());
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            let c = candidate(spec, mid.exp())?;
            if feasible(spec, &c, ell) {
                lo = mid;
                eps = mid.exp();
                cand = c;
            } else {
                hi = mid;
            }
        }
    }

    let consts = exp_constants(cfg);
    let certificates = certify(
        &cand.k,
        &cand.p,
        &cand.q_hat,
        &spec.r_hat,
        &spec.h,
        ell,
        ell,
        spec.sat.b,
        (consts.lambda, consts.lambda_unsquared),
        spec.kp * spec.kbar1,
    );
    if certificates.bark1_product <= 1.0 {
        log::warn!(
            "k_p k̄₁ λ₁ = {:.4} ≤ 1 with λ₁ = {:.4} (unsquared variant gives {:.4})",
            certificates.bark1_product,
            consts.lambda,
            certificates.bark1_product_unsquared
        );
    }
    let p22 = cand.p.fixed_view::<3, 3>(3, 3).into_owned();
    let p22_sigma = max_eigenvalue(&DMatrix::from_column_slice(3, 3, p22.as_slice())).sqrt();
    Ok(PositionGains {
        k: cand.k,
        p: cand.p,
        q_hat: cand.q_hat,
        r_hat: spec.r_hat,
        h: spec.h,
        ell_p: ell,
        ell_h: ell,
        epsilon: eps,
        sat: spec.sat,
        kbar1: spec.kbar1,
        kp: spec.kp,
        p22_sigma,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::UnitVector;

    fn cfg() -> PotentialConfig {
        PotentialConfig::new(UnitVector::from_slice(&[0.0, 0.0, -1.0]).unwrap(), 1.0, -0.5, 0.1).unwrap()
    }

    #[test]
    fn fixture_synthesis() {
        let g = synthesize_gains(&GainSpec::experiment_fixture(SatConfig::default()), &cfg()).unwrap();
        assert_eq!(g.ell_p, 169.0);
        assert_eq!(g.ell_h, 169.0);
        assert!(g.certificates.all_ok(), "{:?}", g.certificates);
        assert!(g.epsilon > 0.0 && g.epsilon <= 1.0);
        // the gain is a stabilising PD law: negative position and velocity blocks
        for i in 0..3 {
            assert!(g.k[(i, i)] < 0.0 && g.k[(i, i + 3)] < 0.0);
        }
    }

    #[test]
    fn infeasible_for_tiny_b() {
        let sat = SatConfig { b: 0.5, b_max: 6.0 };
        let err = synthesize_gains(&GainSpec::experiment_fixture(sat), &cfg()).unwrap_err();
        assert_eq!(err, GainError::Infeasible { b: 0.5 });
    }

    #[test]
    fn rejects_indefinite_h() {
        let mut spec = GainSpec::experiment_fixture(SatConfig::default());
        spec.h[(0, 0)] = -1.0;
        assert_eq!(synthesize_gains(&spec, &cfg()).unwrap_err(), GainError::NotPositiveDefinite("H"));
    }
}
