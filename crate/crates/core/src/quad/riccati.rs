//! Continuous-time algebraic Riccati equation
//! AᵀP + PA − PBR⁻¹BᵀP + Q = 0 by Kleinman–Newton iteration.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{is_hurwitz, lyapunov, symmetrize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("no stabilising initial gain found")]
    NotStabilizable,
    #[error("Kleinman iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix dimensions are inconsistent: {0}")]
    Shape(String),
    #[error("R is singular")]
    SingularR,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// K = −R⁻¹BᵀP, so that u = Kx.
    pub k: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual: f64,
}

pub const CARE_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;

pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r_inv: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// Solves the CARE starting from a gain found by Bass's method (or K₀ = 0
/// when A is already Hurwitz).
pub fn care_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution, RiccatiError> {
    check_shapes(a, b, q, r)?;
    let k0 = if is_hurwitz(a) { DMatrix::zeros(b.ncols(), a.nrows()) } else { bass_gain(a, b)? };
    care_solve_from(a, b, q, r, &k0)
}

/// Solves the CARE from a caller-supplied stabilising gain `k0` (u = K₀x).
pub fn care_solve_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: &DMatrix<f64>,
) -> Result<CareSolution, RiccatiError> {
    check_shapes(a, b, q, r)?;
    if !is_hurwitz(&(a + b * k0)) {
        return Err(RiccatiError::NotStabilizable);
    }
    let r_inv = r.clone().try_inverse().ok_or(RiccatiError::SingularR)?;
    let mut k = k0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let acl = a + b * &k;
        let rhs = q + k.transpose() * r * &k;
        let p = lyapunov(&acl, &rhs).ok_or(RiccatiError::NotStabilizable)?;
        k = -(&r_inv * b.transpose() * &p);
        residual = care_residual(a, b, q, &r_inv, &p);
        if residual < CARE_TOL {
            // one more Newton step squares the error; keep it unless rounding made it worse
            let acl = a + b * &k;
            let rhs = q + k.transpose() * r * &k;
            if let Some(p2) = lyapunov(&acl, &rhs) {
                let res2 = care_residual(a, b, q, &r_inv, &p2);
                if res2 <= residual {
                    let k2 = -(&r_inv * b.transpose() * &p2);
                    return Ok(CareSolution { p: symmetrize(&p2), k: k2, iterations: it + 1, residual: res2 });
                }
            }
            return Ok(CareSolution { p: symmetrize(&p), k, iterations: it, residual });
        }
    }
    Err(RiccatiError::NoConvergence { iterations: MAX_ITER, residual })
}

/// Bass's stabilising gain: with A_β = A + βI (β above the spectral radius),
/// solve A_β Z + Z A_βᵀ = 2BBᵀ and take K = −BᵀZ⁻¹.
fn bass_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, RiccatiError> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let a_beta = a + DMatrix::identity(n, n) * beta;
    // lyapunov solves XᵀZ + ZX = −Q; take X = −A_βᵀ.
    let z = lyapunov(&(-a_beta.transpose()), &(b * b.transpose() * 2.0)).ok_or(RiccatiError::NotStabilizable)?;
    let z_inv = z.try_inverse().ok_or(RiccatiError::NotStabilizable)?;
    let k = -(b.transpose() * z_inv);
    if !is_hurwitz(&(a + b * &k)) {
        return Err(RiccatiError::NotStabilizable);
    }
    Ok(k)
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(), RiccatiError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(RiccatiError::Shape(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// The double integrator ẍ = u in ℝᵈ: A = [[0, I], [0, 0]], B = [[0], [I]].
pub fn double_integrator(d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    let mut b = DMatrix::zeros(2 * d, d);
    for i in 0..d {
        a[(i, d + i)] = 1.0;
        b[(d + i, i)] = 1.0;
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_test_case() {
        let a = -DMatrix::<f64>::identity(6, 6);
        let b = DMatrix::<f64>::identity(6, 6);
        let eye = DMatrix::<f64>::identity(6, 6);
        let sol = care_solve(&a, &b, &eye, &eye).unwrap();
        // Scalar P² + 2P − 1 = 0.
        assert_relative_eq!(sol.p, eye * (2f64.sqrt() - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn double_integrator_closed_form() {
        let (a, b) = double_integrator(3);
        let sol = care_solve(&a, &b, &DMatrix::identity(6, 6), &DMatrix::identity(3, 3)).unwrap();
        let s3 = 3f64.sqrt();
        let mut want = DMatrix::zeros(6, 6);
        let mut kwant = DMatrix::zeros(3, 6);
        for i in 0..3 {
            want[(i, i)] = s3;
            want[(i + 3, i + 3)] = s3;
            want[(i, i + 3)] = 1.0;
            want[(i + 3, i)] = 1.0;
            kwant[(i, i)] = -1.0;
            kwant[(i, i + 3)] = -s3;
        }
        assert!(care_residual(&a, &b, &DMatrix::identity(6, 6), &DMatrix::identity(3, 3), &want) < 1e-10);
        assert_relative_eq!(sol.p, want, epsilon = 1e-10);
        assert_relative_eq!(sol.k, kwant, epsilon = 1e-10);
        assert!(sol.residual < 1e-10);
        assert!((sol.p.clone() - sol.p.transpose()).norm() < 1e-12);
    }

    #[test]
    fn start_independence() {
        let (a, b) = double_integrator(3);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 10.0, 100.0, 100.0, 100.0, 1.0]));
        let r = DMatrix::<f64>::identity(3, 3) * 10.0;
        let s1 = care_solve(&a, &b, &q, &r).unwrap();
        let mut k0 = DMatrix::zeros(3, 6);
        for i in 0..3 {
            k0[(i, i)] = -1.0;
            k0[(i, i + 3)] = -2.0;
        }
        let s2 = care_solve_from(&a, &b, &q, &r, &k0).unwrap();
        assert!((s1.p - s2.p).norm() < 1e-9);
    }

    #[test]
    fn errors() {
        let (a, b) = double_integrator(1);
        let eye2 = DMatrix::<f64>::identity(2, 2);
        let eye1 = DMatrix::<f64>::identity(1, 1);
        assert!(matches!(care_solve(&a, &b, &eye2, &eye2), Err(RiccatiError::Shape(_))));
        let zero_b = DMatrix::zeros(2, 1);
        assert_eq!(care_solve(&a, &zero_b, &eye2, &eye1), Err(RiccatiError::NotStabilizable));
        assert_eq!(care_solve_from(&a, &b, &eye2, &eye1, &DMatrix::zeros(1, 2)), Err(RiccatiError::NotStabilizable));
    }
}
