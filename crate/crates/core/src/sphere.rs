//! Geometry of Sⁿ and SO(3).

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm tolerance enforced by [`UnitVector`] constructors.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("cannot normalise a vector with norm {0:e}")]
    ZeroVector(f64),
    #[error("vector has non-finite components")]
    NonFinite,
    #[error("geodesic direction undefined: ‖Π(x0)r‖ = {0:e} (x0 is ±r)")]
    DegenerateGeodesic(f64),
    #[error("path length needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not a rotation: orthogonality residual {orth:e}, det {det}")]
    NotARotation { orth: f64, det: f64 },
}

/// A point on Sⁿ, stored as a unit-norm vector in ℝⁿ⁺¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Normalises `v`. Fails on zero or non-finite input.
    pub fn new(v: DVector<f64>) -> Result<Self, GeomError> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = v.norm();
        if n < 1e-300 {
            return Err(GeomError::ZeroVector(n));
        }
        Ok(Self(v / n))
    }

    /// Wraps `v` unchanged if its norm is within [`UNIT_TOL`] of one, so
    /// stored unit vectors reload bit-for-bit.
    pub fn from_unit(v: DVector<f64>) -> Result<Self, GeomError> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Self::new(v);
        }
        Ok(Self(v))
    }

    pub fn from_slice(c: &[f64]) -> Result<Self, GeomError> {
        Self::new(DVector::from_column_slice(c))
    }

    /// The i-th canonical basis vector of ℝ^dim.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self(v)
    }

    pub fn from_vector3(v: &Vector3<f64>) -> Result<Self, GeomError> {
        Self::from_slice(v.as_slice())
    }

    pub fn to_vector3(&self) -> Vector3<f64> {
        debug_assert_eq!(self.0.len(), 3);
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    /// Ambient dimension n+1.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        Self(-&self.0)
    }
}

impl Deref for UnitVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = GeomError;

    fn try_from(v: Vec<f64>) -> Result<Self, GeomError> {
        Self::new(DVector::from_vec(v))
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Vec<f64> {
        u.0.as_slice().to_vec()
    }
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `R^T R = I` and `det R = 1` to 1e-10.
    pub fn new(mat: Matrix3<f64>) -> Result<Self, GeomError> {
        let orth = (mat.transpose() * mat - Matrix3::identity()).norm();
        let det = mat.determinant();
        if orth > 1e-10 || (det - 1.0).abs() > 1e-10 || !orth.is_finite() {
            return Err(GeomError::NotARotation { orth, det });
        }
        Ok(Self(mat))
    }

    /// Rotation taking unit vector `from` onto unit vector `to` along the
    /// shortest arc. Antiparallel inputs rotate by π about an axis
    /// orthogonal to `from`.
    pub fn between(from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        let axis = from.cross(to);
        let s = axis.norm();
        let c = from.dot(to);
        if s < 1e-12 {
            if c > 0.0 {
                return Self::identity();
            }
            let helper = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let perp = from.cross(&helper).normalize();
            return Self(rotation_exp(&(perp * PI)));
        }
        Self(rotation_exp(&(axis / s * s.atan2(c))))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Frobenius norm of `R^T R − I`.
    pub fn orthogonality_residual(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: UnitVector,
    pub vec: DVector<f64>,
}

/// Π(x)w = (I − x xᵀ) w.
pub fn project_tangent(x: &UnitVector, w: &DVector<f64>) -> TangentVector {
    TangentVector { base: x.clone(), vec: project(x, w) }
}

/// The projection as a bare vector; hot loops use this to skip cloning the base.
pub fn project(x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    w - x * x.dot(w)
}

/// S(v) with S(v)u = v × u.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// exp(S(phi)) by Rodrigues' formula.
pub fn rotation_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let s = skew(phi);
    let (a, b) = if theta < 1e-4 {
        // Taylor expansions of sinθ/θ and (1 − cosθ)/θ².
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + s * a + s * s * b
}

/// One step of Ṙ = R S(ω) with ω held constant: R · exp(S(ω h)).
pub fn integrate_rotation_step(r: &Rotation, omega: &Vector3<f64>, h: f64) -> Rotation {
    Rotation(r.0 * rotation_exp(&(omega * h)))
}

/// x0 cos t + (Π(x0)r / ‖Π(x0)r‖) sin t.
pub fn geodesic_point(x0: &UnitVector, r: &UnitVector, t: f64) -> Result<UnitVector, GeomError> {
    if x0.dim() != r.dim() {
        return Err(GeomError::DimensionMismatch(x0.dim(), r.dim()));
    }
    let dir = project(x0, r);
    let n = dir.norm();
    if n < 1e-12 {
        return Err(GeomError::DegenerateGeodesic(n));
    }
    let p = x0.as_vector() * t.cos() + dir * (t.sin() / n);
    // Renormalise away the rounding in the combination.
    UnitVector::new(p)
}

/// Great-circle distance in [0, π].
///
/// Evaluated as `2·atan2(‖x − r‖, ‖x + r‖)`, which equals `arccos(xᵀr)` on the
/// sphere but keeps full precision for nearly (anti)parallel inputs where the
/// arccos of a clamped dot product loses half the significant digits.
pub fn geodesic_distance(x: &UnitVector, r: &UnitVector) -> f64 {
    let diff = (x.as_vector() - r.as_vector()).norm();
    let sum = (x.as_vector() + r.as_vector()).norm();
    2.0 * diff.atan2(sum)
}

/// Sum of great-circle distances between consecutive samples.
///
/// Each segment contributes its exact arc length, so the only discretisation
/// error is from the path bending between samples.
pub fn path_length(samples: &[UnitVector]) -> Result<f64, GeomError> {
    if samples.len() < 2 {
        return Err(GeomError::TooFewSamples(samples.len()));
    }
    Ok(samples.windows(2).map(|w| geodesic_distance(&w[0], &w[1])).sum())
}
