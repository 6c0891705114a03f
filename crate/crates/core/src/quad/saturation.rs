//! Radial C¹ saturation used by the position loop.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Identity on the ball of radius `b`; outside it the norm is compressed
/// smoothly towards `b_max`:
///
/// ```text
/// s(ρ) = b + (b_max − b) tanh((ρ − b)/(b_max − b))
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatConfig {
    /// Radius of the linear zone (m/s²).
    pub b: f64,
    /// Asymptotic norm (m/s²).
    pub b_max: f64,
}

impl Default for SatConfig {
    fn default() -> Self {
        Self { b: 4.0, b_max: 6.0 }
    }
}

impl SatConfig {
    /// Checks 0 < b < b_max < ‖g‖ − M₂, returning a description of the first
    /// violation.
    pub fn validate(&self, gravity_norm: f64, accel_bound: f64) -> Result<(), String> {
        if !(self.b > 0.0) {
            return Err(format!("b must be positive, got {}", self.b));
        }
        if !(self.b_max > self.b) {
            return Err(format!("b_max = {} must exceed b = {}", self.b_max, self.b));
        }
        let lim = gravity_norm - accel_bound;
        if !(self.b_max < lim) {
            return Err(format!("b_max = {} must be < ‖g‖ − M2 = {lim}", self.b_max));
        }
        Ok(())
    }

    fn radial(&self, rho: f64) -> (f64, f64) {
        let w = self.b_max - self.b;
        let th = ((rho - self.b) / w).tanh();
        (self.b + w * th, 1.0 - th * th)
    }
}

pub fn saturation(sat: &SatConfig, u: &Vector3<f64>) -> Vector3<f64> {
    let rho = u.norm();
    if rho <= sat.b {
        return *u;
    }
    u * (sat.radial(rho).0 / rho)
}

/// Exact derivative of [`saturation`]:
/// (s/ρ)(I − ûûᵀ) + s′(ρ) ûûᵀ outside the ball, I inside.
pub fn saturation_jacobian(sat: &SatConfig, u: &Vector3<f64>) -> Matrix3<f64> {
    let rho = u.norm();
    if rho <= sat.b {
        return Matrix3::identity();
    }
    let (s, ds) = sat.radial(rho);
    let uh = u / rho;
    let radial = uh * uh.transpose();
    (Matrix3::identity() - radial) * (s / rho) + radial * ds
}
