//! Reference position trajectories with analytic derivatives.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// p_d and its first three derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub jerk: Vector3<f64>,
}

/// A three-times differentiable reference t ↦ p_d(t) with bounded
/// acceleration (M₂) and jerk (M₃).
pub trait Reference: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, t: f64) -> RefSample;
    /// sup ‖p̈_d‖.
    fn accel_bound(&self) -> f64;
    /// sup ‖p_d⁽³⁾‖.
    fn jerk_bound(&self) -> f64;
}

/// Unit-radius horizontal circle p_d(t) = (cos 2πft, sin 2πft, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleReference {
    /// Hz.
    pub freq: f64,
}

impl CircleReference {
    pub fn new(freq: f64) -> Self {
        Self { freq }
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.freq
    }
}

impl Reference for CircleReference {
    fn name(&self) -> &'static str {
        "circle"
    }

    fn eval(&self, t: f64) -> RefSample {
        let w = self.omega();
        let (s, c) = (w * t).sin_cos();
        RefSample {
            p: Vector3::new(c, s, 0.0),
            v: Vector3::new(-s, c, 0.0) * w,
            a: Vector3::new(-c, -s, 0.0) * (w * w),
            jerk: Vector3::new(s, -c, 0.0) * (w * w * w),
        }
    }

    fn accel_bound(&self) -> f64 {
        self.omega().powi(2)
    }

    fn jerk_bound(&self) -> f64 {
        self.omega().powi(3)
    }
}

/// Constant position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoverReference {
    pub position: Vector3<f64>,
}

impl Reference for HoverReference {
    fn name(&self) -> &'static str {
        "hover"
    }

    fn eval(&self, _t: f64) -> RefSample {
        RefSample { p: self.position, v: Vector3::zeros(), a: Vector3::zeros(), jerk: Vector3::zeros() }
    }

    fn accel_bound(&self) -> f64 {
        0.0
    }

    fn jerk_bound(&self) -> f64 {
        0.0
    }
}

/// Names accepted by [`reference_by_name`].
pub const REFERENCE_NAMES: [&str; 2] = ["circle", "hover"];

/// Builds a registered reference. `freq` is used by the circle; the hover
/// reference sits at the origin.
pub fn reference_by_name(name: &str, freq: f64) -> Option<Box<dyn Reference>> {
    match name {
        "circle" => Some(Box::new(CircleReference::new(freq))),
        "hover" => Some(Box::new(HoverReference { position: Vector3::zeros() })),
        _ => None,
    }
}
