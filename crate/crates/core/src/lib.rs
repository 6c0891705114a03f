//! Hybrid synergistic feedback on the n-sphere.
//!
//! The crate is organised bottom-up:
//!
//! - [`sphere`]: geometry of Sⁿ and SO(3) (tangent projection, geodesics,
//!   rotation exponential).
//! - [`potential`]: the centrally synergistic potential family, its closed-form
//!   minimisation over the logic set and the exponential-stability constants.
//! - [`hybrid`]: a generic hybrid-system solver (flows, located jumps, hybrid
//!   time domains).
//! - [`stabilizer`]: the hysteresis-switched gradient controller on Sⁿ and its
//!   closed loop.
//! - [`quad`]: quadrotor trajectory tracking with a saturated LQR position loop
//!   and hybrid thrust-direction tracking.
//! - [`verify`]: property suites combining the checks above.
//! - [`sampling`]: deterministic grids and seeded random samples on the sphere.

pub mod hybrid;
pub mod linalg;
pub mod potential;
pub mod report;
pub mod quad;
pub mod sampling;
pub mod sphere;
pub mod stabilizer;
pub mod verify;

pub use hybrid::{HybridArc, HybridError, HybridSystem, Phase, SolverConfig};
pub use potential::{ExpConstants, PotentialConfig, PotentialError};
pub use sphere::{GeomError, Rotation, TangentVector, UnitVector};
pub use stabilizer::ClosedLoopState;
