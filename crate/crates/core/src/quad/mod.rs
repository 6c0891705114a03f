//! Quadrotor trajectory tracking: reference trajectories, the saturated
//! position loop, gain synthesis and the hybrid thrust-direction loop.

pub mod gains;
pub mod reference;
pub mod riccati;
pub mod saturation;
pub mod tracking;

pub use gains::{synthesize_gains, GainError, GainSpec, PositionGains};
pub use reference::{reference_by_name, CircleReference, HoverReference, RefSample, Reference};
pub use saturation::SatConfig;
pub use tracking::{simulate_tracking, QuadFullState, QuadParams, TrackingError, TrackingLoop, TrackingMetrics};
