//! A fixed-step solver for hybrid systems ẋ ∈ F(x) on C, x⁺ ∈ G(x) on D.
//!
//! The flow set and jump set are described by one scalar margin: `C` is where
//! the margin is ≤ 0, `D` where it is ≥ 0. Flow has priority on the overlap
//! until the margin exceeds [`SolverConfig::margin_tol`]; the crossing time is
//! then located by bisection, re-integrating from the last accepted step.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("Zeno behaviour suspected: {jumps} jumps by t = {t}")]
    ZenoSuspected { jumps: usize, t: f64 },
    #[error("non-finite state at t = {t}, j = {j}")]
    NonFiniteState { t: f64, j: usize },
    #[error("no sign change of the jump margin on [{t_lo}, {t_hi}]: margins {m_lo}, {m_hi}")]
    NoBracket { t_lo: f64, t_hi: f64, m_lo: f64, m_hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Fixed integration step (s).
    pub step: f64,
    /// Width of the final bisection bracket around a jump time (s).
    pub event_tol: f64,
    pub max_time: f64,
    /// Zeno guard.
    pub max_jumps: usize,
    /// Flow continues while the jump margin is at most this value.
    pub margin_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { step: 1e-3, event_tol: 1e-6, max_time: 100.0, max_jumps: 1000, margin_tol: 1e-9 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), HybridError> {
        let bad = |m: &str| Err(HybridError::InvalidConfig(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.step) {
            return bad("event_tol must be positive and smaller than step");
        }
        if !(self.max_time >= 0.0 && self.max_time.is_finite()) {
            return bad("max_time must be finite and non-negative");
        }
        if self.max_jumps < 1 {
            return bad("max_jumps must be at least 1");
        }
        if !(self.margin_tol >= 0.0) {
            return bad("margin_tol must be non-negative");
        }
        Ok(())
    }
}

/// Data (C, F, D, G) of a hybrid system, as seen by [`solve`].
pub trait HybridSystem {
    type State: Clone;

    /// Advance the flow by `h` from time `t`.
    fn flow_step(&self, t: f64, x: &Self::State, h: f64) -> Self::State;
    /// ≤ 0 on the flow set, ≥ 0 on the jump set.
    fn jump_margin(&self, t: f64, x: &Self::State) -> f64;
    fn jump_map(&self, t: f64, x: &Self::State) -> Self::State;
    fn is_finite(&self, x: &Self::State) -> bool;
}

type Field = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type Margin = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A time-invariant hybrid system on ℝᵐ given by closures, integrated with
/// classical RK4.
pub struct HybridSystemDef {
    pub flow_field: Field,
    pub jump_margin: Margin,
    pub jump_map: Field,
    /// Applied after every RK4 step, e.g. renormalisation onto a sphere.
    pub post_step_projection: Option<Field>,
}

impl HybridSystemDef {
    pub fn new(
        flow_field: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jump_margin: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        jump_map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            flow_field: Box::new(flow_field),
            jump_margin: Box::new(jump_margin),
            jump_map: Box::new(jump_map),
            post_step_projection: None,
        }
    }

    pub fn with_projection(mut self, p: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.post_step_projection = Some(Box::new(p));
        self
    }
}

/// One classical Runge–Kutta step of ẋ = f(x).
pub fn rk4_step(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

impl HybridSystem for HybridSystemDef {
    type State = DVector<f64>;

    fn flow_step(&self, _t: f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
        let next = rk4_step(&self.flow_field, x, h);
        match &self.post_step_projection {
            Some(p) => p(&next),
            None => next,
        }
    }

    fn jump_margin(&self, _t: f64, x: &DVector<f64>) -> f64 {
        (self.jump_margin)(x)
    }

    fn jump_map(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.jump_map)(x)
    }

    fn is_finite(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|c| c.is_finite())
    }
}

/// Samples of one flow interval, all with the same jump count `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase<S> {
    pub j: usize,
    pub samples: Vec<(f64, S)>,
}

/// A solution on a hybrid time domain: consecutive phases j = 0, 1, 2, ...
/// Phase j + 1 starts at the time phase j ends (the jump instant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridArc<S> {
    pub phases: Vec<Phase<S>>,
}

impl<S> HybridArc<S> {
    pub fn jump_count(&self) -> usize {
        self.phases.len().saturating_sub(1)
    }

    /// Times at which jumps occurred, in order.
    pub fn jump_times(&self) -> Vec<f64> {
        self.phases.iter().skip(1).map(|p| p.samples[0].0).collect()
    }

    /// All samples as (t, j, state) in hybrid-time order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, usize, &S)> {
        self.phases.iter().flat_map(|p| p.samples.iter().map(move |(t, s)| (*t, p.j, s)))
    }

    pub fn len(&self) -> usize {
        self.phases.iter().map(|p| p.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self) -> Option<(f64, &S)> {
        self.phases.first().and_then(|p| p.samples.first()).map(|(t, s)| (*t, s))
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        self.phases.last().and_then(|p| p.samples.last()).map(|(t, s)| (*t, s))
    }

    /// (pre-jump, post-jump) state pairs with their jump time.
    pub fn jumps(&self) -> Vec<(f64, &S, &S)> {
        self.phases
            .windows(2)
            .map(|w| {
                let (t, pre) = w[0].samples.last().expect("nonempty phase");
                (*t, pre, &w[1].samples[0].1)
            })
            .collect()
    }

    /// Checks the hybrid-time-domain structure: times non-decreasing, j
    /// incrementing by one, phase boundaries sharing their time stamp.
    pub fn check_time_domain(&self) -> Result<(), String> {
        let mut prev_t = f64::NEG_INFINITY;
        for (i, p) in self.phases.iter().enumerate() {
            if p.j != i {
                return Err(format!("phase {i} has j = {}", p.j));
            }
            if p.samples.is_empty() {
                return Err(format!("phase {i} is empty"));
            }
            if i > 0 && p.samples[0].0 != prev_t {
                return Err(format!("phase {i} starts at {} but phase {} ends at {prev_t}", p.samples[0].0, i - 1));
            }
            for (t, _) in &p.samples {
                if *t < prev_t {
                    return Err(format!("time decreases to {t} after {prev_t} in phase {i}"));
                }
                prev_t = *t;
            }
        }
        Ok(())
    }
}

/// Locate the first time in (t_lo, t_hi] at which the jump margin becomes
/// non-negative, by bisection with re-integration from (t_lo, x_lo).
///
/// The bracket is narrowed to `tol` and further, while the margin at its right
/// end still exceeds `margin_tol`, down to the resolution of `t`.
pub fn event_locate<H: HybridSystem>(
    sys: &H,
    t_lo: f64,
    x_lo: &H::State,
    t_hi: f64,
    tol: f64,
    margin_tol: f64,
) -> Result<(f64, H::State), HybridError> {
    let m_lo = sys.jump_margin(t_lo, x_lo);
    let mut x_hi = sys.flow_step(t_lo, x_lo, t_hi - t_lo);
    let m_hi = sys.jump_margin(t_hi, &x_hi);
    if !(m_lo < 0.0 && m_hi >= 0.0 && t_lo < t_hi) {
        return Err(HybridError::NoBracket { t_lo, t_hi, m_lo, m_hi });
    }
    let (mut lo, mut hi) = (0.0, t_hi - t_lo);
    let mut m = m_hi;
    let resolution = 4.0 * f64::EPSILON * t_hi.abs().max(1.0);
    while (hi - lo > tol || m > margin_tol) && hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let xm = sys.flow_step(t_lo, x_lo, mid);
        let mm = sys.jump_margin(t_lo + mid, &xm);
        if mm >= 0.0 {
            hi = mid;
            x_hi = xm;
            m = mm;
        } else {
            lo = mid;
        }
    }
    Ok((t_lo + hi, x_hi))
}

/// Integrate a hybrid system from `x0` at hybrid time (0, 0).
///
/// A jump is taken first if `x0` lies in the jump set. Terminates at
/// `max_time` or after `max_jumps` jumps.
pub fn solve<H: HybridSystem>(sys: &H, x0: H::State, cfg: &SolverConfig) -> Result<HybridArc<H::State>, HybridError> {
    cfg.validate()?;
    let mut phases = Vec::new();
    let mut j = 0usize;
    let mut t = 0.0f64;
    if !sys.is_finite(&x0) {
        return Err(HybridError::NonFiniteState { t, j });
    }
    let mut x = x0;
    let mut samples = vec![(t, x.clone())];

    let mut jump = |t: f64, x_pre: &H::State, samples: &mut Vec<(f64, H::State)>, j: &mut usize| -> Result<H::State, HybridError> {
        let x_post = sys.jump_map(t, x_pre);
        if !sys.is_finite(&x_post) {
            return Err(HybridError::NonFiniteState { t, j: *j + 1 });
        }
        phases.push(Phase { j: *j, samples: std::mem::replace(samples, vec![(t, x_post.clone())]) });
        *j += 1;
        Ok(x_post)
    };

    let zeno = |j: usize, t: f64| -> Result<(), HybridError> {
        if t < 0.01 * cfg.max_time {
            Err(HybridError::ZenoSuspected { jumps: j, t })
        } else {
            Ok(())
        }
    };

    if sys.jump_margin(t, &x) >= 0.0 {
        x = jump(t, &x, &mut samples, &mut j)?;
    }

    let end = cfg.max_time;
    while t < end && j < cfg.max_jumps {
        let remaining = end - t;
        if remaining <= 1e-12 * cfg.step {
            break;
        }
        // The last step is shortened so the arc ends exactly at max_time.
        let (h, t_next) = if remaining <= cfg.step * (1.0 + 1e-9) { (remaining, end) } else { (cfg.step, t + cfg.step) };
        let x_next = sys.flow_step(t, &x, h);
        if !sys.is_finite(&x_next) {
            return Err(HybridError::NonFiniteState { t: t_next, j });
        }
        if sys.jump_margin(t_next, &x_next) <= cfg.margin_tol {
            t = t_next;
            x = x_next;
            samples.push((t, x.clone()));
            continue;
        }
        if sys.jump_margin(t, &x) >= 0.0 {
            // Already in the overlap C ∩ D at the last accepted step.
            x = jump(t, &x, &mut samples, &mut j)?;
            continue;
        }
        let (t_star, x_star) = event_locate(sys, t, &x, t_next, cfg.event_tol, cfg.margin_tol)?;
        samples.push((t_star, x_star.clone()));
        t = t_star;
        x = jump(t, &x_star, &mut samples, &mut j)?;
    }
    if j >= cfg.max_jumps {
        zeno(j, t)?;
    }
    phases.push(Phase { j, samples });
    Ok(HybridArc { phases })
}
