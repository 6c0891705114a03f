//! JSON scenario configuration.
//!
//! Every section has defaults, so `{}` is a valid config describing the
//! reference setup (k = 1, γ = −0.5, δ = 0.1, r = (0, 0, −1), circle at
//! 0.2 Hz). Validation errors name the offending field by its path.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};
use synergy_core::potential::PotentialError;
use synergy_core::quad::tracking::{DEFAULT_FREQ, DEFAULT_K1};
use synergy_core::quad::{reference_by_name, GainSpec, QuadFullState, QuadParams, Reference, SatConfig};
use synergy_core::quad::reference::REFERENCE_NAMES;
use synergy_core::verify::VerifyOptions;
use synergy_core::{PotentialConfig, Rotation, SolverConfig, UnitVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional; when present it must agree with the mode given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub potential: PotentialSection,
    pub solver: SolverConfig,
    pub sphere: SphereSection,
    pub quad: QuadSection,
    pub verify: VerifyOptions,
    pub geodesic: GeodesicSection,
    pub output: OutputSection,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub r: Vec<f64>,
    pub k: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { r: vec![0.0, 0.0, -1.0], k: 1.0, gamma: -0.5, delta: 0.1 }
    }
}

/// Initial condition of `sphere-sim`; missing entries are drawn from the seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadSection {
    pub gravity: [f64; 3],
    pub r_body: [f64; 3],
    /// One of the registered reference names ("circle", "hover").
    pub reference: String,
    pub freq: f64,
    pub sat: SatConfig,
    pub k1: f64,
    pub kp: f64,
    pub kbar1: f64,
    pub h_diag: [f64; 6],
    pub q_hat0_diag: [f64; 6],
    pub r_hat_diag: [f64; 3],
    pub initial: QuadInitial,
}

impl Default for QuadSection {
    fn default() -> Self {
        let fx = GainSpec::experiment_fixture(SatConfig::default());
        let p = QuadParams::default();
        Self {
            gravity: p.gravity.into(),
            r_body: p.r_body.into(),
            reference: "circle".into(),
            freq: DEFAULT_FREQ,
            sat: SatConfig::default(),
            k1: DEFAULT_K1,
            kp: fx.kp,
            kbar1: fx.kbar1,
            h_diag: diag6(&fx.h),
            q_hat0_diag: diag6(&fx.q_hat0),
            r_hat_diag: [fx.r_hat[(0, 0)], fx.r_hat[(1, 1)], fx.r_hat[(2, 2)]],
            initial: QuadInitial::UpsideDown,
        }
    }
}

fn diag6(m: &Matrix6<f64>) -> [f64; 6] {
    std::array::from_fn(|i| m[(i, i)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadInitial {
    /// p = p_d(0), v = ṗ_d(0), R = diag(1, −1, −1), y = (0, 0, 1).
    UpsideDown,
    State {
        p: [f64; 3],
        v: [f64; 3],
        /// Row-major rotation matrix.
        rot: [[f64; 3]; 3],
        y: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicSection {
    /// Number of random starts in the jump set.
    pub starts: usize,
    pub tolerance: f64,
    pub max_time: f64,
}

impl Default for GeodesicSection {
    fn default() -> Self {
        Self { starts: 50, tolerance: 1e-3, max_time: 40.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Inferred from the file extension when absent; CSV on stdout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Reads and parses a config file. Parse errors carry the JSON path.
pub fn load(path: &Path) -> Result<ScenarioConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e))?;
    parse(&text).map_err(LoadError::Config)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Config(ConfigError),
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(path, e.into_inner().to_string())
    })
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be finite, got {v}")))
    }
}

fn unit_vector(path: &str, v: &[f64]) -> Result<UnitVector, ConfigError> {
    UnitVector::from_slice(v).map_err(|e| ConfigError::new(path, e.to_string()))
}

impl ScenarioConfig {
    /// The potential with its invariants checked.
    pub fn potential_config(&self) -> Result<PotentialConfig, ConfigError> {
        let p = &self.potential;
        for (name, v) in [("k", p.k), ("gamma", p.gamma), ("delta", p.delta)] {
            finite(&format!("potential.{name}"), v)?;
        }
        if p.r.len() < 2 {
            return Err(ConfigError::new("potential.r", format!("needs at least 2 components, got {}", p.r.len())));
        }
        let r = unit_vector("potential.r", &p.r)?;
        PotentialConfig::new(r, p.k, p.gamma, p.delta).map_err(|e| match e {
            PotentialError::InvalidGain(_) => ConfigError::new("potential.k", e.to_string()),
            PotentialError::InvalidGamma(_) => ConfigError::new("potential.gamma", e.to_string()),
            PotentialError::InvalidDelta { delta, bound } => ConfigError::new(
                "potential.delta",
                format!("must satisfy 0 < delta < (1+gamma)/(2/k+1+gamma) = {bound}, got {delta}"),
            ),
            other => ConfigError::new("potential", other.to_string()),
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        self.solver.validate().map_err(|e| ConfigError::new("solver", e.to_string()))?;
        Ok(self.solver)
    }

    pub fn sphere_initial(&self, cfg: &PotentialConfig) -> Result<(Option<UnitVector>, Option<UnitVector>), ConfigError> {
        let dim = cfg.dim();
        let get = |name: &str, v: &Option<Vec<f64>>| -> Result<Option<UnitVector>, ConfigError> {
            match v {
                None => Ok(None),
                Some(c) if c.len() != dim => {
                    Err(ConfigError::new(format!("sphere.{name}"), format!("expected {dim} components, got {}", c.len())))
                }
                Some(c) => unit_vector(&format!("sphere.{name}"), c).map(Some),
            }
        };
        let x0 = get("x0", &self.sphere.x0)?;
        let y0 = get("y0", &self.sphere.y0)?;
        if let Some(y) = &y0 {
            if !cfg.in_y(y) {
                return Err(ConfigError::new("sphere.y0", format!("r.y0 = {} exceeds gamma = {}", cfg.r.dot(y), cfg.gamma)));
            }
        }
        Ok((x0, y0))
    }

    pub fn quad_params(&self, pot: &PotentialConfig) -> Result<QuadParams, ConfigError> {
        let q = &self.quad;
        for (i, v) in q.gravity.iter().chain(q.r_body.iter()).enumerate() {
            finite(if i < 3 { "quad.gravity" } else { "quad.r_body" }, *v)?;
        }
        let r_body = unit_vector("quad.r_body", &q.r_body)?.to_vector3();
        if (Vector3::from(q.r_body) - r_body).norm() > 1e-12 {
            return Err(ConfigError::new("quad.r_body", "must have unit norm"));
        }
        if pot.dim() != 3 || (pot.r.to_vector3() - r_body).norm() > 1e-12 {
            return Err(ConfigError::new("quad.r_body", format!("must equal potential.r = {:?}", pot.r.as_slice())));
        }
        Ok(QuadParams { gravity: q.gravity.into(), r_body })
    }

    pub fn reference(&self) -> Result<Box<dyn Reference>, ConfigError> {
        let q = &self.quad;
        if !(q.freq >= 0.0 && q.freq.is_finite()) {
            return Err(ConfigError::new("quad.freq", format!("must be finite and non-negative, got {}", q.freq)));
        }
        reference_by_name(&q.reference, q.freq).ok_or_else(|| {
            ConfigError::new("quad.reference", format!("unknown reference '{}', expected one of {REFERENCE_NAMES:?}", q.reference))
        })
    }

    /// Gain-design inputs; also checks the saturation against gravity and the
    /// reference acceleration bound.
    pub fn gain_spec(&self, params: &QuadParams, reference: &dyn Reference) -> Result<GainSpec, ConfigError> {
        let q = &self.quad;
        q.sat.validate(params.gravity.norm(), reference.accel_bound()).map_err(|m| ConfigError::new("quad.sat", m))?;
        for (name, v) in [("kbar1", q.kbar1), ("kp", q.kp), ("k1", q.k1)] {
            if !(v.is_finite() && v >= 0.0) || (name != "k1" && v == 0.0) {
                return Err(ConfigError::new(format!("quad.{name}"), format!("must be positive, got {v}")));
            }
        }
        for (name, d) in [("h_diag", &q.h_diag[..]), ("q_hat0_diag", &q.q_hat0_diag[..]), ("r_hat_diag", &q.r_hat_diag[..])] {
            if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(ConfigError::new(format!("quad.{name}"), format!("entries must be positive, got {bad}")));
            }
        }
        Ok(GainSpec {
            h: Matrix6::from_diagonal(&q.h_diag.into()),
            r_hat: Matrix3::from_diagonal(&q.r_hat_diag.into()),
            q_hat0: Matrix6::from_diagonal(&q.q_hat0_diag.into()),
            sat: q.sat,
            kbar1: q.kbar1,
            kp: q.kp,
        })
    }

    pub fn quad_initial(&self, pot: &PotentialConfig, reference: &dyn Reference) -> Result<QuadFullState, ConfigError> {
        match &self.quad.initial {
            QuadInitial::UpsideDown => Ok(synergy_core::quad::tracking::upside_down_initial(reference)),
            QuadInitial::State { p, v, rot, y } => {
                let m = Matrix3::from_fn(|i, j| rot[i][j]);
                let rot = Rotation::new(m).map_err(|e| ConfigError::new("quad.initial.rot", e.to_string()))?;
                let y = unit_vector("quad.initial.y", y)?;
                if !pot.in_y(&y) {
                    return Err(ConfigError::new("quad.initial.y", format!("r.y = {} exceeds gamma = {}", pot.r.dot(&y), pot.gamma)));
                }
                Ok(QuadFullState { p: (*p).into(), v: (*v).into(), rot, y })
            }
        }
    }

    pub fn check_geodesic_section(&self) -> Result<(), ConfigError> {
        let g = &self.geodesic;
        if g.starts == 0 {
            return Err(ConfigError::new("geodesic.starts", "must be at least 1"));
        }
        if !(g.tolerance > 0.0) {
            return Err(ConfigError::new("geodesic.tolerance", format!("must be positive, got {}", g.tolerance)));
        }
        if !(g.max_time > 0.0 && g.max_time.is_finite()) {
            return Err(ConfigError::new("geodesic.max_time", format!("must be positive, got {}", g.max_time)));
        }
        Ok(())
    }

    pub fn check_verify_section(&self) -> Result<(), ConfigError> {
        let v = &self.verify;
        if v.samples < 1000 {
            return Err(ConfigError::new("verify.samples", format!("must be at least 1000, got {}", v.samples)));
        }
        if !(v.horizon > 0.0 && v.horizon.is_finite()) {
            return Err(ConfigError::new("verify.horizon", format!("must be positive, got {}", v.horizon)));
        }
        Ok(())
    }
}
