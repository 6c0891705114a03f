//! Run modes, selected by name through a [`ModeRegistry`].

use nalgebra::Matrix3x6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use synergy_core::potential::synergy_gap;
use synergy_core::quad::tracking::{simulate_tracking, tracking_metrics, TrackingError};
use synergy_core::quad::{synthesize_gains, GainError, PositionGains, TrackingLoop};
use synergy_core::report::{Check, Report};
use synergy_core::sampling::{uniform_in_cap, uniform_sphere};
use synergy_core::sphere::geodesic_distance;
use synergy_core::stabilizer::{check_geodesic, simulate, StabilizerError};
use synergy_core::verify::{verify_gains, verify_sphere, verify_tracking};
use synergy_core::{PotentialConfig, SolverConfig, UnitVector};

use crate::config::{ConfigError, ScenarioConfig};
use crate::export::{quad_table, sphere_table, ArcTable};
use crate::CliError;

/// Inputs shared by all modes.
pub struct RunContext<'a> {
    pub config: &'a ScenarioConfig,
    pub seed: u64,
}

pub enum Artifact {
    Arc(ArcTable),
    Json(Value),
}

pub struct ModeOutput {
    pub artifact: Artifact,
    /// Human-readable lines for stderr.
    pub summary: Vec<String>,
    /// False when a checked property failed (exit code 3).
    pub passed: bool,
}

pub trait Mode: Send + Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError>;
}

#[derive(Default)]
pub struct ModeRegistry {
    modes: Vec<Box<dyn Mode>>,
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// sphere-sim, quad-sim, gains, verify, geodesic-check.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for m in [
            Box::new(SphereSim) as Box<dyn Mode>,
            Box::new(QuadSim),
            Box::new(Gains),
            Box::new(Verify),
            Box::new(GeodesicCheck),
        ] {
            r.register(m).expect("builtin names are distinct");
        }
        r
    }

    pub fn register(&mut self, mode: Box<dyn Mode>) -> Result<(), String> {
        if self.get(mode.name()).is_some() {
            return Err(format!("mode '{}' is already registered", mode.name()));
        }
        self.modes.push(mode);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn Mode> {
        self.modes.iter().find(|m| m.name() == name).map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.modes.iter().map(|m| m.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Mode> {
        self.modes.iter().map(|m| m.as_ref())
    }
}

fn report_json(report: &Report) -> Value {
    serde_json::to_value(report).expect("reports serialise")
}

fn report_lines(report: &Report) -> Vec<String> {
    report
        .checks
        .iter()
        .map(|c| format!("[{}] {}: value {:e}, bound {:e} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound, c.detail))
        .collect()
}

fn rows(m: impl Iterator<Item = f64>, ncols: usize) -> Vec<Vec<f64>> {
    let v: Vec<f64> = m.collect();
    v.chunks(ncols).map(|c| c.to_vec()).collect()
}

/// Row-major nested arrays.
fn matrix_json<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    rows((0..R).flat_map(|i| (0..C).map(move |j| m[(i, j)])), C)
}

struct QuadSetup {
    pot: PotentialConfig,
    params: synergy_core::quad::QuadParams,
    reference: Box<dyn synergy_core::quad::Reference>,
    gains: PositionGains,
}

fn quad_setup(config: &ScenarioConfig) -> Result<QuadSetup, CliError> {
    let pot = config.potential_config()?;
    let params = config.quad_params(&pot)?;
    let reference = config.reference()?;
    let spec = config.gain_spec(&params, reference.as_ref())?;
    let gains = synthesize_gains(&spec, &pot)?;
    Ok(QuadSetup { pot, params, reference, gains })
}

impl QuadSetup {
    fn tracking_loop(&self, config: &ScenarioConfig) -> Result<TrackingLoop<'_>, CliError> {
        let q = &config.quad;
        Ok(TrackingLoop::new(self.params, &self.gains, &self.pot, q.sat, q.k1, q.kp, self.reference.as_ref())?)
    }
}

pub struct SphereSim;

impl Mode for SphereSim {
    fn name(&self) -> &'static str {
        "sphere-sim"
    }

    fn about(&self) -> &'static str {
        "simulate the hybrid closed loop on the sphere"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        let cfg = ctx.config.potential_config()?;
        let solver = ctx.config.solver_config()?;
        let (x0, y0) = ctx.config.sphere_initial(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let x0 = x0.unwrap_or_else(|| uniform_sphere(&mut rng, cfg.dim()));
        let y0 = y0.unwrap_or_else(|| uniform_in_cap(&mut rng, &cfg.r, cfg.gamma));
        let arc = simulate(&cfg, &x0, &y0, &solver)?;
        let (tf, last) = arc.last().ok_or(StabilizerError::EmptyArc)?;
        let summary = vec![
            format!("x0 = {:?}, y0 = {:?}", x0.as_slice(), y0.as_slice()),
            format!("{} jumps at {:?}", arc.jump_count(), arc.jump_times()),
            format!("distance to r at t = {tf}: {:e}", geodesic_distance(&last.x, &cfg.r)),
        ];
        Ok(ModeOutput { artifact: Artifact::Arc(sphere_table(&arc, &cfg)), summary, passed: true })
    }
}

pub struct QuadSim;

impl Mode for QuadSim {
    fn name(&self) -> &'static str {
        "quad-sim"
    }

    fn about(&self) -> &'static str {
        "simulate quadrotor trajectory tracking with the hybrid attitude loop"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        let setup = quad_setup(ctx.config)?;
        let solver = ctx.config.solver_config()?;
        let lp = setup.tracking_loop(ctx.config)?;
        let initial = ctx.config.quad_initial(&setup.pot, setup.reference.as_ref())?;
        let arc = simulate_tracking(&lp, initial, &solver)?;
        let m = tracking_metrics(&arc, &lp);
        let summary = vec![
            format!("{} jumps at {:?}", m.jump_count, m.jump_times),
            format!("max |K z~| = {:.6} (b = {}), initial state in certified set: {}", m.max_kz_norm, lp.sat.b, m.initial_in_u),
            format!("final |p~| = {:e}, |v~| = {:e}", m.final_p_err, m.final_v_err),
        ];
        Ok(ModeOutput { artifact: Artifact::Arc(quad_table(&arc, &lp)), summary, passed: true })
    }
}

pub struct Gains;

impl Mode for Gains {
    fn name(&self) -> &'static str {
        "gains"
    }

    fn about(&self) -> &'static str {
        "synthesise position-loop gains and print their certificates"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        let setup = quad_setup(ctx.config)?;
        let g = &setup.gains;
        let report = verify_gains(g);
        let k: &Matrix3x6<f64> = &g.k;
        let value = json!({
            "K": matrix_json(k),
            "P": matrix_json(&g.p),
            "Q_hat": matrix_json(&g.q_hat),
            "epsilon": g.epsilon,
            "ell_P": g.ell_p,
            "ell_H": g.ell_h,
            "p22_sigma": g.p22_sigma,
            "certificates": g.certificates,
            "report": report_json(&report),
        });
        let mut summary = report_lines(&report);
        summary.push(format!(
            "epsilon = {:e}; k_p kbar1 lambda = {:.4} (unsquared variant {:.4})",
            g.epsilon, g.certificates.bark1_product, g.certificates.bark1_product_unsquared
        ));
        Ok(ModeOutput { artifact: Artifact::Json(value), summary, passed: report.all_passed() })
    }
}

pub struct Verify;

impl Mode for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn about(&self) -> &'static str {
        "run the property suites; exit code 3 if any check fails"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        let cfg = ctx.config.potential_config()?;
        let solver = ctx.config.solver_config()?;
        ctx.config.check_verify_section()?;
        let mut report = verify_sphere(&cfg, &solver, &ctx.config.verify, ctx.seed)?;
        // the quadrotor checks need a 3-D potential aligned with the thrust axis
        if cfg.dim() == 3 && ctx.config.quad_params(&cfg).is_ok() {
            let setup = quad_setup(ctx.config)?;
            report.extend(verify_gains(&setup.gains));
            let lp = setup.tracking_loop(ctx.config)?;
            let initial = ctx.config.quad_initial(&setup.pot, setup.reference.as_ref())?;
            report.extend(verify_tracking(&lp, initial, &solver)?);
        } else {
            report.push(Check::new("quad_checks", true, 0.0, 0.0, "skipped: potential is not the 3-D thrust-axis potential"));
        }
        let passed = report.all_passed();
        let mut summary = report_lines(&report);
        summary.push(format!("{} of {} checks passed", report.checks.iter().filter(|c| c.passed).count(), report.checks.len()));
        Ok(ModeOutput { artifact: Artifact::Json(report_json(&report)), summary, passed })
    }
}

pub struct GeodesicCheck;

impl Mode for GeodesicCheck {
    fn name(&self) -> &'static str {
        "geodesic-check"
    }

    fn about(&self) -> &'static str {
        "compare post-jump path lengths with the geodesic distance to r"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        let cfg = ctx.config.potential_config()?;
        ctx.config.check_geodesic_section()?;
        let g = &ctx.config.geodesic;
        let solver = SolverConfig { max_time: g.max_time, ..ctx.config.solver_config()? };
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut results = Vec::new();
        let mut worst = 0.0f64;
        for _ in 0..g.starts {
            let (x0, y0) = jump_set_start(&cfg, &mut rng)?;
            let arc = simulate(&cfg, &x0, &y0, &solver)?;
            let rep = check_geodesic(&arc, &cfg)?;
            worst = worst.max(rep.difference.abs());
            results.push(json!({
                "x0": x0.as_slice(),
                "y0": y0.as_slice(),
                "path_length": rep.path_length,
                "expected": rep.expected,
                "difference": rep.difference,
            }));
        }
        let passed = worst <= g.tolerance;
        let summary = vec![format!(
            "[{}] {} starts, max |path length - distance| = {worst:e} (tolerance {:e})",
            if passed { "PASS" } else { "FAIL" },
            g.starts,
            g.tolerance
        )];
        Ok(ModeOutput { artifact: Artifact::Json(json!({ "max_difference": worst, "runs": results })), summary, passed })
    }
}

fn jump_set_start(cfg: &PotentialConfig, rng: &mut ChaCha8Rng) -> Result<(UnitVector, UnitVector), CliError> {
    for _ in 0..1_000_000 {
        let x0 = uniform_sphere(rng, cfg.dim());
        let y0 = uniform_in_cap(rng, &cfg.r, cfg.gamma);
        if synergy_gap(cfg, &x0, &y0).map_err(StabilizerError::from)? >= cfg.delta {
            return Ok((x0, y0));
        }
    }
    Err(CliError::Config(ConfigError::new("potential.delta", "no start in the jump set found after 1e6 samples")))
}

impl From<GainError> for CliError {
    fn from(e: GainError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<TrackingError> for CliError {
    fn from(e: TrackingError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<StabilizerError> for CliError {
    fn from(e: StabilizerError) -> Self {
        CliError::Run(e.to_string())
    }
}
