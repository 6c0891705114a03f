//! Property suites run by the command-line `verify` mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hybrid::SolverConfig;
use crate::potential::{
    argmin_over_y, exp_constants, min_synergy_gap, potential, synergy_gap, tie_break_point, verify_potential_properties,
    PotentialConfig,
};
use crate::quad::gains::PositionGains;
use crate::quad::tracking::{simulate_tracking, tracking_metrics, QuadFullState, TrackingError, TrackingLoop};
use crate::report::{Check, Report};
use crate::sampling::{cap_grid, uniform_in_cap, uniform_sphere};
use crate::sphere::geodesic_distance;
use crate::stabilizer::{check_exponential_decay, check_geodesic, simulate, StabilizerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    /// Random (x, y) pairs for the pointwise potential checks.
    pub samples: usize,
    /// Closed-loop simulations from random initial conditions (plus x₀ = −r).
    pub closed_loop_runs: usize,
    /// Simulations started in the jump set for the path-length check.
    pub geodesic_runs: usize,
    /// Horizon of the closed-loop runs (s).
    pub horizon: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 100_000, closed_loop_runs: 20, geodesic_runs: 10, horizon: 100.0 }
    }
}

/// Potential, argmin, closed-loop and geodesic checks for one configuration.
pub fn verify_sphere(cfg: &PotentialConfig, solver: &SolverConfig, opts: &VerifyOptions, seed: u64) -> Result<Report, StabilizerError> {
    let mut report = verify_potential_properties(cfg, opts.samples.max(1000), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dim = cfg.dim();

    // Candidate points of Y: a structured grid on S², random samples otherwise.
    let y_points = if dim == 3 {
        cap_grid(&cfg.r, cfg.gamma, 201, 100)?
    } else {
        (0..20_000).map(|_| uniform_in_cap(&mut rng, &cfg.r, cfg.gamma)).collect()
    };
    let mut gap_min = f64::INFINITY;
    for y in &y_points {
        gap_min = gap_min.min(synergy_gap(cfg, y, y)?);
    }
    let closed = min_synergy_gap(cfg.k, cfg.gamma);
    report.push(Check::new(
        "gap_minimum",
        (gap_min - closed).abs() <= 5e-3,
        gap_min,
        closed,
        format!("min of mu(y, y) over {} points of Y, tolerance 5e-3", y_points.len()),
    ));

    let coarse = if dim == 3 { cap_grid(&cfg.r, cfg.gamma, 50, 100)? } else { y_points };
    let (mut val_worst, mut bdry_worst) = (0.0f64, 0.0f64);
    let mut above = 0usize;
    for _ in 0..500 {
        let x = uniform_sphere(&mut rng, dim);
        let y = argmin_over_y(cfg, &x);
        let v = potential(cfg, &x, &y)?;
        let mut brute = f64::INFINITY;
        for p in &coarse {
            brute = brute.min(potential(cfg, &x, p)?);
        }
        val_worst = val_worst.max((v - brute).abs());
        if v > brute + 1e-12 {
            above += 1;
        }
        if -cfg.r.dot(&x) > cfg.gamma {
            bdry_worst = bdry_worst.max((cfg.r.dot(&y) - cfg.gamma).abs());
        }
    }
    report.push(Check::new(
        "argmin_vs_grid",
        val_worst <= 1e-3 && above == 0,
        val_worst,
        1e-3,
        format!("500 random x against {} grid points; {above} grid values below the argmin", coarse.len()),
    ));
    report.push(Check::new("argmin_boundary", bdry_worst <= 1e-9, bdry_worst, 1e-9, "max |r.y - gamma| on the boundary branch"));

    let consts = exp_constants(cfg);
    let run_solver = SolverConfig { max_time: opts.horizon, ..*solver };
    let (mut dist_worst, mut max_jumps, mut decay_failures) = (0.0f64, 0usize, Vec::new());
    let mut rate_min = f64::INFINITY;
    for i in 0..opts.closed_loop_runs {
        let (x0, y0) = if i == 0 {
            (cfg.r.neg(), tie_break_point(&cfg.r, cfg.gamma))
        } else {
            (uniform_sphere(&mut rng, dim), uniform_in_cap(&mut rng, &cfg.r, cfg.gamma))
        };
        let arc = simulate(cfg, &x0, &y0, &run_solver)?;
        let (_, last) = arc.last().ok_or(StabilizerError::EmptyArc)?;
        dist_worst = dist_worst.max(geodesic_distance(&last.x, &cfg.r));
        max_jumps = max_jumps.max(arc.jump_count());
        let decay = check_exponential_decay(&arc, cfg, &consts)?;
        if let Some(l) = decay.lambda_emp {
            rate_min = rate_min.min(l);
        }
        decay_failures.extend(decay.checks.checks.into_iter().filter(|c| !c.passed).map(|c| format!("run {i}: {}", c.name)));
    }
    report.push(Check::new(
        "closed_loop_convergence",
        dist_worst < 1e-6,
        dist_worst,
        1e-6,
        format!("{} runs, distance to r at t = {}", opts.closed_loop_runs, opts.horizon),
    ));
    report.push(Check::new(
        "closed_loop_decay",
        decay_failures.is_empty(),
        decay_failures.len() as f64,
        0.0,
        if decay_failures.is_empty() {
            format!("envelope, monotonicity and jump checks; slowest fitted rate {rate_min:.4} vs lambda {:.4}", consts.lambda)
        } else {
            decay_failures.join(", ")
        },
    ));
    report.push(Check::new("at_most_one_jump", max_jumps <= 1, max_jumps as f64, 1.0, "largest jump count over the runs"));

    let mut geo_worst = 0.0f64;
    let mut found = 0;
    let mut tries = 0;
    while found < opts.geodesic_runs && tries < 100_000 {
        tries += 1;
        let x0 = uniform_sphere(&mut rng, dim);
        let y0 = uniform_in_cap(&mut rng, &cfg.r, cfg.gamma);
        if synergy_gap(cfg, &x0, &y0)? < cfg.delta {
            continue;
        }
        found += 1;
        let arc = simulate(cfg, &x0, &y0, &run_solver)?;
        geo_worst = geo_worst.max(check_geodesic(&arc, cfg)?.difference.abs());
    }
    report.push(Check::new(
        "geodesic_length",
        found == opts.geodesic_runs && geo_worst <= 1e-3,
        geo_worst,
        1e-3,
        format!("{found} starts in the jump set; |path length - distance to r|"),
    ));
    Ok(report)
}

/// The three ellipsoid certificates of a gain set.
pub fn verify_gains(g: &PositionGains) -> Report {
    let c = &g.certificates;
    let mut report = Report::default();
    report.push(Check::new("riccati_inequality", c.qr_ok(), c.qr_max_eig, 1e-8, "max eigenvalue of the closed-loop Riccati residual"));
    report.push(Check::new("ellipsoid_inclusion", c.ph_ok(), c.ph_min_eig, -1e-10, "min eigenvalue of H/l_H - P/l_P"));
    report.push(Check::new("saturation_bound", c.svmax_ok(), c.svmax_sq, c.svmax_bound, "svmax(R^-1 B' P^1/2)^2 against b^2/l_P"));
    report
}

/// Runs a tracking scenario and checks the saturation bound, the W₁ drop at
/// jumps and the final position error.
pub fn verify_tracking(lp: &TrackingLoop<'_>, initial: QuadFullState, solver: &SolverConfig) -> Result<Report, TrackingError> {
    let arc = simulate_tracking(lp, initial, solver)?;
    let m = tracking_metrics(&arc, lp);
    let mut report = Report::default();
    report.push(Check::new(
        "tracking_saturation",
        m.saturation_inactive,
        m.max_kz_norm,
        lp.sat.b,
        format!("max |K z~| over the run; initial state in the certified set: {}", m.initial_in_u),
    ));
    let shortfall = m.w1_jump_drops.iter().map(|(d, b)| b - d).fold(0.0, f64::max);
    report.push(Check::new(
        "tracking_jump_decrease",
        m.w1_jump_drops.iter().all(|(d, b)| *b > 0.0 && *d >= b - 1e-12),
        shortfall,
        1e-12,
        format!("{} jumps at {:?}", m.jump_count, m.jump_times),
    ));
    report.push(Check::new(
        "tracking_final_error",
        m.final_p_err < 1e-2,
        m.final_p_err,
        1e-2,
        format!("position error at t = {}", solver.max_time),
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::UnitVector;

    #[test]
    fn small_suite_passes_for_fixture() {
        let cfg = PotentialConfig::new(UnitVector::from_slice(&[0.0, 0.0, -1.0]).unwrap(), 1.0, -0.5, 0.1).unwrap();
        let opts = VerifyOptions { samples: 2000, closed_loop_runs: 3, geodesic_runs: 2, horizon: 40.0 };
        let rep = verify_sphere(&cfg, &SolverConfig::default(), &opts, 7).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        assert!(rep.get("gap_minimum").is_some());
    }
}
