//! Continuation from the order-zero problem to the mission: first on λ₁
//! (dynamics and cost), then on λ₂ (target), with bisection of the step on
//! every failed shooting solve.
//!
//! Fixed-time missions run both phases with free final time, because the
//! drag-only model generally cannot reach the target by the prescribed
//! date, and then blend the final time from the free-time optimum to the
//! prescribed value.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use crate::error::{GuidanceError, Result};
use crate::pmp::{ControlLaw, TimeMode};
use crate::shooting::{shoot, solve, solve_shifted, ShootingProblem, ShootingUnknowns, SolveReport, Stage};

/// Relative distance from burnout within which a pinned final time is tried.
const BURNOUT_WINDOW: f64 = 0.1;
/// Relative offset of the final-time guess when leaving burnout.
const UNPIN_OFFSET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomotopyOptions {
    /// Attempts allowed per phase.
    pub k_max: usize,
    /// Smallest step before the continuation gives up.
    pub delta_min: f64,
    /// Random restarts for the order-zero solve.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self { k_max: 50, delta_min: 2f64.powi(-20), restarts: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Position along the final-time blend of fixed-time missions.
    pub time_blend: f64,
    pub iterations: usize,
    pub success: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyState {
    pub lambda: (f64, f64),
    pub unknowns: ShootingUnknowns,
    /// Formulation of the last accepted solve.
    pub stage: Stage,
    pub history: Vec<HistoryEntry>,
    /// Shooting solves attempted in each phase.
    pub lambda1_attempts: usize,
    pub lambda2_attempts: usize,
    /// Solves spent moving the final time (fixed-time missions only).
    pub time_attempts: usize,
    pub last_report: SolveReport,
}

/// Initial guess for the order-zero problem.
///
/// The flight is approximated by a drag-only cruise along the chord to M₀.
/// The speed costate follows from H = 0 along that cruise, the position
/// costates point along the chord with an altitude bonus from the density
/// gradient, and the angle costates reproduce the initial curvature of the
/// cubic Hermite curve joining the initial and final velocity directions.
pub fn order_zero_guess(problem: &ShootingProblem) -> ShootingUnknowns {
    let m = &problem.model;
    let x0 = &problem.x0;
    let target = problem.terminal.order_zero;
    let h0 = x0.r - m.rt;
    // local (north, east, up) offsets
    let chord = Vector3::new(target.downrange - x0.lat * m.rt, target.crossrange - x0.lon * m.rt, target.altitude - h0);
    let range = chord.norm().max(1.0);
    let los = chord / range;
    let heading = |g: f64, c: f64| Vector3::new(g.cos() * c.cos(), g.cos() * c.sin(), g.sin());
    let t0 = heading(x0.ang1, x0.ang2);
    let t1 = heading(target.gamma, target.chi);

    // Hermite path length grows with the turning required
    let path = range * (1.0 + 0.05 * (1.0 - t0.dot(&t1)));
    let mean_alt = 0.5 * (h0 + target.altitude);
    let (d_ref, _) = m.aero_coeffs(0.0, mean_alt);
    let inv_mass_avg = |t_f: f64| {
        let tb = t_f.min(m.t_burn);
        let burn = if m.q0 > 0.0 { -(1.0 - m.q0 * tb).ln() / m.q0 } else { tb };
        (burn + (t_f - tb) / m.mass_ratio(m.t_burn)) / t_f
    };
    let mut t_final = path / x0.v;
    let mut decay = d_ref * path;
    for _ in 0..8 {
        decay = (d_ref * inv_mass_avg(t_final) * path).min(5.0);
        t_final = (decay.exp() - 1.0) / (decay / path * x0.v);
    }
    let v_final = x0.v * (-decay).exp();

    let pv = 2.0 * v_final * v_final / x0.v;
    let (d_final, _) = m.aero_coeffs(t_final, target.altitude);
    let big_p = 2.0 * d_final * v_final * v_final;
    let p_r = big_p * (los.z + path / m.hr);
    let p_lat = big_p * los.x * x0.r;
    let p_lon = big_p * los.y * x0.r * x0.lat.cos();

    // initial curvature of the Hermite curve, split along the two angle directions
    let accel = 6.0 * chord - 4.0 * range * t0 - 2.0 * range * t1;
    let kappa = (accel - t0 * accel.dot(&t0)) / (range * range);
    let (g0, c0) = (x0.ang1, x0.ang2);
    let e_gamma = Vector3::new(-g0.sin() * c0.cos(), -g0.sin() * c0.sin(), g0.cos());
    let e_chi = Vector3::new(-c0.sin(), c0.cos(), 0.0);
    let (_, cm0) = m.aero_coeffs(0.0, h0);
    let w2 = kappa.dot(&e_gamma) / cm0;
    let w3 = kappa.dot(&e_chi) / cm0;
    let p_gamma = 2.0 * m.eta * pv * x0.v * w2;
    let p_chi = 2.0 * m.eta * pv * x0.v * g0.cos() * w3;

    ShootingUnknowns { p0: [p_r, p_lat, p_lon, pv, p_gamma, p_chi], t_final: Some(t_final) }
}

fn perturbed(base: &ShootingUnknowns, r0: f64, rng: &mut ChaCha8Rng) -> ShootingUnknowns {
    let mut p = base.p0;
    let scale_pos = base.p0[..3].iter().map(|c| c.abs()).fold(0.0, f64::max).max(1e-9);
    for (k, c) in p.iter_mut().enumerate() {
        match k {
            // position costates: random mix around the line-of-sight guess
            0 => *c += scale_pos * rng.gen_range(-0.5..0.5),
            1 | 2 => *c += scale_pos * rng.gen_range(-0.5..0.5) * r0,
            3 => *c *= rng.gen_range(0.5..2.0),
            _ => *c = *c * rng.gen_range(0.0..2.0) + base.p0[3] * rng.gen_range(-20.0..20.0),
        }
    }
    let t_final = base.t_final.map(|t| t * rng.gen_range(0.6..1.6));
    ShootingUnknowns { p0: p, t_final }
}

/// Residual-offset continuation: solves F(z) = (1 - s) F(z0) for s from 0
/// to 1, halving the step on failure. Exact at s = 0 by construction.
fn offset_continuation(
    problem: &ShootingProblem,
    start: &ShootingUnknowns,
    stage: &Stage,
    opts: &HomotopyOptions,
) -> Result<SolveReport> {
    let t0 = start.final_time(stage)?;
    let shot = shoot(problem, stage, &problem.frozen_options(t0), &start.to_vector(problem.model.rt));
    if shot.failed {
        return Err(GuidanceError::NoConvergence { iterations: 0, best_residual: f64::INFINITY, best: start.p0.to_vec() });
    }
    let f0 = shot.residual;
    let mut s = 0.0f64;
    let mut delta = 1.0f64;
    let mut current = *start;
    let mut k = 0;
    loop {
        if k >= opts.k_max || delta < opts.delta_min {
            return Err(GuidanceError::ContinuationStalled { lambda1: 0.0, lambda2: 0.0, delta });
        }
        k += 1;
        let trial = (s + delta).min(1.0);
        let outcome = if trial >= 1.0 {
            solve(problem, &current, stage)
        } else {
            solve_shifted(problem, &current, stage, Some(&(&f0 * (1.0 - trial))))
        };
        match outcome {
            Ok(rep) => {
                log::debug!("order-zero offset continuation: s = {trial}");
                if trial >= 1.0 {
                    return Ok(rep);
                }
                s = trial;
                current = rep.unknowns;
                delta = (2.0 * delta).min(1.0 - s);
            }
            Err(GuidanceError::NoConvergence { .. } | GuidanceError::SingularJacobian) => delta *= 0.5,
            Err(e) => return Err(e),
        }
    }
}

/// Solves the order-zero problem (λ = (0, 0), free time, target M₀).
///
/// Each starting point (the heuristic guess, then seeded perturbations of
/// it) is first tried directly and then through a residual-offset
/// continuation. The unconstrained law is used first; if no solution is
/// found or the solution exceeds the angle-of-attack bound, the bounded
/// law is used instead.
pub fn solve_order_zero(problem: &ShootingProblem, opts: &HomotopyOptions) -> Result<(SolveReport, Stage)> {
    let free = Stage::new(0.0, 0.0, TimeMode::Free);
    let bounded = Stage { law: ControlLaw::Constrained, ..free };
    let base = order_zero_guess(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<ShootingUnknowns> = std::iter::once(base)
        .chain((0..opts.restarts).map(|_| perturbed(&base, problem.x0.r, &mut rng)))
        .collect();
    let sin_a = problem.model.sin_alpha_max();
    let mut last_err = None;
    for (attempt, guess) in starts.iter().enumerate() {
        for stage in [free, bounded] {
            let outcome = solve(problem, guess, &stage).or_else(|e| {
                log::debug!("order-zero attempt {attempt} ({:?}) direct solve failed: {e}", stage.law);
                offset_continuation(problem, guess, &stage, opts)
            });
            let report = match outcome {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("order-zero attempt {attempt} ({:?}) failed: {e}", stage.law);
                    last_err = Some(e);
                    continue;
                }
            };
            if stage.law == ControlLaw::Constrained {
                return Ok((report, stage));
            }
            let (traj, _) = problem.evaluate(&report.unknowns, &stage, &problem.report_options(&report))?;
            if traj.max_c2(sin_a) <= 1e-9 {
                return Ok((report, stage));
            }
            log::info!("order-zero solution exceeds the angle-of-attack bound; re-solving with the bounded law");
            match solve(problem, &report.unknowns, &bounded) {
                Ok(r) => return Ok((r, bounded)),
                Err(e) => last_err = Some(e),
            }
        }
    }
    Err(last_err.unwrap_or(GuidanceError::NoConvergence { iterations: 0, best_residual: f64::INFINITY, best: vec![] }))
}

/// Shooting formulation at homotopy point (λ₁, λ₂) and time blend μ.
fn stage_at(problem: &ShootingProblem, params: [f64; 3], t_start: f64) -> Stage {
    let time = match problem.terminal.time_mode {
        TimeMode::Fixed(t_fix) if params[2] > 0.0 => TimeMode::Fixed((1.0 - params[2]) * t_start + params[2] * t_fix),
        _ => TimeMode::Free,
    };
    Stage::new(params[0], params[1], time)
}

/// Converts unknowns between the free and fixed time formulations.
fn adapt(u: &ShootingUnknowns, stage: &Stage, current_t: f64) -> ShootingUnknowns {
    match stage.time {
        TimeMode::Free => ShootingUnknowns { t_final: Some(u.t_final.unwrap_or(current_t)), ..*u },
        TimeMode::Fixed(_) => ShootingUnknowns { t_final: None, ..*u },
    }
}

/// Solves one continuation stage.
///
/// The thrust cut-off makes the maximized Hamiltonian jump at burnout, so a
/// free-time optimum may sit exactly on it, where H(T) = λ₁C₁ has no root.
/// When a free-time solve near burnout fails, the final time is pinned to
/// burnout and the solution is accepted if λ₁C₁ lies between the one-sided
/// values H(T⁺) and H(T⁻).
fn solve_stage(
    problem: &ShootingProblem,
    guess: &ShootingUnknowns,
    stage: &Stage,
    current_t: f64,
) -> Result<(SolveReport, Stage)> {
    let burn = problem.model.t_burn;
    let err = match solve(problem, guess, stage) {
        Ok(rep) => return Ok((rep, *stage)),
        Err(e) => e,
    };
    let recoverable = matches!(err, GuidanceError::NoConvergence { .. } | GuidanceError::SingularJacobian);
    if !recoverable || stage.time != TimeMode::Free || (current_t - burn).abs() > BURNOUT_WINDOW * burn {
        return Err(err);
    }
    // H(T) jumps at burnout, so Newton cannot cross it: restart on each side
    for side in [-1.0, 1.0] {
        let shifted = ShootingUnknowns { t_final: Some(burn * (1.0 + side * UNPIN_OFFSET)), ..*guess };
        if let Ok(rep) = solve(problem, &shifted, stage) {
            return Ok((rep, *stage));
        }
    }
    let pinned = Stage { time: TimeMode::Fixed(burn), ..*stage };
    let Ok(rep) = solve(problem, &adapt(guess, &pinned, burn), &pinned) else {
        return Err(err);
    };
    let (before, after) = problem.burnout_hamiltonians(&rep.unknowns, &pinned, &problem.report_options(&rep))?;
    let target = stage.lambda1 * problem.terminal.c1;
    let slack = problem.solver.tol * problem.terminal.h_scale;
    if after - slack <= target && target <= before + slack {
        log::debug!("final time pinned at burnout: H(T+) = {after:.6e} <= {target:.6e} <= H(T-) = {before:.6e}");
        Ok((rep, pinned))
    } else {
        Err(err)
    }
}

/// Bisection continuation from a solution of the order-zero problem to λ = (1, 1).
///
/// Fixed-time missions append a third phase that moves the final time from
/// the free-time optimum to the prescribed value.
pub fn run_continuation(
    problem: &ShootingProblem,
    seed: &SolveReport,
    seed_stage: &Stage,
    opts: &HomotopyOptions,
) -> Result<HomotopyState> {
    let mut history = Vec::new();
    let mut unknowns = seed.unknowns;
    let mut stage = *seed_stage;
    let mut last_report = seed.clone();
    let mut params = [0.0f64; 3];
    let mut current_t = seed.unknowns.final_time(seed_stage)?;
    let mut t_start = f64::NAN;
    let mut attempts = [0usize; 3];
    let phases = match problem.terminal.time_mode {
        TimeMode::Fixed(_) => 3,
        TimeMode::Free => 2,
    };

    for phase in 0..phases {
        let mut delta = 1.0f64;
        let mut k = 0;
        if phase == 2 {
            t_start = current_t;
        }
        while params[phase] < 1.0 {
            if k >= opts.k_max || delta < opts.delta_min {
                return Err(GuidanceError::ContinuationStalled { lambda1: params[0], lambda2: params[1], delta });
            }
            k += 1;
            attempts[phase] += 1;
            let mut trial = params;
            trial[phase] = (params[phase] + delta).min(1.0);
            let trial_stage = stage_at(problem, trial, t_start);
            let guess = adapt(&unknowns, &trial_stage, current_t);
            let clock = Instant::now();
            let outcome = solve_stage(problem, &guess, &trial_stage, current_t);
            let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
            let entry = |iterations, success| HistoryEntry {
                lambda1: trial[0],
                lambda2: trial[1],
                time_blend: trial[2],
                iterations,
                success,
                wall_ms,
            };
            match outcome {
                Ok((rep, solved_stage)) => {
                    log::debug!("accepted {trial:?} after {} iterations", rep.iterations);
                    history.push(entry(rep.iterations, true));
                    params = trial;
                    unknowns = rep.unknowns;
                    stage = solved_stage;
                    current_t = unknowns.final_time(&stage)?;
                    last_report = rep;
                }
                Err(GuidanceError::NoConvergence { iterations, best_residual, .. }) => {
                    log::debug!("rejected {trial:?}: best residual {best_residual:.3e}");
                    history.push(entry(iterations, false));
                    delta *= 0.5;
                }
                Err(GuidanceError::SingularJacobian) => {
                    history.push(entry(0, false));
                    delta *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(HomotopyState {
        lambda: (params[0], params[1]),
        unknowns,
        stage,
        history,
        lambda1_attempts: attempts[0],
        lambda2_attempts: attempts[1],
        time_attempts: attempts[2],
        last_report,
    })
}
