//! Single shooting on the initial costate (and final time) with a
//! Powell-dogleg trust-region solver.
//!
//! The solver follows the classic hybrid scheme: forward-difference
//! Jacobian, column-norm scaling, rank-one Broyden updates between
//! refreshes, and a refresh after two consecutive poor steps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{ChartId, ChartState, Costate};
use crate::error::{GuidanceError, Result};
use crate::pmp::{max_hamiltonian, terminal_residuals, ControlLaw, TerminalSpec, TimeMode};
use crate::propagate::{final_in_chart_a, propagate, ExtremalTrajectory, PropagationOptions};
use crate::vehicle::VehicleModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Convergence threshold on the scaled residual, max norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, fd_step: 1e-7 }
    }
}

/// Everything that defines one boundary-value problem except the homotopy point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingProblem {
    pub model: VehicleModel,
    /// Initial state, chart A.
    pub x0: ChartState,
    pub terminal: TerminalSpec,
    pub prop: PropagationOptions,
    pub solver: SolverOptions,
}

/// Homotopy point plus the formulation used there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stage {
    pub lambda1: f64,
    pub lambda2: f64,
    pub time: TimeMode,
    pub law: ControlLaw,
}

impl Stage {
    pub fn new(lambda1: f64, lambda2: f64, time: TimeMode) -> Self {
        let law = if lambda1 == 0.0 { ControlLaw::Unconstrained } else { ControlLaw::Constrained };
        Self { lambda1, lambda2, time, law }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingUnknowns {
    /// Initial costate in chart A (physical units).
    pub p0: [f64; 6],
    /// Final time, present in free-time mode only.
    pub t_final: Option<f64>,
}

impl ShootingUnknowns {
    /// Solver coordinates: p_L and p_l are divided by r_T so that all
    /// position costates are per meter.
    pub fn to_vector(&self, rt: f64) -> DVector<f64> {
        let mut v = vec![self.p0[0], self.p0[1] / rt, self.p0[2] / rt, self.p0[3], self.p0[4], self.p0[5]];
        if let Some(t) = self.t_final {
            v.push(t);
        }
        DVector::from_vec(v)
    }

    pub fn from_vector(z: &DVector<f64>, rt: f64) -> Self {
        let p0 = [z[0], z[1] * rt, z[2] * rt, z[3], z[4], z[5]];
        let t_final = (z.len() == 7).then(|| z[6]);
        Self { p0, t_final }
    }

    pub fn final_time(&self, stage: &Stage) -> Result<f64> {
        match (stage.time, self.t_final) {
            (TimeMode::Fixed(t), None) => Ok(t),
            (TimeMode::Free, Some(t)) => Ok(t),
            _ => Err(GuidanceError::InvalidInput("unknowns do not match the time mode".into())),
        }
    }
}

impl ShootingProblem {
    /// Propagation options with the burnout split frozen for final time `t_final`.
    pub fn frozen_options(&self, t_final: f64) -> PropagationOptions {
        let mut o = self.prop;
        o.burn_steps = Some(o.split_for(&self.model, 0.0, t_final));
        o
    }

    /// Propagation options a solve was carried out with.
    pub fn report_options(&self, report: &SolveReport) -> PropagationOptions {
        PropagationOptions { burn_steps: report.burn_steps, ..self.prop }
    }

    /// Maximized Hamiltonian just before and just after burnout at the end of
    /// the extremal from `u`, for solutions whose final time sits on burnout.
    pub fn burnout_hamiltonians(
        &self,
        u: &ShootingUnknowns,
        stage: &Stage,
        opts: &PropagationOptions,
    ) -> Result<(f64, f64)> {
        let (traj, _) = self.evaluate(u, stage, opts)?;
        let target = self.terminal.target_at(stage.lambda2);
        let (x_t, p_t) = final_in_chart_a(&traj, target.chi)?;
        let burn = self.model.t_burn;
        let before = max_hamiltonian(&self.model, burn, &x_t, &p_t, stage.lambda1, stage.law)?;
        let after = max_hamiltonian(&self.model, burn + burn.abs() * f64::EPSILON, &x_t, &p_t, stage.lambda1, stage.law)?;
        Ok((before, after))
    }

    /// Extremal from `u` and its terminal residuals at `stage`.
    pub fn evaluate(
        &self,
        u: &ShootingUnknowns,
        stage: &Stage,
        opts: &PropagationOptions,
    ) -> Result<(ExtremalTrajectory, Vec<f64>)> {
        let t_final = u.final_time(stage)?;
        if !(t_final > 0.0) {
            return Err(GuidanceError::InvalidInput(format!("final time must be positive (got {t_final})")));
        }
        if u.p0.iter().any(|c| !c.is_finite()) {
            return Err(GuidanceError::InvalidInput("non-finite costate".into()));
        }
        let opts = PropagationOptions { law: stage.law, ..*opts };
        let p0 = Costate::new(ChartId::A, u.p0);
        let traj = propagate(&self.model, &self.x0, &p0, 0.0, t_final, stage.lambda1, &opts)?;
        let target = self.terminal.target_at(stage.lambda2);
        let (x_t, p_t) = final_in_chart_a(&traj, target.chi)?;
        let spec = TerminalSpec { time_mode: stage.time, ..self.terminal };
        let res = terminal_residuals(&self.model, &x_t, &p_t, t_final, (stage.lambda1, stage.lambda2), &spec, stage.law)?;
        if res.iter().any(|r| !r.is_finite()) {
            return Err(GuidanceError::InvalidInput("non-finite residual".into()));
        }
        Ok((traj, res))
    }
}

/// Outcome of one shooting evaluation; failures carry the sentinel residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub residual: DVector<f64>,
    pub failed: bool,
}

/// Residual map in solver coordinates.
pub fn shoot(problem: &ShootingProblem, stage: &Stage, opts: &PropagationOptions, z: &DVector<f64>) -> Shot {
    let u = ShootingUnknowns::from_vector(z, problem.model.rt);
    let n = z.len();
    match problem.evaluate(&u, stage, &PropagationOptions { record: false, ..*opts }) {
        Ok((_, res)) => Shot { residual: DVector::from_vec(res), failed: false },
        Err(e) => {
            log::trace!("shooting evaluation failed: {e}");
            let fill = 1e6 * (1.0 + z.norm());
            Shot { residual: DVector::from_element(n, fill), failed: true }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub unknowns: ShootingUnknowns,
    pub residual_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// 2-norm condition number of the last finite-difference Jacobian.
    pub jacobian_cond: f64,
    /// Burnout split the solve was carried out with.
    pub burn_steps: Option<usize>,
}

fn fd_jacobian<F>(f: &F, z: &DVector<f64>, fz: &DVector<f64>, rel: f64) -> Option<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Shot + Sync,
{
    let n = z.len();
    let cols: Vec<Option<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = rel * z[j].abs().max(1.0);
            for step in [h, -h] {
                let mut zp = z.clone();
                zp[j] += step;
                let shot = f(&zp);
                if !shot.failed {
                    return Some((shot.residual - fz) / step);
                }
            }
            None
        })
        .collect();
    let mut jac = DMatrix::zeros(fz.len(), n);
    for (j, col) in cols.into_iter().enumerate() {
        jac.set_column(j, &col?);
    }
    Some(jac)
}

fn condition(jac: &DMatrix<f64>) -> f64 {
    let sv = jac.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Dogleg step in the metric ‖D p‖ ≤ delta.
fn dogleg(jac: &DMatrix<f64>, f: &DVector<f64>, diag: &DVector<f64>, delta: f64) -> DVector<f64> {
    let n = jac.ncols();
    let gauss_newton = jac
        .clone()
        .svd(true, true)
        .solve(&(-f), 1e-14 * jac.norm())
        .ok()
        .filter(|p| p.iter().all(|c| c.is_finite()));
    if let Some(p) = &gauss_newton {
        if p.component_mul(diag).norm() <= delta {
            return p.clone();
        }
    }
    // steepest descent in scaled variables
    let g = jac.transpose() * f;
    let sg = DVector::from_fn(n, |i, _| g[i] / diag[i]);
    let sd = DVector::from_fn(n, |i, _| -sg[i] / diag[i]);
    let jsd = jac * &sd;
    let alpha = if jsd.norm_squared() > 0.0 { sg.norm_squared() / jsd.norm_squared() } else { 0.0 };
    let cauchy = &sd * alpha;
    let cauchy_len = cauchy.component_mul(diag).norm();
    let Some(gn) = gauss_newton else {
        return if cauchy_len > 0.0 { cauchy * (delta / cauchy_len).min(1.0) } else { cauchy };
    };
    if cauchy_len >= delta {
        return cauchy * (delta / cauchy_len);
    }
    // move from the Cauchy point toward Gauss-Newton until the boundary
    let a = cauchy.component_mul(diag);
    let b = (&gn - &cauchy).component_mul(diag);
    let bb = b.norm_squared();
    let ab = a.dot(&b);
    let tau = (-ab + (ab * ab + bb * (delta * delta - a.norm_squared())).max(0.0).sqrt()) / bb;
    &cauchy + (gn - &cauchy) * tau
}

/// Outcome of [`hybrid_solve`]: the final (or best) iterate and counters.
#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub z: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub jacobian_cond: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RootFailure {
    /// Iteration budget exhausted or trust region collapsed; carries the best iterate.
    NoConvergence(RootReport),
    SingularJacobian,
}

/// Powell hybrid (dogleg) root finder for square systems.
pub fn hybrid_solve<F>(f: &F, z0: DVector<f64>, sopts: &SolverOptions) -> std::result::Result<RootReport, RootFailure>
where
    F: Fn(&DVector<f64>) -> Shot + Sync,
{
    let mut z = z0;
    let mut shot = f(&z);
    let mut evaluations = 1;
    let mut cond = f64::NAN;
    macro_rules! finish {
        ($iterations:expr) => {
            RootReport { z: z.clone(), residual: shot.residual.clone(), iterations: $iterations, evaluations, jacobian_cond: cond }
        };
    }
    if shot.failed {
        return Err(RootFailure::NoConvergence(finish!(0)));
    }
    if shot.residual.amax() < sopts.tol {
        return Ok(finish!(0));
    }

    let Some(mut jac) = fd_jacobian(f, &z, &shot.residual, sopts.fd_step) else {
        return Err(RootFailure::NoConvergence(finish!(0)));
    };
    evaluations += z.len();
    if jac.iter().all(|c| *c == 0.0) {
        return Err(RootFailure::SingularJacobian);
    }
    cond = condition(&jac);
    let col_norms = |j: &DMatrix<f64>| DVector::from_fn(j.ncols(), |i, _| j.column(i).norm());
    let mut diag = col_norms(&jac).map(|c| if c > 0.0 { c } else { 1.0 });
    let scaled = z.component_mul(&diag).norm();
    let mut delta = if scaled > 0.0 { 100.0 * scaled } else { 100.0 };
    let mut consecutive_poor = 0;
    let mut stalled = 0;

    for iteration in 1..=sopts.max_iter {
        let step = dogleg(&jac, &shot.residual, &diag, delta);
        let step_len = step.component_mul(&diag).norm();
        let z_new = &z + &step;
        let trial = f(&z_new);
        evaluations += 1;

        let fnorm = shot.residual.norm();
        let actual = if trial.failed { -1.0 } else { 1.0 - (trial.residual.norm() / fnorm).powi(2) };
        let predicted = 1.0 - ((&shot.residual + &jac * &step).norm() / fnorm).powi(2);
        let ratio = if predicted > 0.0 { actual / predicted } else { 0.0 };
        log::trace!(
            "iter {iteration}: |F| = {:.3e}, trial |F| = {:.3e}, ratio = {ratio:.3}, delta = {delta:.3e}",
            shot.residual.amax(),
            trial.residual.amax()
        );

        if ratio < 0.1 {
            consecutive_poor += 1;
            delta = 0.5 * delta.min(step_len.max(f64::MIN_POSITIVE));
        } else {
            consecutive_poor = 0;
            if ratio >= 0.5 || (ratio - 1.0).abs() <= 0.1 {
                delta = delta.max(2.0 * step_len);
            }
        }

        if !trial.failed && step_len > 0.0 {
            // Broyden rank-one update in the scaled metric
            let d2p = step.component_mul(&diag).component_mul(&diag);
            let defect = &trial.residual - &shot.residual - &jac * &step;
            jac += defect * d2p.transpose() / (step_len * step_len);
        }

        if ratio >= 1e-4 && !trial.failed {
            stalled = if actual < 1e-3 { stalled + 1 } else { 0 };
            z = z_new;
            shot = trial;
            if shot.residual.amax() < sopts.tol {
                return Ok(finish!(iteration));
            }
        } else {
            stalled += 1;
        }

        if consecutive_poor >= 2 || stalled >= 5 {
            let Some(fresh) = fd_jacobian(f, &z, &shot.residual, sopts.fd_step) else {
                return Err(RootFailure::NoConvergence(finish!(iteration)));
            };
            jac = fresh;
            evaluations += z.len();
            cond = condition(&jac);
            diag = diag.zip_map(&col_norms(&jac), |d, c| d.max(c));
            consecutive_poor = 0;
            if stalled >= 10 {
                return Err(RootFailure::NoConvergence(finish!(iteration)));
            }
        }
        if delta <= 1e-15 * z.component_mul(&diag).norm().max(1e-300) {
            return Err(RootFailure::NoConvergence(finish!(iteration)));
        }
    }
    Err(RootFailure::NoConvergence(finish!(sopts.max_iter)))
}

/// Solves the shooting equations from `guess` at `stage`.
pub fn solve(problem: &ShootingProblem, guess: &ShootingUnknowns, stage: &Stage) -> Result<SolveReport> {
    solve_shifted(problem, guess, stage, None)
}

/// Solves F(z) = `shift` (F(z) = 0 when `shift` is `None`).
pub fn solve_shifted(
    problem: &ShootingProblem,
    guess: &ShootingUnknowns,
    stage: &Stage,
    shift: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    let rt = problem.model.rt;
    let opts = problem.frozen_options(guess.final_time(stage)?);
    let z0 = guess.to_vector(rt);
    if z0.iter().any(|c| !c.is_finite()) {
        return Err(GuidanceError::InvalidInput("non-finite initial guess".into()));
    }
    let f = |z: &DVector<f64>| {
        let mut shot = shoot(problem, stage, &opts, z);
        if let (Some(s), false) = (shift, shot.failed) {
            shot.residual -= s;
        }
        shot
    };
    let to_report = |r: RootReport| SolveReport {
        unknowns: ShootingUnknowns::from_vector(&r.z, rt),
        residual_norm: r.residual.amax(),
        iterations: r.iterations,
        evaluations: r.evaluations,
        jacobian_cond: r.jacobian_cond,
        burn_steps: opts.burn_steps,
    };
    match hybrid_solve(&f, z0, &problem.solver) {
        Ok(r) => Ok(to_report(r)),
        Err(RootFailure::SingularJacobian) => Err(GuidanceError::SingularJacobian),
        Err(RootFailure::NoConvergence(r)) => Err(GuidanceError::NoConvergence {
            iterations: r.iterations,
            best_residual: r.residual.amax(),
            best: ShootingUnknowns::from_vector(&r.z, rt).p0.to_vec(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknowns_round_trip() {
        let u = ShootingUnknowns { p0: [1.0, 6.4e7, -3.2e7, 900.0, 40.0, -2.0], t_final: Some(21.0) };
        let z = u.to_vector(6.4e6);
        assert_eq!(z.len(), 7);
        assert_eq!(z[1], 10.0);
        let back = ShootingUnknowns::from_vector(&z, 6.4e6);
        assert_eq!(back.t_final, Some(21.0));
        for k in 0..6 {
            assert!((back.p0[k] - u.p0[k]).abs() <= 1e-15 * u.p0[k].abs());
        }
        let fixed = ShootingUnknowns { t_final: None, ..u };
        assert_eq!(fixed.to_vector(6.4e6).len(), 6);
        assert!(fixed.final_time(&Stage::new(1.0, 0.0, TimeMode::Free)).is_err());
        assert_eq!(fixed.final_time(&Stage::new(1.0, 0.0, TimeMode::Fixed(20.0))).unwrap(), 20.0);
    }

    #[test]
    fn dogleg_takes_newton_step_inside_region() {
        let jac = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let f = DVector::from_vec(vec![2.0, 4.0]);
        let diag = DVector::from_vec(vec![1.0, 1.0]);
        let p = dogleg(&jac, &f, &diag, 10.0);
        assert!((p - DVector::from_vec(vec![-1.0, -1.0])).norm() < 1e-12);
        let p = dogleg(&jac, &f, &diag, 0.1);
        assert!((p.norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dogleg_handles_singular_jacobian() {
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = DVector::from_vec(vec![1.0, 1.0]);
        let diag = DVector::from_vec(vec![1.0, 1.0]);
        let p = dogleg(&jac, &f, &diag, 0.5);
        assert!(p.iter().all(|c| c.is_finite()));
        assert!(p.norm() <= 0.5 + 1e-12);
    }

    fn shot(residual: Vec<f64>) -> Shot {
        Shot { residual: DVector::from_vec(residual), failed: false }
    }

    #[test]
    fn hybrid_solves_circle_hyperbola_intersection() {
        // x² + y² = 4, x y = 1: roots at x, y = sqrt(2 ± sqrt(3))
        let f = |z: &DVector<f64>| shot(vec![z[0] * z[0] + z[1] * z[1] - 4.0, z[0] * z[1] - 1.0]);
        let opts = SolverOptions { tol: 1e-12, ..SolverOptions::default() };
        let r = hybrid_solve(&f, DVector::from_vec(vec![2.0, 0.3]), &opts).unwrap();
        let (big, small) = ((2.0 + 3f64.sqrt()).sqrt(), (2.0 - 3f64.sqrt()).sqrt());
        assert!((r.z[0] - big).abs() < 1e-10 && (r.z[1] - small).abs() < 1e-10, "{}", r.z);
        assert!(r.residual.amax() < 1e-12);
        assert!(r.iterations < 30);
    }

    #[test]
    fn hybrid_reports_best_iterate_without_a_root() {
        // x² + 1 has no real root; the best iterate approaches x = 0
        let f = |z: &DVector<f64>| shot(vec![z[0] * z[0] + 1.0]);
        match hybrid_solve(&f, DVector::from_vec(vec![3.0]), &SolverOptions::default()) {
            Err(RootFailure::NoConvergence(r)) => {
                assert!(r.residual[0] < 10.0);
                assert!(r.z[0].abs() < 3.0);
            }
            other => panic!("expected no convergence, got {other:?}"),
        }
    }

    #[test]
    fn hybrid_rejects_failed_start_and_flat_map() {
        let failed = |_: &DVector<f64>| Shot { residual: DVector::from_vec(vec![1.0]), failed: true };
        assert!(matches!(
            hybrid_solve(&failed, DVector::from_vec(vec![1.0]), &SolverOptions::default()),
            Err(RootFailure::NoConvergence(_))
        ));
        let flat = |_: &DVector<f64>| shot(vec![1.0, 2.0]);
        assert_eq!(
            hybrid_solve(&flat, DVector::from_vec(vec![1.0, 1.0]), &SolverOptions::default()),
            Err(RootFailure::SingularJacobian)
        );
    }
}
