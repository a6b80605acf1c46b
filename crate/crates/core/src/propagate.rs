//! Fixed-step integration of extremals (state and costate together) with
//! chart switching located inside the step where |γ| crosses the
//! switching angle.
//!
//! The time grid is split at the end of the motor burn so that the thrust
//! discontinuity always falls on a node. Keeping the split count fixed
//! while the final time varies keeps the discrete flow smooth in T.

use serde::{Deserialize, Serialize};

use crate::charts::{
    pullback_costate_within, transition_within, ChartId, ChartState, Costate, COS_GUARD,
    DEFAULT_SWITCH_ANGLE,
};
use crate::dynamics::{rhs_with_jacobian, LocalControl};
use crate::error::{GuidanceError, Result};
use crate::pmp::{costate_derivative, extract_control, ControlLaw, Regime};
use crate::vehicle::VehicleModel;

pub const DEFAULT_STEPS: usize = 320;
pub const MIN_STEPS: usize = 16;
const MAX_SWITCHES_PER_STEP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// Explicit midpoint rule.
    Rk2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub steps: usize,
    pub scheme: Scheme,
    /// |γ| beyond which chart B is used [rad].
    pub switch_angle: f64,
    pub law: ControlLaw,
    /// Store a sample at every node.
    pub record: bool,
    /// Steps spent before burnout; derived from the interval when `None`.
    pub burn_steps: Option<usize>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            scheme: Scheme::Rk4,
            switch_angle: DEFAULT_SWITCH_ANGLE,
            law: ControlLaw::Constrained,
            record: true,
            burn_steps: None,
        }
    }
}

impl PropagationOptions {
    /// Number of steps placed before burnout for the interval [t0, tf].
    pub fn split_for(&self, model: &VehicleModel, t0: f64, tf: f64) -> usize {
        let burn = model.t_burn;
        if tf <= burn || t0 >= burn {
            return if t0 >= burn { 0 } else { self.steps };
        }
        let frac = (burn - t0) / (tf - t0);
        ((self.steps as f64 * frac).round() as usize).clamp(1, self.steps - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub state: ChartState,
    pub costate: Costate,
    pub control: LocalControl,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: ChartId,
    pub to: ChartId,
    /// State and costate just before the transition, in chart `from`.
    pub state_before: ChartState,
    pub costate_before: Costate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalTrajectory {
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub final_time: f64,
    pub final_state: ChartState,
    pub final_costate: Costate,
    /// Stage evaluations that fell on the nonregular branch.
    pub nonregular_count: usize,
}

impl ExtremalTrajectory {
    pub fn max_c1(&self) -> f64 {
        self.samples.iter().map(|s| s.control.c1()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_c2(&self, sin_alpha_max: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| s.control.c2(sin_alpha_max))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Largest angle at which a chart is still usable for a forced transition.
pub fn hard_limit() -> f64 {
    COS_GUARD.acos()
}

type Augmented = [f64; 12];

struct Field<'a> {
    model: &'a VehicleModel,
    lambda1: f64,
    law: ControlLaw,
    nonregular: usize,
}

impl Field<'_> {
    fn eval(&mut self, t: f64, chart: ChartId, y: &Augmented) -> Result<Augmented> {
        let (x, p) = split(chart, y);
        let (u, regime) = extract_control(self.model, t, &x, &p, self.lambda1, self.law)?;
        if regime == Regime::Nonregular {
            self.nonregular += 1;
        }
        let (f, jac) = rhs_with_jacobian(self.model, t, chart, &x.coords(), &u.u, self.lambda1)?;
        let pd = costate_derivative(&p.p, &jac);
        let mut out = [0.0; 12];
        out[..6].copy_from_slice(&f);
        out[6..].copy_from_slice(&pd);
        Ok(out)
    }

    fn sample(&self, t: f64, chart: ChartId, y: &Augmented) -> Result<Sample> {
        let (x, p) = split(chart, y);
        let (u, _) = extract_control(self.model, t, &x, &p, self.lambda1, self.law)?;
        let hamiltonian = crate::pmp::hamiltonian(self.model, t, &x, &p, &u, self.lambda1)?;
        Ok(Sample { t, state: x, costate: p, control: u, hamiltonian })
    }

    fn step(&mut self, scheme: Scheme, t: f64, h: f64, chart: ChartId, y: &Augmented) -> Result<Augmented> {
        let axpy = |a: &Augmented, s: f64, b: &Augmented| -> Augmented { std::array::from_fn(|i| a[i] + s * b[i]) };
        match scheme {
            Scheme::Rk4 => {
                let k1 = self.eval(t, chart, y)?;
                let k2 = self.eval(t + 0.5 * h, chart, &axpy(y, 0.5 * h, &k1))?;
                let k3 = self.eval(t + 0.5 * h, chart, &axpy(y, 0.5 * h, &k2))?;
                let k4 = self.eval(t + h, chart, &axpy(y, h, &k3))?;
                Ok(std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
            }
            Scheme::Rk2 => {
                let k1 = self.eval(t, chart, y)?;
                let k2 = self.eval(t + 0.5 * h, chart, &axpy(y, 0.5 * h, &k1))?;
                Ok(axpy(y, h, &k2))
            }
        }
    }
}

fn split(chart: ChartId, y: &Augmented) -> (ChartState, Costate) {
    let x = ChartState::new(chart, y[..6].try_into().expect("six state components"));
    let p = Costate::new(chart, y[6..].try_into().expect("six costate components"));
    (x, p)
}

fn join(x: &ChartState, p: &Costate) -> Augmented {
    let mut y = [0.0; 12];
    y[..6].copy_from_slice(&x.coords());
    y[6..].copy_from_slice(&p.p);
    y
}

/// Moves (x, p) to the other chart, choosing the new `ang2` branch near `reference`.
fn change_chart(x: &ChartState, p: &Costate, reference: Option<f64>) -> Result<(ChartState, Costate)> {
    let limit = hard_limit();
    let y = transition_within(x, limit, reference)?;
    let q = pullback_costate_within(x, p, limit)?;
    Ok((y, q))
}

/// Signed distance to the switching surface: positive once the current
/// chart should be left. Chart A is used while |γ| stays below the
/// switching angle and chart B beyond it, so the chart is a function of
/// the state and grazing trajectories spend a vanishing time in chart B.
fn switching(chart: ChartId, y: &Augmented, angle: f64) -> f64 {
    match chart {
        ChartId::A => y[4].abs() - angle,
        ChartId::B => angle - (y[4].cos() * y[5].cos()).abs().min(1.0).asin(),
    }
}

/// Fraction of a step at which the switching function crosses zero
/// (Illinois variant of regula falsi on [0, 1]).
fn locate_crossing<F>(field: &mut Field, g_lo: f64, g_hi: f64, y_hi: Augmented, mut excess: F) -> Result<(f64, Augmented)>
where
    F: FnMut(&mut Field, f64) -> Result<(f64, Augmented)>,
{
    let (mut lo, mut glo) = (0.0f64, g_lo);
    let (mut hi, mut ghi, mut yhi) = (1.0f64, g_hi, y_hi);
    let mut side = 0;
    for _ in 0..100 {
        let theta = ((lo * ghi - hi * glo) / (ghi - glo)).clamp(lo, hi);
        let (g, y) = excess(field, theta)?;
        if g.abs() <= 1e-15 || hi - lo <= 1e-15 {
            return Ok((theta, y));
        }
        if g > 0.0 {
            (hi, ghi, yhi) = (theta, g, y);
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        } else {
            (lo, glo) = (theta, g);
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        }
    }
    Ok((hi, yhi))
}

/// Integrates an extremal from (x0, p0) at t0 to tf with the fourth-order scheme
/// (or whichever scheme `opts` selects).
pub fn propagate(
    model: &VehicleModel,
    x0: &ChartState,
    p0: &Costate,
    t0: f64,
    tf: f64,
    lambda1: f64,
    opts: &PropagationOptions,
) -> Result<ExtremalTrajectory> {
    if x0.chart != p0.chart {
        return Err(GuidanceError::ChartMismatch { expected: x0.chart, found: p0.chart });
    }
    if opts.steps < MIN_STEPS {
        return Err(GuidanceError::InvalidInput(format!("at least {MIN_STEPS} steps are required")));
    }
    if !(tf >= t0) || !t0.is_finite() || !tf.is_finite() {
        return Err(GuidanceError::InvalidInput(format!("invalid interval [{t0}, {tf}]")));
    }
    x0.check_domain()?;

    let mut field = Field { model, lambda1, law: opts.law, nonregular: 0 };
    let mut chart = x0.chart;
    let mut y = join(x0, p0);
    let mut samples = Vec::new();
    let mut switches = Vec::new();
    let mut last_ang2: [Option<f64>; 2] = [None, None];
    let slot = |c: ChartId| match c {
        ChartId::A => 0,
        ChartId::B => 1,
    };
    last_ang2[slot(chart)] = Some(x0.ang2);

    if opts.record {
        samples.push(field.sample(t0, chart, &y)?);
    }

    let burn = model.t_burn;
    let n1 = opts.burn_steps.unwrap_or_else(|| opts.split_for(model, t0, tf));
    let phases = if tf <= burn || t0 >= burn {
        vec![(t0, tf, if t0 >= burn { opts.steps } else { n1.max(1) }, t0 >= burn)]
    } else {
        let n1 = n1.clamp(1, opts.steps - 1);
        vec![(t0, burn, n1, false), (burn, tf, opts.steps - n1, true)]
    };
    // first instant strictly after burnout, so coasting stages see no thrust
    let after_burn = burn + burn.abs() * f64::EPSILON;

    let eval_time = |t: f64, coasting: bool| if coasting { t.max(after_burn) } else { t };

    let mut t = t0;
    for (a, b, n, coasting) in phases {
        if b <= a {
            continue;
        }
        let h = (b - a) / n as f64;
        for k in 0..n {
            let ts = a + k as f64 * h;
            let t_end = if k + 1 == n { b } else { a + (k + 1) as f64 * h };
            if switching(chart, &y, opts.switch_angle) > 0.0 {
                // already past the switching surface at the node
                let (x, p) = split(chart, &y);
                let (xn, pn) = change_chart(&x, &p, last_ang2[slot(chart.other())])?;
                switches.push(SwitchEvent { t: ts, from: chart, to: xn.chart, state_before: x, costate_before: p });
                chart = xn.chart;
                y = join(&xn, &pn);
                last_ang2[slot(chart)] = Some(y[5]);
            }
            let mut t_cur = ts;
            for _ in 0..MAX_SWITCHES_PER_STEP {
                let hs = t_end - t_cur;
                let next = match field.step(opts.scheme, eval_time(t_cur, coasting), hs, chart, &y) {
                    Ok(next) => next,
                    Err(GuidanceError::ChartSingularity { .. }) => {
                        // the step left the chart: retry from the other one
                        let (x, p) = split(chart, &y);
                        let (xn, pn) = change_chart(&x, &p, last_ang2[slot(chart.other())])?;
                        switches.push(SwitchEvent { t: t_cur, from: chart, to: xn.chart, state_before: x, costate_before: p });
                        chart = xn.chart;
                        y = join(&xn, &pn);
                        field.step(opts.scheme, eval_time(t_cur, coasting), hs, chart, &y)?
                    }
                    Err(e) => return Err(e),
                };
                let g_hi = switching(chart, &next, opts.switch_angle);
                if g_hi <= 0.0 {
                    y = next;
                    break;
                }
                // locate the crossing inside the step so that the switch time
                // depends smoothly on the initial data
                let g_lo = switching(chart, &y, opts.switch_angle).min(-f64::MIN_POSITIVE);
                let y_start = y;
                let excess = |field: &mut Field, theta: f64| -> Result<(f64, Augmented)> {
                    let yc = field.step(opts.scheme, eval_time(t_cur, coasting), theta * hs, chart, &y_start)?;
                    Ok((switching(chart, &yc, opts.switch_angle), yc))
                };
                let (theta, yc) = locate_crossing(&mut field, g_lo, g_hi, next, excess)?;
                let tc = t_cur + theta * hs;
                let (x, p) = split(chart, &yc);
                let (xn, pn) = change_chart(&x, &p, last_ang2[slot(chart.other())])?;
                switches.push(SwitchEvent { t: tc, from: chart, to: xn.chart, state_before: x, costate_before: p });
                chart = xn.chart;
                y = join(&xn, &pn);
                last_ang2[slot(chart)] = Some(y[5]);
                if opts.record {
                    samples.push(field.sample(eval_time(tc, coasting), chart, &y)?);
                    samples.last_mut().expect("just pushed").t = tc;
                }
                t_cur = tc;
                if t_cur >= t_end {
                    break;
                }
            }
            t = t_end;
            if opts.record {
                samples.push(field.sample(eval_time(t, coasting), chart, &y)?);
                samples.last_mut().expect("just pushed").t = t;
            }
            last_ang2[slot(chart)] = Some(y[5]);
        }
    }

    let (final_state, final_costate) = split(chart, &y);
    Ok(ExtremalTrajectory {
        samples,
        switches,
        final_time: t,
        final_state,
        final_costate,
        nonregular_count: field.nonregular,
    })
}

/// Midpoint-rule variant used by the fixed-time comparison harness.
pub fn propagate_rk2(
    model: &VehicleModel,
    x0: &ChartState,
    p0: &Costate,
    t0: f64,
    tf: f64,
    lambda1: f64,
    opts: &PropagationOptions,
) -> Result<ExtremalTrajectory> {
    let opts = PropagationOptions { scheme: Scheme::Rk2, ..*opts };
    propagate(model, x0, p0, t0, tf, lambda1, &opts)
}

/// Final (state, costate) in chart A, transitioning if the trajectory ended in chart B.
pub fn final_in_chart_a(traj: &ExtremalTrajectory, reference: f64) -> Result<(ChartState, Costate)> {
    match traj.final_state.chart {
        ChartId::A => Ok((traj.final_state, traj.final_costate)),
        ChartId::B => change_chart(&traj.final_state, &traj.final_costate, Some(reference)),
    }
}
