//! Maximum-principle machinery: Hamiltonian, costate equations, extraction
//! of the maximizing control, and terminal conditions.
//!
//! The normal case p⁰ = −1 is assumed throughout. The cost is
//! g = λ₁ C₁ T − ‖v(T)‖², so the order-zero problem maximizes the final
//! speed and the time weight is switched on together with the full model.

use serde::{Deserialize, Serialize};

use crate::charts::{wrap_pi, ChartId, ChartState, Costate};
use crate::dynamics::{rhs_with_jacobian, vector_field, LocalControl};
use crate::error::{GuidanceError, Result};
use crate::vehicle::VehicleModel;

/// Relative threshold below which (λ, ρ) counts as vanishing.
pub const EPS_REGULAR: f64 = 1e-8;
/// |p_v| below this on a nonregular arc contradicts normality.
pub const EPS_PV: f64 = 1e-9;

/// Coefficients of the control-dependent part of the Hamiltonian,
/// C w₁ − D (w₂² + w₃²) + λ w₂ + ρ w₃.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCoeffs {
    pub c: f64,
    pub d: f64,
    pub lam: f64,
    pub rho: f64,
}

impl ControlCoeffs {
    pub fn compute(model: &VehicleModel, t: f64, x: &ChartState, p: &Costate, lambda1: f64) -> Result<Self> {
        check_pair(x, p)?;
        let c1 = x.ang1.cos();
        if c1 < crate::charts::COS_GUARD {
            return Err(GuidanceError::ChartSingularity {
                chart: x.chart,
                detail: format!("cos(ang1) = {c1:.3e} in control extraction"),
            });
        }
        let (_, cm) = model.aero_coeffs(t, x.r - model.rt);
        let thrust = lambda1 * model.thrust_accel(t);
        let omega = thrust / x.v + x.v * cm;
        let pv = p.p[3];
        let rho = match x.chart {
            ChartId::A => p.p[5] * omega / c1,
            ChartId::B => -p.p[5] * omega / c1,
        };
        Ok(Self {
            c: pv * thrust,
            d: pv * model.eta * cm * x.v * x.v,
            lam: p.p[4] * omega,
            rho,
        })
    }

    pub fn angular_norm(&self) -> f64 {
        self.lam.hypot(self.rho)
    }
}

/// How the lateral control is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// Angle of attack limited to α_max (the physical problem).
    #[default]
    Constrained,
    /// (w₂, w₃) ∈ ℝ², only meaningful for the order-zero model.
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Regular,
    Nonregular,
}

/// Which end values the problem fixes: free final time or a given T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Free,
    Fixed(f64),
}

/// Target point in mission coordinates (r − r_T, L·r_T, l·r_T, γ, χ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPoint {
    pub altitude: f64,
    pub downrange: f64,
    pub crossrange: f64,
    pub gamma: f64,
    pub chi: f64,
}

impl TargetPoint {
    pub fn new(altitude: f64, downrange: f64, crossrange: f64, gamma: f64, chi: f64) -> Self {
        Self { altitude, downrange, crossrange, gamma, chi }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.altitude, self.downrange, self.crossrange, self.gamma, self.chi]
    }

    pub fn lerp(&self, other: &TargetPoint, s: f64) -> TargetPoint {
        let a = self.as_array();
        let b = other.as_array();
        let m: [f64; 5] = std::array::from_fn(|k| (1.0 - s) * a[k] + s * b[k]);
        TargetPoint::new(m[0], m[1], m[2], m[3], m[4])
    }
}

/// Terminal manifold, cost weight and time mode of an interception problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    /// Order-zero target M₀ (reached at λ₂ = 0).
    pub order_zero: TargetPoint,
    /// Mission target M (reached at λ₂ = 1).
    pub target: TargetPoint,
    /// Final-time weight C₁ [1/s].
    pub c1: f64,
    pub time_mode: TimeMode,
    /// Reference speed for the transversality residual (initial speed).
    pub v_ref: f64,
    /// Scale of the free-time Hamiltonian residual [m²/s³].
    pub h_scale: f64,
}

/// Scale of position residuals [1/m].
pub const POSITION_SCALE: f64 = 1e-4;

impl TerminalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            return Err(GuidanceError::InvalidInput(format!("c1 must be >= 0 (got {})", self.c1)));
        }
        if !(self.v_ref > 0.0 && self.h_scale > 0.0) {
            return Err(GuidanceError::InvalidInput("residual scales must be positive".into()));
        }
        for tp in [&self.order_zero, &self.target] {
            if !(tp.gamma.abs() < std::f64::consts::FRAC_PI_2) {
                return Err(GuidanceError::InvalidInput(format!("target gamma {} outside (-pi/2, pi/2)", tp.gamma)));
            }
        }
        if let TimeMode::Fixed(t) = self.time_mode {
            if !(t > 0.0) {
                return Err(GuidanceError::InvalidInput(format!("fixed final time must be positive (got {t})")));
            }
        }
        Ok(())
    }

    /// Target blended at λ₂ in chart-A coordinates.
    pub fn target_at(&self, lambda2: f64) -> TargetPoint {
        self.order_zero.lerp(&self.target, lambda2)
    }

    pub fn residual_dim(&self) -> usize {
        match self.time_mode {
            TimeMode::Free => 7,
            TimeMode::Fixed(_) => 6,
        }
    }
}

fn check_pair(x: &ChartState, p: &Costate) -> Result<()> {
    if x.chart != p.chart {
        return Err(GuidanceError::ChartMismatch { expected: x.chart, found: p.chart });
    }
    Ok(())
}

/// H = p · f_λ(t, x, u).
pub fn hamiltonian(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    u: &LocalControl,
    lambda1: f64,
) -> Result<f64> {
    check_pair(x, p)?;
    let f = crate::dynamics::rhs_lambda(model, t, x, u, lambda1)?;
    Ok(crate::charts::pairing(&p.p, &f))
}

/// ṗ = −(∂f_λ/∂x)ᵀ p at fixed control.
pub fn adjoint_rhs(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    u: &LocalControl,
    lambda1: f64,
) -> Result<[f64; 6]> {
    check_pair(x, p)?;
    if u.chart != x.chart {
        return Err(GuidanceError::ChartMismatch { expected: x.chart, found: u.chart });
    }
    let (_, jac) = rhs_with_jacobian(model, t, x.chart, &x.coords(), &u.u, lambda1)?;
    Ok(costate_derivative(&p.p, &jac))
}

pub(crate) fn costate_derivative(p: &[f64; 6], jac: &[[f64; 6]; 6]) -> [f64; 6] {
    std::array::from_fn(|k| -(0..6).map(|i| p[i] * jac[i][k]).sum::<f64>())
}

/// Costate magnitude with the angular position components made comparable
/// to the radial one (p_L, p_l are per radian, so divide by r).
fn costate_scale(x: &ChartState, p: &Costate) -> f64 {
    let q = [p.p[0], p.p[1] / x.r, p.p[2] / x.r, p.p[3], p.p[4], p.p[5]];
    q.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Maximizer of the reduced Hamiltonian on the regular set, using the
/// small-angle form w₁ ≈ 1 − (w₂² + w₃²)/2 for the thrust term.
pub fn regular_control(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    lambda1: f64,
) -> Result<LocalControl> {
    let k = ControlCoeffs::compute(model, t, x, p, lambda1)?;
    let n = k.angular_norm();
    if n < EPS_REGULAR * (1.0 + costate_scale(x, p)) {
        return Err(GuidanceError::NonregularRegime { norm: n });
    }
    Ok(regular_from_coeffs(x.chart, &k, model.sin_alpha_max()))
}

/// Closed-form maximizer of C(1 − s²/2) − D s² + n s over s ∈ [0, sin α_max],
/// applied along the direction of (λ, ρ).
pub fn regular_from_coeffs(chart: ChartId, k: &ControlCoeffs, sin_a: f64) -> LocalControl {
    let n = k.angular_norm();
    let curvature = k.c + 2.0 * k.d;
    let s = if curvature > 0.0 { (n / curvature).min(sin_a) } else { sin_a };
    let (u2, u3) = (s * k.lam / n, s * k.rho / n);
    LocalControl::new(chart, [(1.0 - s * s).sqrt(), u2, u3])
}

/// Control on a nonregular arc (λ = ρ = 0).
pub fn nonregular_control(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    lambda1: f64,
) -> Result<LocalControl> {
    let k = ControlCoeffs::compute(model, t, x, p, lambda1)?;
    let pv = p.p[3];
    if pv.abs() < EPS_PV {
        return Err(GuidanceError::DegenerateCostate { p_v: pv });
    }
    if x.v < model.assumption3_bound(t, x) {
        log::warn!(
            "nonregular arc at t = {t:.3} with v = {:.1} below the speed bound {:.1}",
            x.v,
            model.assumption3_bound(t, x)
        );
    }
    if k.c > 0.0 || (k.c == 0.0 && k.d > 0.0) {
        Ok(LocalControl::axial(x.chart))
    } else {
        Err(GuidanceError::UnsupportedNonregularArc { c: k.c, d: k.d })
    }
}

/// Maximizing control for the given law, together with the regime it came from.
pub fn extract_control(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    lambda1: f64,
    law: ControlLaw,
) -> Result<(LocalControl, Regime)> {
    let k = ControlCoeffs::compute(model, t, x, p, lambda1)?;
    let n = k.angular_norm();
    let threshold = EPS_REGULAR * (1.0 + costate_scale(x, p));
    if n < threshold {
        if n > 0.0 {
            log::debug!("control dichotomy boundary: |(lam, rho)| = {n:.3e} <= {threshold:.3e}");
        }
        return Ok((nonregular_control(model, t, x, p, lambda1)?, Regime::Nonregular));
    }
    let u = match law {
        ControlLaw::Constrained => regular_from_coeffs(x.chart, &k, model.sin_alpha_max()),
        ControlLaw::Unconstrained => unconstrained_from_coeffs(x.chart, &k, lambda1)?,
    };
    Ok((u, Regime::Regular))
}

/// Stationary point of −D(w₂² + w₃²) + λ w₂ + ρ w₃ (order-zero law).
fn unconstrained_from_coeffs(chart: ChartId, k: &ControlCoeffs, lambda1: f64) -> Result<LocalControl> {
    if lambda1 != 0.0 {
        return Err(GuidanceError::InvalidInput(
            "the unconstrained control law only applies to the order-zero model".into(),
        ));
    }
    if !(k.d > 0.0) {
        return Err(GuidanceError::UnboundedControl { d: k.d });
    }
    let (u2, u3) = (k.lam / (2.0 * k.d), k.rho / (2.0 * k.d));
    let u1 = (1.0 - u2 * u2 - u3 * u3).max(0.0).sqrt();
    Ok(LocalControl::new(chart, [u1, u2, u3]))
}

/// max_u H at (t, x, p).
pub fn max_hamiltonian(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    p: &Costate,
    lambda1: f64,
    law: ControlLaw,
) -> Result<f64> {
    let (u, _) = extract_control(model, t, x, p, lambda1, law)?;
    let f = vector_field(model, t, x.chart, &x.coords(), &u.u, lambda1)?;
    Ok(crate::charts::pairing(&p.p, &f))
}

/// Terminal residuals at homotopy point (λ₁, λ₂); `x_t` and `p_t` must be in chart A.
///
/// Order: altitude, downrange, crossrange, γ, χ, speed transversality and,
/// in free-time mode, the Hamiltonian condition H(T) = λ₁ C₁.
#[allow(clippy::too_many_arguments)]
pub fn terminal_residuals(
    model: &VehicleModel,
    x_t: &ChartState,
    p_t: &Costate,
    t_final: f64,
    lambda: (f64, f64),
    spec: &TerminalSpec,
    law: ControlLaw,
) -> Result<Vec<f64>> {
    if x_t.chart != ChartId::A {
        return Err(GuidanceError::ChartMismatch { expected: ChartId::A, found: x_t.chart });
    }
    check_pair(x_t, p_t)?;
    let (lambda1, lambda2) = lambda;
    let m = spec.target_at(lambda2);
    let rt = model.rt;
    let mut res = vec![
        (x_t.r - rt - m.altitude) * POSITION_SCALE,
        (x_t.lat * rt - m.downrange) * POSITION_SCALE,
        (x_t.lon * rt - m.crossrange) * POSITION_SCALE,
        x_t.ang1 - m.gamma,
        wrap_pi(x_t.ang2 - m.chi),
        (p_t.p[3] - 2.0 * x_t.v) / (2.0 * spec.v_ref),
    ];
    if spec.time_mode == TimeMode::Free {
        let h = max_hamiltonian(model, t_final, x_t, p_t, lambda1, law)?;
        res.push((h - lambda1 * spec.c1) / spec.h_scale);
    }
    Ok(res)
}
