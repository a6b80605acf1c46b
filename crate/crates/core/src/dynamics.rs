//! Equations of motion in local coordinates.
//!
//! The homotopy parameter λ₁ scales every term that the simplified
//! "order zero" model drops: thrust, gravity and the rotation of the NED
//! frame (Earth curvature). λ₁ = 1 is the full model, λ₁ = 0 the
//! drag-and-lift-only model, and intermediate values are the affine blend.

use serde::{Deserialize, Serialize};

use crate::charts::{ChartId, ChartState, COS_GUARD};
use crate::dual::{Dual, Scalar};
use crate::error::{GuidanceError, Result};
use crate::vehicle::VehicleModel;

/// Body axis expressed in the velocity frame of `chart` (w in chart A, z in chart B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalControl {
    pub chart: ChartId,
    pub u: [f64; 3],
}

impl LocalControl {
    pub fn new(chart: ChartId, u: [f64; 3]) -> Self {
        Self { chart, u }
    }

    /// Aligned with the velocity: zero angle of attack.
    pub fn axial(chart: ChartId) -> Self {
        Self::new(chart, [1.0, 0.0, 0.0])
    }

    /// sin² of the angle of attack.
    pub fn lateral2(&self) -> f64 {
        self.u[1] * self.u[1] + self.u[2] * self.u[2]
    }

    /// c₁ = −u₁ (must be ≤ 0).
    pub fn c1(&self) -> f64 {
        -self.u[0]
    }

    /// c₂ = (u₂² + u₃²)/sin²α_max − 1 (must be ≤ 0).
    pub fn c2(&self, sin_alpha_max: f64) -> f64 {
        self.lateral2() / (sin_alpha_max * sin_alpha_max) - 1.0
    }

    pub fn is_admissible(&self, sin_alpha_max: f64, tol: f64) -> bool {
        let norm = self.u.iter().map(|c| c * c).sum::<f64>();
        (norm - 1.0).abs() <= tol && self.c1() <= tol && self.c2(sin_alpha_max) <= tol
    }
}

fn guard<S: Scalar>(chart: ChartId, x: &[S; 6]) -> Result<()> {
    let c = x[4].re().cos();
    if c < COS_GUARD || x[1].re().cos() < COS_GUARD || !(x[0].re() > 0.0 && x[3].re() > 0.0) {
        return Err(GuidanceError::ChartSingularity {
            chart,
            detail: format!(
                "cos(ang1) = {:.3e}, cos(lat) = {:.3e}, r = {:.1}, v = {:.3}",
                c,
                x[1].re().cos(),
                x[0].re(),
                x[3].re()
            ),
        });
    }
    Ok(())
}

/// λ₁-blended vector field, generic over the scalar type so the same code
/// yields values (f64) and state Jacobians ([`Dual`]).
pub fn vector_field<S: Scalar>(
    model: &VehicleModel,
    t: f64,
    chart: ChartId,
    x: &[S; 6],
    u: &[f64; 3],
    lambda1: f64,
) -> Result<[S; 6]> {
    guard(chart, x)?;
    let [r, lat, _lon, v, a1, a2] = *x;
    let (d, cm) = model.aero_coeffs(t, r - model.rt);
    let g = model.gravity(r);
    let thrust = lambda1 * model.thrust_accel(t);
    let lateral = u[1] * u[1] + u[2] * u[2];
    let omega = v * cm + S::cst(thrust) / v;
    let drag = (d + cm * (model.eta * lateral)) * v * v;
    let (s1, c1) = (a1.sin(), a1.cos());
    let (s2, c2) = (a2.sin(), a2.cos());
    let v_r = v / r;
    let g_v = g / v;
    let tan_lat = lat.tan();
    let cos_lat = lat.cos();

    let f = match chart {
        ChartId::A => [
            v * s1,
            v_r * c1 * c2,
            v_r * c1 * s2 / cos_lat,
            -drag + thrust * u[0] - g * s1 * lambda1,
            omega * u[1] + (v_r - g_v) * c1 * lambda1,
            omega * u[2] / c1 + v_r * c1 * s2 * tan_lat * lambda1,
        ],
        ChartId::B => {
            let t1 = s1 / c1;
            [
                -(v * c1 * c2),
                v_r * c1 * s2,
                v_r * s1 / cos_lat,
                -drag + thrust * u[0] + g * c1 * c2 * lambda1,
                omega * u[1] + (v_r * s1 * (c2 + s2 * tan_lat) - g_v * s1 * c2) * lambda1,
                -(omega * u[2] / c1)
                    + (v_r * c1 * (s2 + t1 * t1 * (s2 - tan_lat * c2)) - g_v * s2 / c1) * lambda1,
            ]
        }
    };
    Ok(f)
}

fn check_tags(x: &ChartState, u: &LocalControl) -> Result<()> {
    if x.chart != u.chart {
        return Err(GuidanceError::ChartMismatch {
            expected: x.chart,
            found: u.chart,
        });
    }
    Ok(())
}

/// Full dynamics (thrust, gravity, curvature, drag, lift).
pub fn rhs_full(model: &VehicleModel, t: f64, x: &ChartState, u: &LocalControl) -> Result<[f64; 6]> {
    rhs_lambda(model, t, x, u, 1.0)
}

/// Order-zero dynamics: drag and lift only.
pub fn rhs_zero(model: &VehicleModel, t: f64, x: &ChartState, u: &LocalControl) -> Result<[f64; 6]> {
    rhs_lambda(model, t, x, u, 0.0)
}

/// Blend f₀ + λ₁ (f − f₀).
pub fn rhs_lambda(
    model: &VehicleModel,
    t: f64,
    x: &ChartState,
    u: &LocalControl,
    lambda1: f64,
) -> Result<[f64; 6]> {
    check_tags(x, u)?;
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(GuidanceError::InvalidInput(format!("lambda1 = {lambda1} outside [0, 1]")));
    }
    vector_field(model, t, x.chart, &x.coords(), &u.u, lambda1)
}

/// Vector field and its state Jacobian `jac[i][k] = ∂f_i/∂x_k`.
pub fn rhs_with_jacobian(
    model: &VehicleModel,
    t: f64,
    chart: ChartId,
    x: &[f64; 6],
    u: &[f64; 3],
    lambda1: f64,
) -> Result<([f64; 6], [[f64; 6]; 6])> {
    let seeded = Dual::<6>::seed(x);
    let f = vector_field(model, t, chart, &seeded, u, lambda1)?;
    Ok((f.map(|fi| fi.re), f.map(|fi| fi.eps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{lift, to_cartesian, transition, transition_control, transition_jacobian};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3, Vector6};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> VehicleModel {
        VehicleModel::default()
    }

    #[test]
    fn level_flight_after_burnout() {
        let m = model();
        let x = ChartState::new(ChartId::A, [m.rt + 2000.0, 0.01, 0.0, 600.0, 0.0, 0.0]);
        let f = rhs_full(&m, 25.0, &x, &LocalControl::axial(ChartId::A)).unwrap();
        let (d, _) = m.aero_coeffs(25.0, 2000.0);
        assert_eq!(f[0], 0.0);
        assert_relative_eq!(f[3], -d * 600.0 * 600.0, max_relative = 1e-14);
        assert_relative_eq!(f[1], 600.0 / x.r, max_relative = 1e-14);
    }

    #[test]
    fn order_zero_properties() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x = ChartState::new(
                ChartId::A,
                [
                    m.rt + rng.gen_range(0.0..10_000.0),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(100.0..1200.0),
                    rng.gen_range(-1.2..1.2),
                    rng.gen_range(-3.0..3.0),
                ],
            );
            let u = LocalControl::new(ChartId::A, [0.9, rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
            let f0 = rhs_zero(&m, rng.gen_range(0.0..30.0), &x, &u).unwrap();
            assert!(f0[3] <= 0.0);
            let axial = rhs_zero(&m, 5.0, &x, &LocalControl::axial(ChartId::A)).unwrap();
            assert_eq!(axial[4], 0.0);
            assert_eq!(axial[5], 0.0);
        }
    }

    #[test]
    fn order_zero_is_full_minus_dropped_terms() {
        let m = model();
        let t = 8.0;
        let x = ChartState::new(ChartId::A, [m.rt + 4000.0, 0.002, -0.001, 700.0, 0.3, -0.2]);
        let u = LocalControl::new(ChartId::A, [0.95, 0.2, -0.1]);
        let full = rhs_full(&m, t, &x, &u).unwrap();
        let zero = rhs_zero(&m, t, &x, &u).unwrap();
        let (_, cm) = m.aero_coeffs(t, 4000.0);
        let ft = m.thrust_accel(t);
        let g = m.gravity(x.r);
        let (sg, cg) = x.ang1.sin_cos();
        let (sx, cx) = x.ang2.sin_cos();
        let dropped = [
            0.0,
            0.0,
            0.0,
            ft * u.u[0] - g * sg,
            ft / x.v * u.u[1] + (x.v / x.r - g / x.v) * cg,
            ft / x.v * u.u[2] / cg + x.v / x.r * cg * sx * x.lat.tan(),
        ];
        for k in 0..6 {
            assert_relative_eq!(full[k] - zero[k], dropped[k], max_relative = 1e-9, epsilon = 1e-12);
        }
        assert_relative_eq!(zero[4], x.v * cm * u.u[1], max_relative = 1e-14);
        let _ = cx;
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let m = model();
        let x = ChartState::new(ChartId::B, [m.rt + 3000.0, 0.001, 0.0, 650.0, 0.2, 2.0]);
        let u = LocalControl::new(ChartId::B, [0.9, 0.3, 0.2]);
        let t = 4.0;
        let f0 = rhs_zero(&m, t, &x, &u).unwrap();
        let f1 = rhs_full(&m, t, &x, &u).unwrap();
        assert_eq!(rhs_lambda(&m, t, &x, &u, 0.0).unwrap(), f0);
        assert_eq!(rhs_lambda(&m, t, &x, &u, 1.0).unwrap(), f1);
        let mid = rhs_lambda(&m, t, &x, &u, 0.5).unwrap();
        let quarter = rhs_lambda(&m, t, &x, &u, 0.25).unwrap();
        for k in 0..6 {
            assert_relative_eq!(mid[k], 0.5 * (f0[k] + f1[k]), max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(quarter[k], 0.75 * f0[k] + 0.25 * f1[k], max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model();
        let x = ChartState::new(ChartId::A, [m.rt, 0.0, 0.0, 500.0, std::f64::consts::FRAC_PI_2, 0.0]);
        assert!(matches!(
            rhs_full(&m, 0.0, &x, &LocalControl::axial(ChartId::A)),
            Err(GuidanceError::ChartSingularity { .. })
        ));
        let x = ChartState::new(ChartId::A, [m.rt, 0.0, 0.0, 500.0, 0.0, 0.0]);
        assert!(matches!(
            rhs_full(&m, 0.0, &x, &LocalControl::axial(ChartId::B)),
            Err(GuidanceError::ChartMismatch { .. })
        ));
        assert!(rhs_lambda(&m, 0.0, &x, &LocalControl::axial(ChartId::A), 1.5).is_err());
    }

    #[test]
    fn speed_strictly_decreases_without_thrust() {
        let m = model();
        let u = LocalControl::axial(ChartId::A);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = ChartState::new(
                ChartId::A,
                [m.rt + rng.gen_range(0.0..8000.0), 0.0, 0.0, rng.gen_range(200.0..1000.0), rng.gen_range(0.0..1.2), 0.4],
            );
            // climbing or level: drag and gravity both oppose the motion
            assert!(rhs_full(&m, 30.0, &x, &u).unwrap()[3] < 0.0);
        }
    }

    /// Inertial acceleration of the physical model, written directly from
    /// the force balance (thrust, gravity, quadratic drag, linear lift).
    pub(crate) fn cartesian_acceleration(
        m: &VehicleModel,
        t: f64,
        pos: Vector3<f64>,
        vel: Vector3<f64>,
        axis: Vector3<f64>,
    ) -> Vector3<f64> {
        let r = pos.norm();
        let (d, cm) = m.aero_coeffs(t, r - m.rt);
        let v = vel.norm();
        let sin2 = axis.cross(&vel).norm_squared() / (v * v);
        axis * m.thrust_accel(t) - pos / r * m.gravity(r) - vel * ((d + m.eta * cm * sin2) * v)
            + vel.cross(&axis.cross(&vel)) * cm
    }

    fn body_axis(x: &ChartState, u: &[f64; 3]) -> Vector3<f64> {
        let ned = crate::charts::ned_frame(x.lat, x.lon);
        let vf = crate::charts::velocity_frame(x.chart, x.ang1, x.ang2);
        let rn = Matrix3::from_fn(|i, j| ned[i][j]);
        let rv = Matrix3::from_fn(|i, j| vf[i][j]);
        rn.transpose() * rv.transpose() * Vector3::from(*u)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> Option<ChartState> {
        let m = model();
        let chart = if rng.gen_bool(0.5) { ChartId::A } else { ChartId::B };
        let x = ChartState::new(
            chart,
            [
                m.rt + rng.gen_range(-500.0..15_000.0),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(150.0..1500.0),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-3.1..3.1),
            ],
        );
        transition(&x).ok().map(|_| x)
    }

    fn random_control(rng: &mut ChaCha8Rng, chart: ChartId, sin_a: f64) -> LocalControl {
        let rho = sin_a * rng.gen_range(0.0f64..1.0).sqrt();
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let (u2, u3) = (rho * ang.cos(), rho * ang.sin());
        LocalControl::new(chart, [(1.0 - rho * rho).sqrt(), u2, u3])
    }

    #[test]
    fn chart_dynamics_match_inertial_force_balance() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let Some(x) = random_state(&mut rng) else { continue };
            let u = random_control(&mut rng, x.chart, m.sin_alpha_max());
            let t = rng.gen_range(0.0..35.0);
            let f = rhs_full(&m, t, &x, &u).unwrap();
            // push the chart velocity field through the differential of the lift
            let seeded = Dual::<6>::seed(&x.coords());
            let (pos, vel) = lift(x.chart, &seeded);
            let fv = Vector6::from(f);
            let push = |c: &[Dual<6>; 3]| Vector3::from_fn(|i, _| Vector6::from(c[i].eps).dot(&fv));
            let rdot = push(&pos);
            let vdot = push(&vel);
            let cart = to_cartesian(&x).unwrap();
            let accel = cartesian_acceleration(&m, t, cart.position, cart.velocity, body_axis(&x, &u.u));
            assert!((rdot - cart.velocity).norm() <= 1e-9 * x.v, "{rdot} vs {}", cart.velocity);
            assert!(
                (vdot - accel).norm() <= 1e-9 * accel.norm().max(1.0),
                "chart {:?}: {vdot} vs {accel}",
                x.chart
            );
            checked += 1;
        }
    }

    #[test]
    fn both_charts_agree_for_every_lambda() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 1000 {
            let Some(x) = random_state(&mut rng) else { continue };
            let y = transition(&x).unwrap();
            let u = random_control(&mut rng, x.chart, m.sin_alpha_max());
            let uy = LocalControl::new(y.chart, transition_control(&x, &y, u.u));
            let lambda1 = rng.gen_range(0.0..=1.0);
            let t = rng.gen_range(0.0..35.0);
            let fx = rhs_lambda(&m, t, &x, &u, lambda1).unwrap();
            let fy = rhs_lambda(&m, t, &y, &uy, lambda1).unwrap();
            let pushed = transition_jacobian(&x).unwrap() * Vector6::from(fx);
            for k in 0..6 {
                assert!(
                    (pushed[k] - fy[k]).abs() <= 1e-9 * (1.0 + fy[k].abs()),
                    "component {k}: {} vs {}",
                    pushed[k],
                    fy[k]
                );
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(
            h in 0.0..10_000.0f64, v in 200.0..1200.0f64, a1 in -1.0..1.0f64, a2 in -3.0..3.0f64,
            lambda1 in 0.0..=1.0f64, t in 0.0..30.0f64, b in prop_oneof![Just(ChartId::A), Just(ChartId::B)],
        ) {
            let m = model();
            let x = [m.rt + h, 0.003, -0.002, v, a1, a2];
            let u = [0.95, 0.25, -0.18];
            let (_, jac) = rhs_with_jacobian(&m, t, b, &x, &u, lambda1).unwrap();
            let steps = [1e-1, 1e-6, 1e-6, 1e-4, 1e-6, 1e-6];
            for k in 0..6 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += steps[k];
                xm[k] -= steps[k];
                let fp = vector_field(&m, t, b, &xp, &u, lambda1).unwrap();
                let fm = vector_field(&m, t, b, &xm, &u, lambda1).unwrap();
                for i in 0..6 {
                    let fd = (fp[i] - fm[i]) / (2.0 * steps[k]);
                    prop_assert!((jac[i][k] - fd).abs() <= 1e-5 * fd.abs() + 1e-8,
                        "d f{} / d x{}: {} vs {}", i, k, jac[i][k], fd);
                }
            }
        }
    }
}
