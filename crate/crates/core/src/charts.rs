//! The two local charts of the (position, velocity) manifold.
//!
//! Both charts use geocentric spherical position (r, L, l) and speed v.
//! They differ in how the velocity direction is parametrized relative to
//! the North-East-Down frame:
//!
//! * chart A: path angle γ and azimuth χ, singular for vertical flight;
//! * chart B: angles θ and φ, singular for purely east/west flight.
//!
//! The transition between them touches only the two direction angles, so
//! its Jacobian is the identity on (r, L, l, v) and a 2×2 block on the
//! angles. Costates move between charts by the transpose of the inverse
//! transition Jacobian, which keeps the Hamiltonian unchanged.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dual::Scalar;
use crate::error::{GuidanceError, Result};

/// Chart A becomes unusable past this path angle, chart B past this θ.
pub const OVERLAP_LIMIT: f64 = 7.0 * PI / 18.0;
/// Default switch trigger (60°), below [`OVERLAP_LIMIT`].
pub const DEFAULT_SWITCH_ANGLE: f64 = PI / 3.0;
/// Smallest cos(ang1) the chart equations accept.
pub const COS_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartId {
    A,
    B,
}

impl ChartId {
    pub fn other(self) -> ChartId {
        match self {
            ChartId::A => ChartId::B,
            ChartId::B => ChartId::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ChartId::A => "A",
            ChartId::B => "B",
        }
    }
}

/// Local coordinates of a (position, velocity) pair.
///
/// `ang1`/`ang2` are (γ, χ) in chart A and (θ, φ) in chart B. `ang2` and
/// `lon` are tracked continuously rather than wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartState {
    pub chart: ChartId,
    pub r: f64,
    pub lat: f64,
    pub lon: f64,
    pub v: f64,
    pub ang1: f64,
    pub ang2: f64,
}

impl ChartState {
    pub fn new(chart: ChartId, coords: [f64; 6]) -> Self {
        let [r, lat, lon, v, ang1, ang2] = coords;
        Self { chart, r, lat, lon, v, ang1, ang2 }
    }

    pub fn coords(&self) -> [f64; 6] {
        [self.r, self.lat, self.lon, self.v, self.ang1, self.ang2]
    }

    /// Whether the singular angle of this chart is below `limit`.
    pub fn within(&self, limit: f64) -> bool {
        self.ang1.abs() < limit
    }

    pub fn check_domain(&self) -> Result<()> {
        if !(self.r > 0.0 && self.v > 0.0) {
            return Err(GuidanceError::InvalidInput(format!(
                "r and v must be positive (r = {}, v = {})",
                self.r, self.v
            )));
        }
        if self.ang1.cos() < COS_GUARD || self.lat.cos() < COS_GUARD {
            return Err(singular(self.chart, self.ang1));
        }
        Ok(())
    }
}

/// Inertial position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Costate in the coordinates of one chart, ordered like [`ChartState::coords`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costate {
    pub chart: ChartId,
    pub p: [f64; 6],
}

impl Costate {
    pub fn new(chart: ChartId, p: [f64; 6]) -> Self {
        Self { chart, p }
    }
}

fn singular(chart: ChartId, ang1: f64) -> GuidanceError {
    GuidanceError::ChartSingularity {
        chart,
        detail: format!("singular angle {:.6} rad", ang1),
    }
}

/// Shifts `angle` by a multiple of 2π so that it lies within π of `reference`.
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    let mut a = angle - ((angle - reference) / TAU).trunc() * TAU;
    while a - reference > PI {
        a -= TAU;
    }
    while a - reference < -PI {
        a += TAU;
    }
    a
}

/// Wraps an angle difference into (-π, π].
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// North-East-Down unit vectors (e_L, e_l, e_r) in the inertial frame.
pub fn ned_frame<S: Scalar>(lat: S, lon: S) -> [[S; 3]; 3] {
    let (sl, cl) = (lat.sin(), lat.cos());
    let (so, co) = (lon.sin(), lon.cos());
    [
        [-(sl * co), -(sl * so), cl],
        [-so, co, S::cst(0.0)],
        [-(cl * co), -(cl * so), -sl],
    ]
}

/// Velocity frame rows (i, j, k) in NED components for the given chart.
pub fn velocity_frame<S: Scalar>(chart: ChartId, a1: S, a2: S) -> [[S; 3]; 3] {
    let (s1, c1) = (a1.sin(), a1.cos());
    let (s2, c2) = (a2.sin(), a2.cos());
    let zero = S::cst(0.0);
    match chart {
        ChartId::A => [
            [c1 * c2, c1 * s2, -s1],
            [-(s1 * c2), -(s1 * s2), -c1],
            [-s2, c2, zero],
        ],
        ChartId::B => [
            [c1 * s2, s1, c1 * c2],
            [-(s1 * s2), c1, -(s1 * c2)],
            [-c2, zero, s2],
        ],
    }
}

/// Cartesian lift of chart coordinates, generic so it can be differentiated.
pub fn lift<S: Scalar>(chart: ChartId, x: &[S; 6]) -> ([S; 3], [S; 3]) {
    let [r, lat, lon, v, a1, a2] = *x;
    let ned = ned_frame(lat, lon);
    let dir = velocity_frame(chart, a1, a2)[0];
    let mut pos = [S::cst(0.0); 3];
    let mut vel = [S::cst(0.0); 3];
    for k in 0..3 {
        pos[k] = -(r * ned[2][k]);
        vel[k] = v * (dir[0] * ned[0][k] + dir[1] * ned[1][k] + dir[2] * ned[2][k]);
    }
    (pos, vel)
}

pub fn to_cartesian(x: &ChartState) -> Result<CartesianState> {
    if x.ang1.cos() < COS_GUARD {
        return Err(singular(x.chart, x.ang1));
    }
    let (p, v) = lift(x.chart, &x.coords());
    Ok(CartesianState {
        position: Vector3::from(p),
        velocity: Vector3::from(v),
    })
}

/// Inverse of [`to_cartesian`]; `ang2` is taken on the branch nearest `reference`.
pub fn from_cartesian(chart: ChartId, s: &CartesianState, reference: f64) -> Result<ChartState> {
    let r = s.position.norm();
    let v = s.velocity.norm();
    if r <= 0.0 || v <= 0.0 {
        return Err(GuidanceError::InvalidInput("zero position or velocity".into()));
    }
    let lat = (s.position.z / r).asin();
    let lon = s.position.y.atan2(s.position.x);
    let ned = ned_frame(lat, lon);
    let dir = s.velocity / v;
    let n: [f64; 3] = std::array::from_fn(|k| Vector3::from(ned[k]).dot(&dir));
    let (a1, a2) = match chart {
        ChartId::A => ((-n[2]).clamp(-1.0, 1.0).asin(), n[1].atan2(n[0])),
        ChartId::B => (n[1].clamp(-1.0, 1.0).asin(), n[0].atan2(n[2])),
    };
    if a1.cos() < COS_GUARD {
        return Err(singular(chart, a1));
    }
    Ok(ChartState {
        chart,
        r,
        lat,
        lon,
        v,
        ang1: a1,
        ang2: unwrap_near(a2, reference),
    })
}

/// Image of the direction angles in the other chart, principal branch.
fn transition_angles(chart: ChartId, a1: f64, a2: f64) -> (f64, f64) {
    let (s1, c1) = a1.sin_cos();
    let (s2, c2) = a2.sin_cos();
    match chart {
        // θ = asin(cosγ sinχ), φ from cosθ sinφ = cosγ cosχ, cosθ cosφ = −sinγ
        ChartId::A => ((c1 * s2).clamp(-1.0, 1.0).asin(), (c1 * c2).atan2(-s1)),
        // γ = asin(−cosθ cosφ), χ from cosγ cosχ = cosθ sinφ, cosγ sinχ = sinθ
        ChartId::B => ((-c1 * c2).clamp(-1.0, 1.0).asin(), s1.atan2(c1 * s2)),
    }
}

/// Changes chart, requiring both charts to be within [`OVERLAP_LIMIT`].
pub fn transition(x: &ChartState) -> Result<ChartState> {
    transition_within(x, OVERLAP_LIMIT, None)
}

/// Changes chart with an explicit overlap bound and an optional reference
/// for the new `ang2` branch.
pub fn transition_within(x: &ChartState, limit: f64, reference: Option<f64>) -> Result<ChartState> {
    if !x.within(limit) {
        return Err(singular(x.chart, x.ang1));
    }
    let (b1, b2) = transition_angles(x.chart, x.ang1, x.ang2);
    let target = x.chart.other();
    if b1.abs() >= limit {
        return Err(singular(target, b1));
    }
    let b2 = match reference {
        Some(r) => unwrap_near(b2, r),
        None => b2,
    };
    Ok(ChartState {
        chart: target,
        ang1: b1,
        ang2: b2,
        ..*x
    })
}

/// Jacobian of the direction-angle map (new angles w.r.t. old angles).
fn angle_jacobian(chart: ChartId, a1: f64, a2: f64) -> [[f64; 2]; 2] {
    let (s1, c1) = a1.sin_cos();
    let (s2, c2) = a2.sin_cos();
    match chart {
        ChartId::A => {
            // cos²θ = sin²γ + cos²γ cos²χ
            let ct2 = s1 * s1 + c1 * c1 * c2 * c2;
            let ct = ct2.sqrt();
            [[-s1 * s2 / ct, c1 * c2 / ct], [c2 / ct2, s1 * c1 * s2 / ct2]]
        }
        ChartId::B => {
            // cos²γ = sin²θ + cos²θ sin²φ
            let cg2 = s1 * s1 + c1 * c1 * s2 * s2;
            let cg = cg2.sqrt();
            [[s1 * c2 / cg, c1 * s2 / cg], [s2 / cg2, -s1 * c1 * c2 / cg2]]
        }
    }
}

/// Jacobian of the transition map at `x`, in the order of [`ChartState::coords`].
pub fn transition_jacobian(x: &ChartState) -> Result<Matrix6<f64>> {
    transition(x)?;
    let j = angle_jacobian(x.chart, x.ang1, x.ang2);
    let mut m = Matrix6::identity();
    m[(4, 4)] = j[0][0];
    m[(4, 5)] = j[0][1];
    m[(5, 4)] = j[1][0];
    m[(5, 5)] = j[1][1];
    Ok(m)
}

/// Moves a costate to the other chart so that ⟨p, ẋ⟩ is preserved.
pub fn pullback_costate(x: &ChartState, p: &Costate) -> Result<Costate> {
    pullback_costate_within(x, p, OVERLAP_LIMIT)
}

pub fn pullback_costate_within(x: &ChartState, p: &Costate, limit: f64) -> Result<Costate> {
    if p.chart != x.chart {
        return Err(GuidanceError::ChartMismatch {
            expected: x.chart,
            found: p.chart,
        });
    }
    let y = transition_within(x, limit, None)?;
    // p_new = (∂x_old/∂x_new)ᵀ p_old, the inverse map's Jacobian at the image
    let j = angle_jacobian(y.chart, y.ang1, y.ang2);
    let mut q = p.p;
    q[4] = j[0][0] * p.p[4] + j[1][0] * p.p[5];
    q[5] = j[0][1] * p.p[4] + j[1][1] * p.p[5];
    Ok(Costate { chart: y.chart, p: q })
}

/// Re-expresses a local control (body axis in velocity-frame components)
/// in the other chart's velocity frame.
pub fn transition_control(x: &ChartState, y: &ChartState, u: [f64; 3]) -> [f64; 3] {
    let fx = velocity_frame(x.chart, x.ang1, x.ang2);
    let fy = velocity_frame(y.chart, y.ang1, y.ang2);
    let rx = Matrix3::from_fn(|i, j| fx[i][j]);
    let ry = Matrix3::from_fn(|i, j| fy[i][j]);
    let out = ry * rx.transpose() * Vector3::from(u);
    [out.x, out.y, out.z]
}

/// Pairing ⟨p, ẋ⟩ used by invariance checks.
pub fn pairing(p: &[f64; 6], xdot: &[f64; 6]) -> f64 {
    Vector6::from(*p).dot(&Vector6::from(*xdot))
}
