//! Vehicle and environment model: inverse-square gravity, exponential
//! atmosphere, and a solid-motor burn with linear mass depletion.
//!
//! Aerodynamic coefficients are normalized by mass, so both `d` and `c_m`
//! grow as propellant burns.

use serde::{Deserialize, Serialize};

use crate::charts::ChartState;
use crate::dual::Scalar;
use crate::error::{GuidanceError, Result};

/// Altitude below which the atmosphere is frozen.
pub const MIN_ALTITUDE: f64 = -1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleModel {
    /// Lift coefficient c_m at t = 0 and sea level [1/m].
    pub cm0: f64,
    /// Drag coefficient d at t = 0 and sea level [1/m].
    pub d0: f64,
    /// Induced-drag efficiency factor.
    pub eta: f64,
    /// Atmosphere scale height [m].
    pub hr: f64,
    /// Maximal angle of attack [rad].
    pub alpha_max: f64,
    /// Mass-flow ratio q / m(0) during the burn [1/s].
    pub q0: f64,
    /// Thrust acceleration f_T / m(0) during the burn [m/s²].
    pub ft0: f64,
    /// Burn duration [s].
    pub t_burn: f64,
    /// Gravitational parameter [m³/s²].
    pub mu: f64,
    /// Earth radius [m].
    pub rt: f64,
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self {
            cm0: 7.5e-4,
            d0: 5e-5,
            eta: 0.442,
            hr: 7500.0,
            alpha_max: std::f64::consts::FRAC_PI_6,
            q0: 0.025,
            ft0: 37.5,
            t_burn: 20.0,
            mu: 3.986004418e14,
            rt: 6_378_137.0,
        }
    }
}

impl VehicleModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cm0", self.cm0),
            ("d0", self.d0),
            ("eta", self.eta),
            ("hr", self.hr),
            ("alpha_max", self.alpha_max),
            ("q0", self.q0),
            ("ft0", self.ft0),
            ("t_burn", self.t_burn),
            ("mu", self.mu),
            ("rt", self.rt),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GuidanceError::InvalidInput(format!(
                    "vehicle.{name} must be positive and finite (got {value})"
                )));
            }
        }
        if self.alpha_max > std::f64::consts::FRAC_PI_6 + 1e-12 {
            return Err(GuidanceError::InvalidInput(
                "vehicle.alpha_max must not exceed pi/6".into(),
            ));
        }
        if self.q0 * self.t_burn >= 1.0 {
            return Err(GuidanceError::InvalidInput(
                "vehicle.q0 * vehicle.t_burn must be below 1 (mass would vanish)".into(),
            ));
        }
        Ok(())
    }

    /// m(t) / m(0).
    pub fn mass_ratio(&self, t: f64) -> f64 {
        1.0 - self.q0 * t.clamp(0.0, self.t_burn)
    }

    /// f_T(t) / m(t).
    pub fn thrust_accel(&self, t: f64) -> f64 {
        if t <= self.t_burn {
            self.ft0 / self.mass_ratio(t)
        } else {
            0.0
        }
    }

    /// Normalized drag and lift coefficients (d, c_m) at time `t` and altitude `h`.
    pub fn aero_coeffs<S: Scalar>(&self, t: f64, h: S) -> (S, S) {
        let h = if h.re() < MIN_ALTITUDE { S::cst(MIN_ALTITUDE) } else { h };
        let density = (-h / self.hr).exp() / self.mass_ratio(t);
        (density * self.d0, density * self.cm0)
    }

    /// Gravity magnitude μ / r².
    pub fn gravity<S: Scalar>(&self, r: S) -> S {
        S::cst(self.mu) / (r * r)
    }

    /// ω = f_T / (m v) + v c_m.
    pub fn omega(&self, t: f64, x: &ChartState) -> f64 {
        let (_, cm) = self.aero_coeffs(t, x.r - self.rt);
        self.thrust_accel(t) / x.v + x.v * cm
    }

    /// Minimum speed for which a nonregular arc can be excluded.
    pub fn assumption3_bound(&self, t: f64, x: &ChartState) -> f64 {
        let g = self.gravity(x.r);
        let (d, _) = self.aero_coeffs(t, x.r - self.rt);
        let ghr = g * self.hr;
        let inner = (1.0 + 4.0 / 9.0 / ghr * (self.thrust_accel(t) / d)).sqrt() - 1.0;
        (1.5 * ghr * inner).max(0.0).sqrt()
    }

    pub fn sin_alpha_max(&self) -> f64 {
        self.alpha_max.sin()
    }
}
