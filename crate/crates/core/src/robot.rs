//! Robot models driven by the guiding vector field.
//!
//! A single integrator follows the field directly. A unicycle (planar
//! heading plus an independent vertical rate) tracks the field's planar
//! direction with a proportional heading loop.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this planar field magnitude the heading is considered undefined.
pub const DEGENERATE_EPS: f64 = 1e-9;

pub const DEFAULT_K_THETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RobotError {
    #[error("unicycle control needs a field with at least 4 entries, got {0}")]
    FieldTooShort(usize),
    #[error("unicycle model supports ambient dimension 2 or 3, got {0}")]
    UnsupportedDimension(usize),
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Optional symmetric clamps per channel. `v` clamps to `[0, v]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utheta: Option<f64>,
}

impl SaturationLimits {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn apply(&self, u: ControlInputs) -> ControlInputs {
        let clamp = |x: f64, lim: Option<f64>| match lim {
            Some(l) => x.clamp(-l, l),
            None => x,
        };
        ControlInputs {
            v: clamp(u.v, self.v).max(0.0),
            u_z: clamp(u.u_z, self.uz),
            u_theta: clamp(u.u_theta, self.utheta),
            ..u
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInputs {
    pub v: f64,
    pub u_z: f64,
    pub u_theta: f64,
    /// Heading the loop steered towards.
    pub heading: f64,
    /// Planar field magnitude fell below [`DEGENERATE_EPS`].
    pub degenerate: bool,
}

/// Controls from a field value `X` (`X[0]`, `X[1]` planar, `X[2]` vertical
/// when present):
///
/// * `v = |(X1, X2)|`
/// * `u_z = v X3 / |(X1, X2)|`
/// * `u_θ = k_θ wrap(atan2(X2, X1) - θ)`
///
/// When the planar part vanishes the heading is undefined; `held_heading`
/// (the last valid one) is used instead, or the current heading if none.
pub fn unicycle_controls(
    field: &[f64],
    theta: f64,
    k_theta: f64,
    limits: &SaturationLimits,
    held_heading: Option<f64>,
) -> Result<ControlInputs, RobotError> {
    if field.len() < 4 {
        return Err(RobotError::FieldTooShort(field.len()));
    }
    let n = field.len() - 2;
    let (x1, x2) = (field[0], field[1]);
    let x3 = if n >= 3 { field[2] } else { 0.0 };
    let planar = x1.hypot(x2);
    let v = planar;
    let degenerate = planar < DEGENERATE_EPS;
    let (heading, u_z) = if degenerate {
        (held_heading.unwrap_or(theta), x3)
    } else {
        (x2.atan2(x1), v * x3 / planar)
    };
    let u_theta = k_theta * wrap_angle(heading - theta);
    Ok(limits.apply(ControlInputs { v, u_z, u_theta, heading, degenerate }))
}

/// Unicycle state `(x_1..x_n, θ, w1, w2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleRobot {
    pub x: Vec<f64>,
    pub theta: f64,
    pub w1: f64,
    pub w2: f64,
    pub k_theta: f64,
}

/// Pose and virtual-coordinate rates `(ẋ, θ̇, ẇ1, ẇ2)`; `x` in the same
/// order as [`UnicycleRobot::x`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleRates {
    pub x: Vec<f64>,
    pub theta: f64,
    pub w1: f64,
    pub w2: f64,
}

/// `ẋ1 = v cos θ, ẋ2 = v sin θ, ẋ3 = u_z, θ̇ = u_θ`; the virtual coordinates
/// take the last two field rows unchanged.
pub fn unicycle_derivative(
    robot: &UnicycleRobot,
    u: &ControlInputs,
    field: &[f64],
) -> Result<UnicycleRates, RobotError> {
    let n = robot.x.len();
    if !(2..=3).contains(&n) {
        return Err(RobotError::UnsupportedDimension(n));
    }
    if field.len() != n + 2 {
        return Err(RobotError::FieldTooShort(field.len()));
    }
    let mut x = vec![u.v * robot.theta.cos(), u.v * robot.theta.sin()];
    if n == 3 {
        x.push(u.u_z);
    }
    Ok(UnicycleRates { x, theta: u.u_theta, w1: field[n], w2: field[n + 1] })
}

/// Single integrator with state `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorRobot {
    pub state: crate::field::GeneralizedState,
}

/// `ξ̇ = X`.
pub fn integrator_derivative(_robot: &IntegratorRobot, field: &[f64]) -> Vec<f64> {
    field.to_vec()
}
