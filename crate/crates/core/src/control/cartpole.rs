use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const EARTH: f64 = 9.81;
pub const MARS: f64 = 3.72;
pub const NEPTUNE: f64 = 11.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub dt: f64,
    pub force_limit: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            gravity: EARTH,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            dt: 0.02,
            force_limit: 10.0,
        }
    }
}

impl CartpoleParams {
    pub fn with_gravity(self, gravity: f64) -> Self {
        Self { gravity, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_half_length", self.pole_half_length),
            ("dt", self.dt),
            ("force_limit", self.force_limit),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// Cart-pole state; `theta = 0` is upright, `theta = pi` hangs down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub fn hanging() -> Self {
        Self {
            theta: std::f64::consts::PI,
            ..Self::default()
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            x: a[0],
            x_dot: a[1],
            theta: a[2],
            theta_dot: a[3],
        }
    }

    /// `next - self`, with the angle difference wrapped to (-pi, pi].
    pub fn delta_to(&self, next: &Self) -> [f64; 4] {
        [
            next.x - self.x,
            next.x_dot - self.x_dot,
            wrap_angle(next.theta - self.theta),
            next.theta_dot - self.theta_dot,
        ]
    }

    pub fn apply_delta(&self, d: &[f64]) -> Self {
        Self {
            x: self.x + d[0],
            x_dot: self.x_dot + d[1],
            theta: self.theta + d[2],
            theta_dot: self.theta_dot + d[3],
        }
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        r
    }
}

/// Cart and pole accelerations under `force`.
pub fn accelerations(s: &CartpoleState, force: f64, p: &CartpoleParams) -> (f64, f64) {
    let total = p.cart_mass + p.pole_mass;
    let pml = p.pole_mass * p.pole_half_length;
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
    let x_acc = temp - pml * theta_acc * cos / total;
    (x_acc, theta_acc)
}

/// One semi-implicit Euler step; `force` is clamped to the force limit.
pub fn cartpole_step(s: &CartpoleState, force: f64, p: &CartpoleParams) -> Result<CartpoleState> {
    let force = force.clamp(-p.force_limit, p.force_limit);
    let (x_acc, theta_acc) = accelerations(s, force, p);
    let x_dot = s.x_dot + p.dt * x_acc;
    let theta_dot = s.theta_dot + p.dt * theta_acc;
    let next = CartpoleState {
        x: s.x + p.dt * x_dot,
        x_dot,
        theta: s.theta + p.dt * theta_dot,
        theta_dot,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Numerical("cartpole state became non-finite".into()))
    }
}

/// Total mechanical energy with the pole modelled as a uniform rod.
pub fn cartpole_energy(s: &CartpoleState, p: &CartpoleParams) -> f64 {
    let (m, l) = (p.pole_mass, p.pole_half_length);
    let cos = s.theta.cos();
    0.5 * (p.cart_mass + m) * s.x_dot * s.x_dot
        + m * l * s.x_dot * s.theta_dot * cos
        + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
        + m * p.gravity * l * cos
}
