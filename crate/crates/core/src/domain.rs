use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radially symmetric domain. The interval `(-L, L)` is the one-dimensional
/// ball of radius `L`, and every solver treats it that way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { half_length: f64 },
    Ball { dim: u32, radius: f64 },
}

impl DomainSpec {
    pub fn interval(half_length: f64) -> Result<Self> {
        let d = Self::Interval { half_length };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(dim: u32, radius: f64) -> Result<Self> {
        let d = Self::Ball { dim, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.radius();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!(
                "domain size must be positive and finite, got {r}"
            )));
        }
        if !(1..=3).contains(&self.dim()) {
            return Err(Error::Invalid(format!(
                "ball dimension must be 1, 2 or 3, got {}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> u32 {
        match *self {
            Self::Interval { .. } => 1,
            Self::Ball { dim, .. } => dim,
        }
    }

    /// Half-length for the interval, radius for the ball.
    pub fn radius(&self) -> f64 {
        match *self {
            Self::Interval { half_length } => half_length,
            Self::Ball { radius, .. } => radius,
        }
    }

    /// `|Ω|`
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius().powi(self.dim() as i32)
    }

    /// `|∂Ω|`; the two endpoints of an interval count once each.
    pub fn boundary_measure(&self) -> f64 {
        let n = self.dim();
        n as f64 * unit_ball_volume(n) * self.radius().powi(n as i32 - 1)
    }

    /// Surface factor `n ω_n`, so that `∫_Ω g = n ω_n ∫_0^R r^{n-1} g(r) dr`.
    pub fn radial_weight(&self) -> f64 {
        self.dim() as f64 * unit_ball_volume(self.dim())
    }

    /// `2 |∂Ω|²`, the supremum of the bifurcation curve when `p = 2`.
    pub fn critical_lambda_p2(&self) -> f64 {
        2.0 * self.boundary_measure().powi(2)
    }
}

fn unit_ball_volume(n: u32) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => f64::NAN,
    }
}
