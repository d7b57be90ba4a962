//! Radial cutoff `η` with `η = 1` on `B_R`, `η = 0` outside `B_{2R}`.

use serde::{Deserialize, Serialize};

use crate::density::Vec2;
use crate::error::{Error, Result};

/// Quintic smoothstep cutoff `η(x) = 1 - S((|x| - R)/R)` with
/// `S(s) = 6s⁵ - 15s⁴ + 10s³`, a C² transition on the annulus `R <= |x| <= 2R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    radius: f64,
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

fn smoothstep_derivative(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    let q = s * (1.0 - s);
    30.0 * q * q
}

impl CutoffProfile {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("cutoff radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Outer radius `2R` of the support.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn eta(&self, x: Vec2) -> f64 {
        1.0 - smoothstep((x.norm() - self.radius) / self.radius)
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let r = x.norm();
        if r <= self.radius || r >= 2.0 * self.radius {
            return Vec2::zeros();
        }
        x * (-smoothstep_derivative((r - self.radius) / self.radius) / (self.radius * r))
    }

    /// `max |∇η| = 15/(8R)`.
    pub fn max_gradient(&self) -> f64 {
        1.875 / self.radius
    }

    pub fn in_annulus(&self, x: Vec2) -> bool {
        let r = x.norm();
        r >= self.radius && r < 2.0 * self.radius
    }
}
