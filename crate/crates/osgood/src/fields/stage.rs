//! Elementary area-preserving stages. Each stage is a one-parameter
//! family of maps `p -> map(theta, p)`, `theta` in [0,1], generated by the
//! divergence-free velocity `perp_grad stream(theta, .)` per unit `theta`.

use super::profile::Profile;
use crate::torus::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Stage {
    /// `x -> x + theta (phi(x) - x)` with `phi' = slope`, `phi(0) = 0`;
    /// `y` is divided by the x-Jacobian so area is kept.
    Remap { slope: Profile },
    /// `y -> y + theta f(x)`.
    VerticalShear { f: Profile },
    /// `x -> x + theta g(y)`.
    HorizontalShear { g: Profile },
    Shift { dx: f64, dy: f64 },
    /// `(x, y) -> (x c^theta, y c^-theta)`.
    Saddle { factor: f64 },
    /// Rotation about the origin by `theta * angle`.
    Rotate { angle: f64 },
}

impl Stage {
    pub fn map(&self, theta: f64, p: Vec2) -> Vec2 {
        match self {
            Stage::Remap { slope } => {
                let d = slope.value(p.x);
                Vec2::new(p.x + theta * (slope.integral(p.x) - p.x), p.y / (1.0 + theta * (d - 1.0)))
            }
            Stage::VerticalShear { f } => Vec2::new(p.x, p.y + theta * f.value(p.x)),
            Stage::HorizontalShear { g } => Vec2::new(p.x + theta * g.value(p.y), p.y),
            Stage::Shift { dx, dy } => Vec2::new(p.x + theta * dx, p.y + theta * dy),
            Stage::Saddle { factor } => {
                let s = factor.powf(theta);
                Vec2::new(p.x * s, p.y / s)
            }
            Stage::Rotate { angle } => {
                let (s, c) = (theta * angle).sin_cos();
                Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
            }
        }
    }

    /// Velocity per unit `theta` at position `p` and parameter `theta`.
    pub fn velocity(&self, theta: f64, p: Vec2) -> Vec2 {
        match self {
            Stage::Remap { slope } => {
                let x0 = remap_preimage(slope, theta, p.x);
                let d = slope.value(x0);
                let jac = 1.0 + theta * (d - 1.0);
                Vec2::new(slope.integral(x0) - x0, -p.y * (d - 1.0) / jac)
            }
            Stage::VerticalShear { f } => Vec2::new(0.0, f.value(p.x)),
            Stage::HorizontalShear { g } => Vec2::new(g.value(p.y), 0.0),
            Stage::Shift { dx, dy } => Vec2::new(*dx, *dy),
            Stage::Saddle { factor } => {
                let l = factor.ln();
                Vec2::new(l * p.x, -l * p.y)
            }
            Stage::Rotate { angle } => Vec2::new(-angle * p.y, angle * p.x),
        }
    }

    /// Stream function with `velocity = (-d/dy, d/dx) stream`.
    pub fn stream(&self, theta: f64, p: Vec2) -> f64 {
        match self {
            Stage::Remap { slope } => {
                let x0 = remap_preimage(slope, theta, p.x);
                -p.y * (slope.integral(x0) - x0)
            }
            Stage::VerticalShear { f } => f.integral(p.x),
            Stage::HorizontalShear { g } => -g.integral(p.y),
            Stage::Shift { dx, dy } => dy * p.x - dx * p.y,
            Stage::Saddle { factor } => -factor.ln() * p.x * p.y,
            Stage::Rotate { angle } => 0.5 * angle * (p.x * p.x + p.y * p.y),
        }
    }

    /// Spatially constant velocity: safe without a cutoff on the torus.
    pub fn is_uniform(&self) -> bool {
        matches!(self, Stage::Shift { .. })
    }

    /// Upper estimate of `int |grad velocity| dtheta` over the unit ball,
    /// used to rank designs.
    pub fn gradient_cost(&self) -> f64 {
        match self {
            Stage::Remap { slope } => {
                let lo = slope.value(-2.0).min(slope.value(2.0));
                let mut worst: f64 = lo.ln().abs();
                for k in 0..=4000 {
                    worst = worst.max(slope.value(-1.0 + k as f64 / 2000.0).ln().abs());
                }
                worst
            }
            Stage::VerticalShear { f } => f.max_abs_slope(-1.0, 1.0, 20000),
            Stage::HorizontalShear { g } => g.max_abs_slope(-1.0, 1.0, 20000),
            Stage::Shift { .. } => 0.0,
            Stage::Saddle { factor } => factor.ln().abs(),
            Stage::Rotate { angle } => angle.abs(),
        }
    }
}

/// Solves `x0 + theta (phi(x0) - x0) = x` for `x0`.
fn remap_preimage(slope: &Profile, theta: f64, x: f64) -> f64 {
    if theta == 0.0 {
        return x;
    }
    let g = |z: f64| z + theta * (slope.integral(z) - z) - x;
    let dg = |z: f64| 1.0 + theta * (slope.value(z) - 1.0);
    // g is increasing; bracket then polish with safeguarded Newton
    let mut lo = x;
    let mut hi = x;
    let mut step = 1e-3;
    while g(lo) > 0.0 {
        lo -= step;
        step *= 2.0;
    }
    step = 1e-3;
    while g(hi) < 0.0 {
        hi += step;
        step *= 2.0;
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..100 {
        let v = g(z);
        if v == 0.0 {
            return z;
        }
        if v < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - v / dg(z);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-16 * (1.0 + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}

/// Chain of stages applied in order at `theta = 1`.
#[derive(Debug, Clone, Default)]
pub struct StageChain {
    pub stages: Vec<Stage>,
}

impl StageChain {
    pub fn apply(&self, mut p: Vec2) -> Vec2 {
        for s in &self.stages {
            p = s.map(1.0, p);
        }
        p
    }

    /// Images after each stage.
    pub fn trace(&self, mut p: Vec2) -> Vec<Vec2> {
        self.stages
            .iter()
            .map(|s| {
                p = s.map(1.0, p);
                p
            })
            .collect()
    }
}
