//! Smooth one-dimensional profiles with closed-form antiderivatives.

use serde::{Deserialize, Serialize};

/// Quintic smoothstep on [0,1], clamped outside. C^2 at both ends.
pub fn smoothstep(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        v * v * v * (10.0 + v * (-15.0 + 6.0 * v))
    }
}

pub fn smoothstep_slope(v: f64) -> f64 {
    if v <= 0.0 || v >= 1.0 {
        0.0
    } else {
        30.0 * v * v * (1.0 - v) * (1.0 - v)
    }
}

/// Largest value of [`smoothstep_slope`].
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

/// Antiderivative of [`smoothstep`] vanishing at 0.
pub fn smoothstep_int(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        v - 0.5
    } else {
        v.powi(4) * (2.5 + v * (-3.0 + v))
    }
}

/// Second antiderivative of [`smoothstep`] on [0,1].
fn smoothstep_int2(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    v.powi(5) * (0.5 + v * (-0.5 + v / 7.0))
}

/// Ramp from 0 to 1 on [0,1], linear in the middle with smoothstep
/// blends of relative width `b` at both ends.
fn ramp_raw(v: f64, b: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v < b {
        b * smoothstep_int(v / b)
    } else if v <= 1.0 - b {
        0.5 * b + (v - b)
    } else if v < 1.0 {
        0.5 * b + (1.0 - 2.0 * b) + b * (0.5 - smoothstep_int((1.0 - v) / b))
    } else {
        1.0 - b
    }
}

fn ramp_raw_slope(v: f64, b: f64) -> f64 {
    if v <= 0.0 || v >= 1.0 {
        0.0
    } else if v < b {
        smoothstep(v / b)
    } else if v <= 1.0 - b {
        1.0
    } else {
        smoothstep((1.0 - v) / b)
    }
}

fn ramp_raw_int(v: f64, b: f64) -> f64 {
    let a1 = b * b / 7.0 + 0.5 * b * (1.0 - 2.0 * b) + 0.5 * (1.0 - 2.0 * b).powi(2);
    if v <= 0.0 {
        0.0
    } else if v < b {
        b * b * smoothstep_int2(v / b)
    } else if v <= 1.0 - b {
        let m = v - b;
        b * b / 7.0 + 0.5 * b * m + 0.5 * m * m
    } else if v < 1.0 {
        a1 + (1.0 - b) * (v - 1.0 + b) - b * b * (1.0 / 7.0 - smoothstep_int2((1.0 - v) / b))
    } else {
        a1 + (1.0 - b) * b - b * b / 7.0 + (1.0 - b) * (v - 1.0)
    }
}

/// One term `weight * shape((s - start) / width)` of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Term {
    Step { start: f64, width: f64, weight: f64 },
    Ramp { start: f64, width: f64, weight: f64, blend: f64 },
}

impl Term {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Term::Step { start, width, weight } => weight * smoothstep((s - start) / width),
            Term::Ramp { start, width, weight, blend } => {
                weight * ramp_raw((s - start) / width, blend) / (1.0 - blend)
            }
        }
    }

    pub fn slope(&self, s: f64) -> f64 {
        match *self {
            Term::Step { start, width, weight } => weight * smoothstep_slope((s - start) / width) / width,
            Term::Ramp { start, width, weight, blend } => {
                weight * ramp_raw_slope((s - start) / width, blend) / ((1.0 - blend) * width)
            }
        }
    }

    pub fn integral(&self, s: f64) -> f64 {
        match *self {
            Term::Step { start, width, weight } => weight * width * smoothstep_int((s - start) / width),
            Term::Ramp { start, width, weight, blend } => {
                weight * width * ramp_raw_int((s - start) / width, blend) / (1.0 - blend)
            }
        }
    }
}

/// `base + sum of terms`, constant outside the terms' supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub base: f64,
    pub terms: Vec<Term>,
}

impl Profile {
    pub fn value(&self, s: f64) -> f64 {
        self.base + self.terms.iter().map(|t| t.value(s)).sum::<f64>()
    }

    pub fn slope(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.slope(s)).sum()
    }

    /// Antiderivative vanishing at `s = 0`.
    pub fn integral(&self, s: f64) -> f64 {
        let raw = |s: f64| self.base * s + self.terms.iter().map(|t| t.integral(s)).sum::<f64>();
        raw(s) - raw(0.0)
    }

    pub fn max_abs_slope(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|k| self.slope(lo + (hi - lo) * k as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Ramp blend width used by the horseshoe shears.
pub const RAMP_BLEND: f64 = 0.03;
