//! Flat torus with period cell [-1,1)^2.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

/// Side length of the period cell.
pub const CELL: f64 = 2.0;

/// Largest possible geodesic distance (half-diagonal of the cell).
pub const DIAMETER: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("midpoint is ambiguous: distance {0} is not below 1")]
    AmbiguousGeodesic(f64),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Plain planar vector, used for displacements and velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Rotation by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Reduce a coordinate into [-1, 1).
pub fn wrap_coord(v: f64) -> f64 {
    if (-1.0..1.0).contains(&v) {
        return v;
    }
    let mut w = v - CELL * ((v + 1.0) / CELL).floor();
    // floor of a rounded quotient can land one cell off
    if w >= 1.0 {
        w -= CELL;
    }
    if w < -1.0 {
        w += CELL;
    }
    w
}

/// Point on the torus, always stored in canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl From<[f64; 2]> for TorusPoint {
    fn from(a: [f64; 2]) -> Self {
        TorusPoint::new(a[0], a[1])
    }
}

impl From<TorusPoint> for [f64; 2] {
    fn from(p: TorusPoint) -> Self {
        [p.x, p.y]
    }
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint {
            x: wrap_coord(x),
            y: wrap_coord(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn translate(&self, v: Vec2) -> TorusPoint {
        TorusPoint::new(self.x + v.x, self.y + v.y)
    }

    /// Shortest displacement from `self` to `q`, each component in [-1, 1).
    pub fn displacement_to(&self, q: &TorusPoint) -> Vec2 {
        Vec2::new(wrap_coord(q.x - self.x), wrap_coord(q.y - self.y))
    }
}

/// Displacement between two lifted points, reduced to the cell.
pub fn wrap_vec(v: Vec2) -> Vec2 {
    Vec2::new(wrap_coord(v.x), wrap_coord(v.y))
}

pub fn geodesic_distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    p.displacement_to(q).norm()
}

pub fn geodesic_midpoint(p: &TorusPoint, q: &TorusPoint) -> Result<TorusPoint, TorusError> {
    let d = p.displacement_to(q);
    let len = d.norm();
    if len >= 1.0 {
        return Err(TorusError::AmbiguousGeodesic(len));
    }
    Ok(p.translate(0.5 * d))
}

/// Axis-aligned box in cell coordinates. A box with `x_min == x_max`
/// is a vertical segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub open: bool,
}

impl Box2 {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, open: bool) -> Result<Self, TorusError> {
        let ok = if open {
            x_min < x_max && y_min < y_max
        } else {
            x_min <= x_max && y_min <= y_max
        };
        if !ok || x_max - x_min > CELL || y_max - y_min > CELL {
            return Err(TorusError::InvalidBox(format!(
                "[{x_min},{x_max}]x[{y_min},{y_max}] open={open}"
            )));
        }
        Ok(Box2 { x_min, x_max, y_min, y_max, open })
    }

    pub fn open(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self::new(x_min, x_max, y_min, y_max, true).expect("valid open box")
    }

    pub fn closed(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self::new(x_min, x_max, y_min, y_max, false).expect("valid closed box")
    }

    /// The whole period cell.
    pub fn cell() -> Self {
        Box2::closed(-1.0, 1.0, -1.0, 1.0)
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Signed clearance of a planar point: positive inside, equal to the
    /// distance to the nearest side in the sup metric.
    pub fn clearance(&self, p: Vec2) -> f64 {
        let cx = (p.x - self.x_min).min(self.x_max - p.x);
        let cy = (p.y - self.y_min).min(self.y_max - p.y);
        cx.min(cy)
    }
}

/// True iff `p` lies in `b` shrunk by `margin` (negative margin expands).
/// Coordinates are compared after unwrapping `p` around the box centre,
/// so boxes straddling the seam behave.
pub fn box_contains(b: &Box2, p: &TorusPoint, margin: f64) -> bool {
    axis_contains(p.x, b.x_min, b.x_max, margin, b.open)
        && axis_contains(p.y, b.y_min, b.y_max, margin, b.open)
}

fn axis_contains(v: f64, lo: f64, hi: f64, margin: f64, open: bool) -> bool {
    if hi - lo >= CELL {
        // the axis wraps onto itself; only the margin can exclude points
        return margin <= 0.0 || within(v, lo, hi, margin, open);
    }
    let c = 0.5 * (lo + hi);
    within(c + wrap_coord(v - c), lo, hi, margin, open)
}

fn within(v: f64, lo: f64, hi: f64, margin: f64, open: bool) -> bool {
    if open {
        lo + margin < v && v < hi - margin
    } else {
        lo + margin <= v && v <= hi - margin
    }
}

/// Serde adapter for floats that may be infinite or NaN, which plain JSON
/// cannot hold. Non-finite values are written as `"inf"`, `"-inf"` or
/// `"nan"`; `null` reads back as NaN.
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a float: {other}"))),
            },
        }
    }
}
