//! Stored periodic orbits (lifted Hermite curves) used by tube blocks.

use crate::torus::{wrap_vec, TorusPoint, Vec2};
use serde::{Deserialize, Serialize};

/// Closed curve `t -> X(t)`, `t` in `[0, period]`, stored as lifted
/// positions and velocities at uniform knots. Cubic Hermite in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub period: usize,
    pub dt: f64,
    /// `[x, y, vx, vy]` per knot, `period / dt + 1` knots.
    pub knots: Vec<[f64; 4]>,
}

impl Orbit {
    /// Builds from raw samples and forces exact closure: the last knot is
    /// set to the first plus the lattice lift, and the residual gap is
    /// spread linearly over the knots.
    pub fn closed(period: usize, dt: f64, mut knots: Vec<[f64; 4]>) -> Self {
        let n = knots.len() - 1;
        let first = Vec2::new(knots[0][0], knots[0][1]);
        let last = Vec2::new(knots[n][0], knots[n][1]);
        let raw = last - first;
        let gap = wrap_vec(raw);
        let lift = raw - gap;
        let lift = Vec2::new((lift.x / 2.0).round() * 2.0, (lift.y / 2.0).round() * 2.0);
        for (k, kn) in knots.iter_mut().enumerate() {
            let f = k as f64 / n as f64;
            kn[0] -= f * gap.x;
            kn[1] -= f * gap.y;
        }
        knots[n][0] = knots[0][0] + lift.x;
        knots[n][1] = knots[0][1] + lift.y;
        knots[n][2] = knots[0][2];
        knots[n][3] = knots[0][3];
        Orbit { period, dt, knots }
    }

    /// Orbit of the constant drift `velocity` started at `start`.
    pub fn drift(start: TorusPoint, velocity: Vec2, period: usize, per_unit: usize) -> Self {
        let dt = 1.0 / per_unit as f64;
        let n = period * per_unit;
        let knots = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                [start.x() + t * velocity.x, start.y() + t * velocity.y, velocity.x, velocity.y]
            })
            .collect();
        Orbit::closed(period, dt, knots)
    }

    pub fn gap(&self) -> f64 {
        let n = self.knots.len() - 1;
        wrap_vec(Vec2::new(self.knots[n][0] - self.knots[0][0], self.knots[n][1] - self.knots[0][1])).norm()
    }

    pub fn lift(&self) -> Vec2 {
        let n = self.knots.len() - 1;
        Vec2::new(self.knots[n][0] - self.knots[0][0], self.knots[n][1] - self.knots[0][1])
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let per = self.period as f64;
        let turns = (t / per).floor();
        let tau = t - turns * per;
        let n = self.knots.len() - 1;
        let k = ((tau / self.dt).floor() as usize).min(n - 1);
        let s = (tau - k as f64 * self.dt) / self.dt;
        (k, s, turns)
    }

    /// Lifted position at time `t` (any real `t`, continued periodically).
    pub fn position(&self, t: f64) -> Vec2 {
        let (k, s, turns) = self.locate(t);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let h = self.dt;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let lift = self.lift();
        Vec2::new(
            h00 * a[0] + h10 * h * a[2] + h01 * b[0] + h11 * h * b[2] + turns * lift.x,
            h00 * a[1] + h10 * h * a[3] + h01 * b[1] + h11 * h * b[3] + turns * lift.y,
        )
    }

    pub fn point(&self, t: f64) -> TorusPoint {
        let p = self.position(t);
        TorusPoint::new(p.x, p.y)
    }

    /// Derivative of [`Orbit::position`].
    pub fn velocity(&self, t: f64) -> Vec2 {
        let (k, s, _) = self.locate(t);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let h = self.dt;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        Vec2::new(
            d00 * a[0] + d10 * a[2] + d01 * b[0] + d11 * b[2],
            d00 * a[1] + d10 * a[3] + d01 * b[1] + d11 * b[3],
        )
    }
}
