//! Numerical flow maps: adaptive Dormand-Prince integration with steps
//! split at block seams, time-one maps on grids, recurrence search and
//! deviation checks against the Bihari envelope.

use crate::fields::{FieldSpec, NormEstimate, Orbit, TimeGrid};
use crate::moduli::{bihari_bound_ln, Modulus};
use crate::torus::{geodesic_distance, wrap_vec, TorusPoint, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("step size collapsed below 1e-14 at t = {t} near ({x}, {y})")]
    StepUnderflow { t: f64, x: f64, y: f64 },
    #[error("no seed returned within {rho0} after {m_max} periods")]
    RecurrenceNotFound { rho0: f64, m_max: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid point {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<FlowError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Never step across a block's time-window edge.
    pub boundary_snap: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-9, abs_tol: 1e-12, max_step: 0.1, boundary_snap: true }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorConfig { rel_tol: tol, abs_tol: tol * 1e-3, ..Default::default() }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0) {
            return Err(FlowError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub point: TorusPoint,
    /// Sum of accepted local error estimates.
    pub error_estimate: f64,
    pub steps: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth minus embedded fourth order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Outcome {
    y: Vec2,
    err: f64,
    steps: usize,
}

/// Next seam strictly after `t` in direction `dir`, seams given in [0,1].
fn next_seam(seams: &[f64], t: f64, dir: f64) -> f64 {
    let base = t.floor();
    let eps = 1e-15 * t.abs().max(1.0);
    let mut best = f64::INFINITY;
    for k in [-1.0, 0.0, 1.0] {
        for s in seams {
            let c = base + k + s;
            let ahead = if dir > 0.0 { c - t } else { t - c };
            if ahead > eps && ahead < best {
                best = ahead;
            }
        }
    }
    t + dir * best
}

/// Adaptive Dormand-Prince 5(4) from `t0` to `t1` (either direction) for
/// `y' = f(t, y)` in the plane. `scale` multiplies the absolute tolerance.
#[allow(clippy::too_many_arguments)]
fn dopri<F: Fn(f64, Vec2) -> Vec2>(
    f: &F,
    y0: Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    seams: &[f64],
    scale: f64,
    mut record: impl FnMut(f64, Vec2),
) -> Result<Outcome, FlowError> {
    cfg.validate()?;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut h = cfg.max_step.min((t1 - t0).abs()).max(0.0) * 0.1;
    let mut total_err = 0.0;
    let mut steps = 0;
    record(t, y);
    if t0 == t1 {
        return Ok(Outcome { y, err: 0.0, steps });
    }
    let abs_tol = cfg.abs_tol * scale;
    let mut k1 = f(t, y);
    while dir * (t1 - t) > 0.0 {
        let mut stop = t1;
        if cfg.boundary_snap {
            let s = next_seam(seams, t, dir);
            if dir * (s - stop) < 0.0 {
                stop = s;
            }
        }
        let room = (stop - t).abs();
        let mut hh = h.min(room).min(cfg.max_step);
        let lands = hh >= room * (1.0 - 1e-12);
        if lands {
            hh = room;
        }
        if hh < 1e-14 && !lands {
            return Err(FlowError::StepUnderflow { t, x: y.x, y: y.y });
        }
        let hs = dir * hh;
        let mut k = [Vec2::ZERO; 7];
        k[0] = k1;
        for i in 1..7 {
            let mut acc = y;
            for j in 0..i {
                if A[i][j] != 0.0 {
                    acc = acc + (hs * A[i][j]) * k[j];
                }
            }
            k[i] = f(t + C[i] * hs, acc);
        }
        let y_new = {
            let mut acc = y;
            for j in 0..6 {
                acc = acc + (hs * A[6][j]) * k[j];
            }
            acc
        };
        let all_zero = k.iter().all(|v| v.x == 0.0 && v.y == 0.0);
        let (err_vec, ratio) = if all_zero {
            (0.0, 0.0)
        } else {
            let mut e = Vec2::ZERO;
            for j in 0..7 {
                e = e + (hs * E[j]) * k[j];
            }
            let sx = abs_tol + cfg.rel_tol * y.x.abs().max(y_new.x.abs()).min(2.0);
            let sy = abs_tol + cfg.rel_tol * y.y.abs().max(y_new.y.abs()).min(2.0);
            (e.norm(), (e.x.abs() / sx).max(e.y.abs() / sy))
        };
        if ratio <= 1.0 {
            t = if lands { stop } else { t + hs };
            y = y_new;
            k1 = if lands { f(t, y) } else { k[6] };
            total_err += err_vec;
            steps += 1;
            record(t, y);
            h = if ratio == 0.0 { cfg.max_step } else { hh * (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        } else {
            if !ratio.is_finite() {
                h = hh * 0.2;
            } else {
                h = hh * (0.9 * ratio.powf(-0.2)).clamp(0.2, 1.0);
            }
            if h < 1e-14 {
                return Err(FlowError::StepUnderflow { t, x: y.x, y: y.y });
            }
        }
    }
    Ok(Outcome { y, err: total_err, steps })
}

fn field_rhs(b: &FieldSpec) -> impl Fn(f64, Vec2) -> Vec2 + '_ {
    move |t, y| b.eval(t, &TorusPoint::new(y.x, y.y))
}

/// Flow from time `t0` to `t1` (backward when `t1 < t0`).
pub fn integrate_between(
    b: &FieldSpec,
    x0: &TorusPoint,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowResult, FlowError> {
    let seams = b.seams();
    let out = dopri(&field_rhs(b), x0.as_vec(), t0, t1, cfg, &seams, 1.0, |_, _| {})?;
    Ok(FlowResult { point: TorusPoint::new(out.y.x, out.y.y), error_estimate: out.err, steps: out.steps })
}

/// `X_t(x0)`.
pub fn integrate(b: &FieldSpec, x0: &TorusPoint, t: f64, cfg: &IntegratorConfig) -> Result<FlowResult, FlowError> {
    if !(t >= 0.0) {
        return Err(FlowError::InvalidParams(format!("negative time {t}")));
    }
    integrate_between(b, x0, 0.0, t, cfg)
}

/// Accepted steps `(t, x)` of a trajectory.
pub fn trajectory(b: &FieldSpec, x0: &TorusPoint, t: f64, cfg: &IntegratorConfig) -> Result<Vec<(f64, TorusPoint)>, FlowError> {
    let seams = b.seams();
    let mut out = Vec::new();
    dopri(&field_rhs(b), x0.as_vec(), 0.0, t, cfg, &seams, 1.0, |s, y| out.push((s, TorusPoint::new(y.x, y.y))))?;
    Ok(out)
}

pub fn trajectory_csv(traj: &[(f64, TorusPoint)]) -> String {
    let mut s = String::from("t,x,y\n");
    for (t, p) in traj {
        let _ = writeln!(s, "{},{},{}", t, p.x(), p.y());
    }
    s
}

/// Flow relative to a stored orbit: integrates the offset `off` of
/// `X(t) + off` from the orbit position `X(t)`, so offsets far below the
/// float spacing of absolute positions keep full precision. `scale` sets
/// the absolute tolerance unit.
pub fn integrate_comoving(
    b: &FieldSpec,
    orbit: &Orbit,
    off0: Vec2,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    scale: f64,
) -> Result<Vec2, FlowError> {
    let seams = b.seams();
    let rhs = |t: f64, off: Vec2| b.eval_relative(t, orbit.position(t), orbit.velocity(t), off);
    let cfg = IntegratorConfig { rel_tol: cfg.rel_tol, ..*cfg };
    Ok(dopri(&rhs, off0, t0, t1, &cfg, &seams, scale, |_, _| {})?.y)
}

/// Images of a uniform grid of the period cell under the time-`t` map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub resolution: usize,
    pub time: f64,
    pub source_digest: String,
    /// Row-major over `(i, j)`, source point `(-1 + 2i/res, -1 + 2j/res)`.
    pub images: Vec<TorusPoint>,
}

impl MapGrid {
    pub fn source(&self, i: usize, j: usize) -> TorusPoint {
        let r = self.resolution as f64;
        TorusPoint::new(-1.0 + 2.0 * i as f64 / r, -1.0 + 2.0 * j as f64 / r)
    }

    pub fn image(&self, i: usize, j: usize) -> TorusPoint {
        self.images[i * self.resolution + j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,x_in,y_in,x_out,y_out\n");
        for i in 0..self.resolution {
            for j in 0..self.resolution {
                let (a, b) = (self.source(i, j), self.image(i, j));
                let _ = writeln!(s, "{i},{j},{},{},{},{}", a.x(), a.y(), b.x(), b.y());
            }
        }
        s
    }
}

pub fn time_t_map(b: &FieldSpec, resolution: usize, t: f64, cfg: &IntegratorConfig) -> Result<MapGrid, FlowError> {
    if resolution < 2 {
        return Err(FlowError::InvalidParams(format!("resolution {resolution} below 2")));
    }
    let mut grid = MapGrid { resolution, time: t, source_digest: b.digest(), images: Vec::new() };
    grid.images = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let p = grid.source(k / resolution, k % resolution);
            integrate(b, &p, t, cfg)
                .map(|r| r.point)
                .map_err(|e| FlowError::AtGridPoint { index: k, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(grid)
}

pub fn time_one_map(b: &FieldSpec, resolution: usize, cfg: &IntegratorConfig) -> Result<MapGrid, FlowError> {
    time_t_map(b, resolution, 1.0, cfg)
}

/// `X_1` as a closure on torus points.
pub fn time_one(b: &FieldSpec, cfg: IntegratorConfig) -> impl Fn(&TorusPoint) -> Result<TorusPoint, FlowError> + Sync + '_ {
    move |p| integrate(b, p, 1.0, &cfg).map(|r| r.point)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitResult {
    pub x: TorusPoint,
    #[serde(rename = "N")]
    pub n: usize,
    pub rho: f64,
    #[serde(with = "crate::torus::nonfinite")]
    pub min_separation: f64,
    pub seed: TorusPoint,
    pub alpha: usize,
    pub beta: usize,
}

/// Scans a `seeds x seeds` grid, in lexicographic order, for an orbit
/// returning within `rho0` in at most `m_max` periods, then picks the
/// closest pair `i < j` on that orbit (smallest `j`, then smallest `i`).
pub fn find_near_periodic_point(
    b: &FieldSpec,
    rho0: f64,
    seeds: usize,
    m_max: usize,
    cfg: &IntegratorConfig,
) -> Result<PeriodicOrbitResult, FlowError> {
    if !(rho0 > 0.0) || m_max < 1 || seeds < 1 {
        return Err(FlowError::InvalidParams(format!("rho0={rho0} seeds={seeds} m_max={m_max}")));
    }
    let step = |p: &TorusPoint| integrate(b, p, 1.0, cfg).map(|r| r.point);
    for i in 0..seeds {
        for j in 0..seeds {
            let y = TorusPoint::new(-1.0 + 2.0 * (i as f64 + 0.5) / seeds as f64, -1.0 + 2.0 * (j as f64 + 0.5) / seeds as f64);
            let mut orbit = vec![y];
            for _ in 0..m_max {
                let next = step(orbit.last().unwrap())?;
                orbit.push(next);
                if geodesic_distance(&y, &next) < rho0 {
                    return Ok(closest_pair(&orbit, y));
                }
            }
        }
    }
    Err(FlowError::RecurrenceNotFound { rho0, m_max })
}

fn closest_pair(orbit: &[TorusPoint], seed: TorusPoint) -> PeriodicOrbitResult {
    let mut best = (f64::INFINITY, 0, 0);
    for j in 1..orbit.len() {
        for i in 0..j {
            let d = geodesic_distance(&orbit[i], &orbit[j]);
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    let (rho, alpha, beta) = best;
    let x = orbit[alpha];
    let end = orbit[beta];
    let min_separation = (alpha + 1..beta)
        .map(|k| geodesic_distance(&orbit[k], &x).min(geodesic_distance(&orbit[k], &end)))
        .fold(f64::INFINITY, f64::min);
    PeriodicOrbitResult { x, n: beta - alpha, rho, min_separation, seed, alpha, beta }
}

/// Stored orbit of `x` under `b` over `n` periods, sampled at `per_unit`
/// knots per unit time and closed up exactly.
pub fn trace_orbit(b: &FieldSpec, x: &TorusPoint, n: usize, per_unit: usize, cfg: &IntegratorConfig) -> Result<Orbit, FlowError> {
    let dt = 1.0 / per_unit as f64;
    let mut knots = Vec::with_capacity(n * per_unit + 1);
    let mut p = x.as_vec();
    let seams = b.seams();
    for k in 0..=n * per_unit {
        let t = k as f64 * dt;
        let v = b.eval(t, &TorusPoint::new(p.x, p.y));
        knots.push([p.x, p.y, v.x, v.y]);
        if k < n * per_unit {
            p = dopri(&|s, y| b.eval(s, &TorusPoint::new(y.x, y.y)), p, t, t + dt, cfg, &seams, 1.0, |_, _| {})?.y;
        }
    }
    Ok(Orbit::closed(n, dt, knots))
}

/// Cumulative `int_0^t` of a per-period norm profile.
pub fn cumulative_norm(est: &NormEstimate, t: f64) -> f64 {
    let whole = t.floor();
    let frac = t - whole;
    let mut acc = whole * est.value;
    let n = est.per_node.len();
    for (k, node) in est.per_node.iter().enumerate() {
        let lo = if k == 0 { 0.0 } else { 0.5 * (est.per_node[k - 1][0] + node[0]) };
        let hi = if k + 1 == n { 1.0 } else { 0.5 * (node[0] + est.per_node[k + 1][0]) };
        let covered = (frac.min(hi) - lo).max(0.0);
        acc += covered * (node[1] + node[2]);
    }
    acc
}

/// Floor replacing a zero initial gap before the envelope is applied.
pub const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub pairs: usize,
    pub max_ratio: f64,
    pub violations: usize,
    pub max_deviation: f64,
    pub horizon: usize,
    pub budget_v: f64,
    pub budget_diff: f64,
}

/// Compares `d(X^w_t x, X^v_t x)` with the envelope
/// `G^-1(G(floor + int ||w-v||) + int ||v||)` at `t = k / checkpoints`
/// for `k = 1..= horizon * checkpoints`.
#[allow(clippy::too_many_arguments)]
pub fn deviation_check(
    v: &FieldSpec,
    w: &FieldSpec,
    m: &Modulus,
    norm_v: &NormEstimate,
    norm_diff: &NormEstimate,
    samples: &[TorusPoint],
    horizon: usize,
    checkpoints: usize,
    cfg: &IntegratorConfig,
) -> Result<DeviationReport, FlowError> {
    let times: Vec<f64> = (1..=horizon * checkpoints).map(|k| k as f64 / checkpoints as f64).collect();
    let rows = samples
        .par_iter()
        .map(|x| {
            let (mut pv, mut pw) = (*x, *x);
            let mut t = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &s in &times {
                pv = integrate_between(v, &pv, t, s, cfg)?.point;
                pw = integrate_between(w, &pw, t, s, cfg)?.point;
                t = s;
                let d = geodesic_distance(&pv, &pw);
                let gap = GAP_FLOOR + cumulative_norm(norm_diff, s);
                let bound = bihari_bound_ln(m, gap.ln(), cumulative_norm(norm_v, s)).exp().min(std::f64::consts::SQRT_2);
                out.push((d, d / bound));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, FlowError>>()?;
    let flat: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    Ok(DeviationReport {
        pairs: flat.len(),
        max_ratio: flat.iter().map(|r| r.1).fold(0.0, f64::max),
        violations: flat.iter().filter(|r| r.1 > 1.0).count(),
        max_deviation: flat.iter().map(|r| r.0).fold(0.0, f64::max),
        horizon,
        budget_v: cumulative_norm(norm_v, horizon as f64),
        budget_diff: cumulative_norm(norm_diff, horizon as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpGradient {
    pub value: f64,
    pub overflow: bool,
}

/// `sup_t int exp(beta |grad b(t,.)|) dx` with central differences on a
/// `resolution^2` grid of the cell.
pub fn exp_gradient_diagnostic(b: &FieldSpec, beta: f64, resolution: usize, time_grid: &TimeGrid) -> Result<ExpGradient, FlowError> {
    if !(beta > 0.0) || resolution < 2 {
        return Err(FlowError::InvalidParams(format!("beta={beta} resolution={resolution}")));
    }
    let h = 2.0 / resolution as f64;
    let area = h * h;
    let mut best = 0.0f64;
    for (t, _) in time_grid.nodes(b) {
        let total: f64 = (0..resolution * resolution)
            .into_par_iter()
            .map(|k| {
                let p = Vec2::new(-1.0 + h * (k / resolution) as f64, -1.0 + h * (k % resolution) as f64);
                let at = |d: Vec2| {
                    let q = wrap_vec(p + d);
                    b.eval(t, &TorusPoint::new(q.x, q.y))
                };
                let dx = (1.0 / (2.0 * h)) * (at(Vec2::new(h, 0.0)) - at(Vec2::new(-h, 0.0)));
                let dy = (1.0 / (2.0 * h)) * (at(Vec2::new(0.0, h)) - at(Vec2::new(0.0, -h)));
                let g = (dx.x * dx.x + dx.y * dx.y + dy.x * dy.x + dy.y * dy.y).sqrt();
                (beta * g).exp() * area
            })
            .sum();
        best = best.max(total);
    }
    Ok(ExpGradient { value: best, overflow: !best.is_finite() })
}
