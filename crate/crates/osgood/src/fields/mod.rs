//! Time-periodic velocity fields built from localized, time-staged blocks.

pub mod horseshoe;
pub mod norm;
pub mod orbit;
pub mod profile;
pub mod stage;

pub use horseshoe::{build_horseshoe_block, frame_scale, horseshoe_params, HorseshoeParams, CUTOFF_OUTER};
pub use norm::{field_distance_estimate, field_norm_estimate, NormEstimate, SampleSet, ProfileNode, ScaledProfile, SpaceGrid, TimeGrid};
pub use orbit::Orbit;
pub use stage::{Stage, StageChain};

use crate::torus::{wrap_coord, wrap_vec, TorusPoint, Vec2};
use profile::{smoothstep, smoothstep_slope};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("certification failed for N = {n}: margin {margin}")]
    CertificationFailed { n: usize, margin: f64 },
    #[error("tubes overlap: centres {distance} apart at t = {time}, radius {radius}")]
    TubesOverlap { time: f64, distance: f64, radius: f64 },
    #[error("inserted field support radius {support} exceeds {limit}")]
    SupportTooLarge { support: f64, limit: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed field spec: {0}")]
    Parse(String),
}

/// Radial cutoff: 1 on the inner ball, 0 outside the outer ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn value(&self, r: f64) -> f64 {
        1.0 - smoothstep((r - self.inner) / (self.outer - self.inner))
    }

    /// Radial derivative.
    pub fn slope(&self, r: f64) -> f64 {
        -smoothstep_slope((r - self.inner) / (self.outer - self.inner)) / (self.outer - self.inner)
    }

    /// Analytic bound on the gradient magnitude.
    pub fn gradient_bound(&self) -> f64 {
        profile::SMOOTHSTEP_MAX_SLOPE / (self.outer - self.inner)
    }

    /// Largest gradient magnitude over a radial sample.
    pub fn measured_gradient(&self, samples: usize) -> f64 {
        (0..=samples)
            .map(|k| self.slope(self.outer * k as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// Smoothstep in time: zero velocity at the window edges.
    #[default]
    Smooth,
    /// Constant rate over the window.
    Uniform,
}

impl TimeProfile {
    /// `(theta, dtheta/dt)` at relative position `u` in a window of length `len`.
    fn eval(&self, u: f64, len: f64) -> (f64, f64) {
        match self {
            TimeProfile::Smooth => (smoothstep(u), smoothstep_slope(u) / len),
            TimeProfile::Uniform => (u.clamp(0.0, 1.0), 1.0 / len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Support {
    Torus,
    Ball { center: [f64; 2], radius: f64 },
    /// Union over `i < period` of balls of `radius` around a stored orbit.
    Tube { radius: f64, period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamStage {
    pub stage: Stage,
    #[serde(default)]
    pub cutoff: Option<Cutoff>,
    #[serde(default)]
    pub time_profile: TimeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum BlockKind {
    StreamStage(StreamStage),
    RotationBump { center: [f64; 2], rho: f64, eta: f64, anchor: f64 },
    Rescaled { child: Box<Block>, scale: f64, center: [f64; 2] },
    FrozenTube { child: Box<Block>, orbit: Orbit, radius: f64 },
    OrbitInserted { child: Box<Block>, orbit: Orbit, period: usize, radius: f64 },
    Sum { children: Vec<Block> },
    /// `exp(ln_factor)` times the child; amplitudes below the float range
    /// are kept exactly in the exponent.
    Scaled { child: Box<Block>, ln_factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub time_window: [f64; 2],
    pub support: Support,
    #[serde(flatten)]
    pub kind: BlockKind,
}

fn in_window(w: [f64; 2], t: f64) -> Option<f64> {
    let tm = t - t.floor();
    if tm >= w[0] && tm <= w[1] {
        Some(tm)
    } else if tm == 0.0 && w[1] == 1.0 {
        // t = 1 folds to 0; keep the closing edge of [a, 1]
        Some(1.0)
    } else {
        None
    }
}

fn rel(p: Vec2, c: [f64; 2]) -> Vec2 {
    Vec2::new(wrap_coord(p.x - c[0]), wrap_coord(p.y - c[1]))
}

impl Block {
    /// A stage on `window` with a cutoff about the origin of its frame.
    pub fn stage(stage: Stage, window: [f64; 2], cutoff: Option<Cutoff>, time_profile: TimeProfile) -> Self {
        let support = match cutoff {
            Some(c) => Support::Ball { center: [0.0, 0.0], radius: c.outer },
            None => Support::Torus,
        };
        Block {
            time_window: window,
            support,
            kind: BlockKind::StreamStage(StreamStage { stage, cutoff, time_profile }),
        }
    }

    /// Constant drift over the whole period.
    pub fn drift(v: Vec2) -> Self {
        Block::stage(Stage::Shift { dx: v.x, dy: v.y }, [0.0, 1.0], None, TimeProfile::Uniform)
    }

    pub fn sum(children: Vec<Block>) -> Self {
        Block { time_window: [0.0, 1.0], support: Support::Torus, kind: BlockKind::Sum { children } }
    }

    /// Radius of a ball containing the support, in this block's frame.
    pub fn support_radius(&self) -> f64 {
        match &self.support {
            Support::Ball { center, radius } => Vec2::new(center[0], center[1]).norm() + radius,
            Support::Torus => f64::INFINITY,
            Support::Tube { .. } => f64::INFINITY,
        }
    }

    /// Velocity at time `t` and frame position `p`.
    pub fn eval(&self, t: f64, p: Vec2) -> Vec2 {
        let Some(tm) = in_window(self.time_window, t) else {
            return Vec2::ZERO;
        };
        match &self.kind {
            BlockKind::StreamStage(s) => {
                let [a, b] = self.time_window;
                let (theta, rate) = s.time_profile.eval((tm - a) / (b - a), b - a);
                if rate == 0.0 {
                    return Vec2::ZERO;
                }
                match s.cutoff {
                    None => rate * s.stage.velocity(theta, p),
                    Some(c) => {
                        let r = p.norm();
                        if r >= c.outer {
                            return Vec2::ZERO;
                        }
                        let chi = c.value(r);
                        let mut v = chi * s.stage.velocity(theta, p);
                        if r > c.inner {
                            let g = (c.slope(r) / r) * p;
                            v = v + s.stage.stream(theta, p) * g.perp();
                        }
                        rate * v
                    }
                }
            }
            BlockKind::RotationBump { center, rho, eta, anchor } => {
                let q = rel(p, *center);
                let r = q.norm();
                if r >= 0.75 * rho {
                    return Vec2::ZERO;
                }
                let start = anchor - eta;
                let omega = PI * smoothstep_slope((tm - start) / eta) / eta;
                let chi = 1.0 - smoothstep((r - 0.5 * rho) / (0.25 * rho));
                (omega * chi) * q.perp()
            }
            BlockKind::Rescaled { child, scale, center } => {
                let q = rel(p, *center);
                if q.norm() >= scale * child.support_radius() {
                    return Vec2::ZERO;
                }
                *scale * child.eval(t, (1.0 / scale) * q)
            }
            BlockKind::Sum { children } => children.iter().fold(Vec2::ZERO, |acc, c| acc + c.eval(t, p)),
            BlockKind::Scaled { child, ln_factor } => {
                let v = child.eval(t, p);
                if v == Vec2::ZERO {
                    v
                } else {
                    ln_factor.exp() * v
                }
            }
            BlockKind::FrozenTube { child, orbit, radius } => {
                frozen_eval(orbit, *radius, tm, Vec2::ZERO, |c| rel_lifted(p, c), || child.eval(t, p))
            }
            BlockKind::OrbitInserted { child, orbit, period, radius } => {
                inserted_eval(child, orbit, *period, *radius, tm, |c| rel_lifted(p, c))
            }
        }
    }

    /// Velocity at lifted position `base + off`, resolving tube blocks
    /// relative to `base` so that tiny offsets keep full precision.
    pub fn eval_near(&self, t: f64, base: Vec2, off: Vec2) -> Vec2 {
        self.eval_near_minus(t, base, Vec2::ZERO, off)
    }

    /// [`Block::eval_near`] minus `base_vel`; a frozen tube subtracts it
    /// inside its own blend so that the orbit's velocity cancels exactly.
    /// Other kinds return `eval_near - base_vel`.
    pub fn eval_near_minus(&self, t: f64, base: Vec2, base_vel: Vec2, off: Vec2) -> Vec2 {
        match &self.kind {
            BlockKind::FrozenTube { child, orbit, radius } => {
                let Some(tm) = in_window(self.time_window, t) else {
                    return -base_vel;
                };
                frozen_eval(orbit, *radius, tm, base_vel, |c| wrap_vec(base - c) + off, || {
                    child.eval(t, canonical(base + off))
                })
            }
            BlockKind::OrbitInserted { child, orbit, period, radius } => {
                let Some(tm) = in_window(self.time_window, t) else {
                    return -base_vel;
                };
                inserted_eval(child, orbit, *period, *radius, tm, |c| wrap_vec(base - c) + off) - base_vel
            }
            BlockKind::Sum { children } => {
                children.iter().fold(Vec2::ZERO, |acc, c| acc + c.eval_near(t, base, off)) - base_vel
            }
            _ => self.eval(t, canonical(base + off)) - base_vel,
        }
    }

    /// Window edges of this block and all descendants, mapped into [0,1].
    pub fn collect_seams(&self, out: &mut Vec<f64>) {
        out.push(self.time_window[0]);
        out.push(self.time_window[1]);
        match &self.kind {
            BlockKind::Rescaled { child, .. } | BlockKind::FrozenTube { child, .. } | BlockKind::Scaled { child, .. } => {
                child.collect_seams(out)
            }
            BlockKind::Sum { children } => children.iter().for_each(|c| c.collect_seams(out)),
            BlockKind::OrbitInserted { child, period, .. } => {
                let mut inner = Vec::new();
                child.collect_seams(&mut inner);
                for s in inner {
                    for i in 0..*period {
                        let tau = *period as f64 * s - i as f64;
                        if (0.0..=1.0).contains(&tau) {
                            out.push(tau);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Visits every stream stage with its frame scale.
    pub fn for_each_stage<F: FnMut(&Block, &StreamStage)>(&self, f: &mut F) {
        match &self.kind {
            BlockKind::StreamStage(s) => f(self, s),
            BlockKind::Rescaled { child, .. }
            | BlockKind::FrozenTube { child, .. }
            | BlockKind::OrbitInserted { child, .. }
            | BlockKind::Scaled { child, .. } => child.for_each_stage(f),
            BlockKind::Sum { children } => children.iter().for_each(|c| c.for_each_stage(f)),
            BlockKind::RotationBump { .. } => {}
        }
    }

    /// Time-one map as an exact stage composition, when this block is a
    /// (possibly rescaled) sum of smooth-profile stages with disjoint windows.
    pub fn exact_map(&self) -> Option<ExactMap> {
        match &self.kind {
            BlockKind::Rescaled { child, scale, center } => {
                let inner = child.exact_map()?;
                Some(ExactMap {
                    chain: inner.chain,
                    scale: scale * inner.scale,
                    center: Vec2::new(center[0], center[1]) + *scale * inner.center,
                    reach: inner.reach,
                })
            }
            BlockKind::Sum { children } => {
                let mut stages: Vec<(f64, f64, Stage)> = Vec::new();
                let mut reach = f64::INFINITY;
                for c in children {
                    let BlockKind::StreamStage(s) = &c.kind else {
                        return None;
                    };
                    if s.time_profile != TimeProfile::Smooth {
                        return None;
                    }
                    if let Some(cut) = s.cutoff {
                        reach = reach.min(cut.inner);
                    }
                    stages.push((c.time_window[0], c.time_window[1], s.stage.clone()));
                }
                stages.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                if stages.windows(2).any(|w| w[1].0 < w[0].1) {
                    return None;
                }
                Some(ExactMap {
                    chain: StageChain { stages: stages.into_iter().map(|s| s.2).collect() },
                    scale: 1.0,
                    center: Vec2::ZERO,
                    reach,
                })
            }
            BlockKind::StreamStage(_) => Block::sum(vec![self.clone()]).exact_map(),
            _ => None,
        }
    }
}

fn canonical(p: Vec2) -> Vec2 {
    wrap_vec(p)
}

fn rel_lifted(p: Vec2, c: Vec2) -> Vec2 {
    wrap_vec(p - c)
}

/// Tube velocity minus `base_vel`: the stored orbit velocity where the
/// cutoff is 1, blended with the outside field elsewhere.
fn frozen_eval<R: Fn(Vec2) -> Vec2, C: FnOnce() -> Vec2>(
    orbit: &Orbit,
    radius: f64,
    tm: f64,
    base_vel: Vec2,
    relative: R,
    outside: C,
) -> Vec2 {
    let cut = Cutoff { inner: 0.5 * radius, outer: radius };
    let mut weight = 0.0;
    let mut frozen = Vec2::ZERO;
    for i in 0..orbit.period {
        let tau = tm + i as f64;
        let q = relative(orbit.position(tau));
        let r = q.norm();
        if r < radius {
            let chi = cut.value(r);
            weight += chi;
            frozen = frozen + chi * (orbit.velocity(tau) - base_vel);
        }
    }
    if weight >= 1.0 {
        return frozen;
    }
    frozen + (1.0 - weight) * (outside() - base_vel)
}

fn inserted_eval<R: Fn(Vec2) -> Vec2>(
    child: &Block,
    orbit: &Orbit,
    period: usize,
    radius: f64,
    tm: f64,
    relative: R,
) -> Vec2 {
    let n = period as f64;
    let mut v = Vec2::ZERO;
    for i in 0..period {
        let tau = tm + i as f64;
        let q = relative(orbit.position(tau));
        if q.norm() < radius {
            v = v + (1.0 / n) * child.eval(tau / n, q);
        }
    }
    v
}

/// Exact time-one map `p -> center + scale * chain((p - center) / scale)`,
/// valid for points whose stage trajectories stay within `reach`.
#[derive(Debug, Clone)]
pub struct ExactMap {
    pub chain: StageChain,
    pub scale: f64,
    pub center: Vec2,
    pub reach: f64,
}

impl ExactMap {
    /// Acts on frame-local coordinates (already divided by the scale).
    pub fn apply_local(&self, p: Vec2) -> Vec2 {
        self.chain.apply(p)
    }

    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let q = (1.0 / self.scale) * rel(p.as_vec(), [self.center.x, self.center.y]);
        let out = self.center + self.scale * self.chain.apply(q);
        TorusPoint::new(out.x, out.y)
    }
}

/// A 1-periodic velocity field: sum of blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub period: f64,
    pub blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl FieldSpec {
    pub fn new(blocks: Vec<Block>) -> Self {
        FieldSpec { period: 1.0, blocks, manifest: None }
    }

    pub fn zero() -> Self {
        FieldSpec::new(Vec::new())
    }

    pub fn drift(v: Vec2) -> Self {
        FieldSpec::new(vec![Block::drift(v)])
    }

    pub fn eval(&self, t: f64, p: &TorusPoint) -> Vec2 {
        let q = p.as_vec();
        self.blocks.iter().fold(Vec2::ZERO, |acc, b| acc + b.eval(t, q))
    }

    pub fn eval_near(&self, t: f64, base: Vec2, off: Vec2) -> Vec2 {
        self.blocks.iter().fold(Vec2::ZERO, |acc, b| acc + b.eval_near(t, base, off))
    }

    /// Rate of change of the offset `off` of a trajectory from a reference
    /// curve at `base` moving with `base_vel`. The reference velocity is
    /// cancelled inside the first frozen tube when there is one, so that
    /// inserted dynamics far below the float spacing of `base` survive.
    pub fn eval_relative(&self, t: f64, base: Vec2, base_vel: Vec2, off: Vec2) -> Vec2 {
        let absorber = self.blocks.iter().position(|b| matches!(b.kind, BlockKind::FrozenTube { .. }));
        let mut acc = Vec2::ZERO;
        for (k, b) in self.blocks.iter().enumerate() {
            acc = acc + if Some(k) == absorber {
                b.eval_near_minus(t, base, base_vel, off)
            } else {
                b.eval_near(t, base, off)
            };
        }
        if absorber.is_none() {
            acc = acc - base_vel;
        }
        acc
    }

    /// Sorted distinct window edges in [0,1], always including 0 and 1.
    pub fn seams(&self) -> Vec<f64> {
        let mut s = vec![0.0, 1.0];
        self.blocks.iter().for_each(|b| b.collect_seams(&mut s));
        s.retain(|x| (0.0..=1.0).contains(x));
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        s
    }

    pub fn exact_map(&self) -> Option<ExactMap> {
        match self.blocks.as_slice() {
            [b] => b.exact_map(),
            [] => None,
            bs => Block::sum(bs.to_vec()).exact_map(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field spec serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("field spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FieldError> {
        let f: FieldSpec = serde_json::from_str(s).map_err(|e| FieldError::Parse(e.to_string()))?;
        if f.period != 1.0 {
            return Err(FieldError::Parse(format!("period must be 1, got {}", f.period)));
        }
        Ok(f)
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let h = Sha256::digest(self.to_json().as_bytes());
        h.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Field supported in `(anchor - eta, anchor) x B_{3 rho/4}(center)` whose
/// time-one flow rotates `B_{rho/2}(center)` by pi.
pub fn build_rotation_bump(center: TorusPoint, rho: f64, eta: f64, anchor: f64) -> Result<FieldSpec, FieldError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(FieldError::InvalidParams(format!("rho {rho} must lie in (0,1)")));
    }
    if !(eta > 0.0 && eta < 1.0) || anchor - eta < 0.0 || anchor > 1.0 {
        return Err(FieldError::InvalidParams(format!("eta {eta}, anchor {anchor}")));
    }
    let c = [center.x(), center.y()];
    Ok(FieldSpec::new(vec![Block {
        time_window: [anchor - eta, anchor],
        support: Support::Ball { center: c, radius: 0.75 * rho },
        kind: BlockKind::RotationBump { center: c, rho, eta, anchor },
    }]))
}

/// Smallest distance between distinct tube centres over a time sample.
pub fn tube_separation(orbit: &Orbit, samples: usize) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=samples {
        let t = k as f64 / samples as f64;
        for i in 0..orbit.period {
            for j in i + 1..orbit.period {
                let d = wrap_vec(orbit.position(t + i as f64) - orbit.position(t + j as f64)).norm();
                if d < best.0 {
                    best = (d, t);
                }
            }
        }
    }
    best
}

/// Replaces `b` near the orbit by its value at the orbit point: inside
/// `B_{r/2}` around each tube centre the field is the orbit velocity.
pub fn freeze_tube(b: &FieldSpec, orbit: &Orbit, r: f64) -> Result<FieldSpec, FieldError> {
    if !(r > 0.0) {
        return Err(FieldError::InvalidParams(format!("tube radius {r}")));
    }
    let (d, t) = tube_separation(orbit, 512);
    if d <= 2.0 * r {
        return Err(FieldError::TubesOverlap { time: t, distance: d, radius: r });
    }
    let frozen = Block {
        time_window: [0.0, 1.0],
        support: Support::Tube { radius: r, period: orbit.period },
        kind: BlockKind::FrozenTube { child: Box::new(Block::sum(b.blocks.clone())), orbit: orbit.clone(), radius: r },
    };
    Ok(FieldSpec::new(vec![frozen]))
}

/// `v = u + (1/N) h((t+i)/N, y - X(t+i))` on the tubes.
pub fn insert_horseshoe_along_orbit(
    u: &FieldSpec,
    h: &FieldSpec,
    orbit: &Orbit,
    n: usize,
    r: f64,
) -> Result<FieldSpec, FieldError> {
    if n != orbit.period {
        return Err(FieldError::InvalidParams(format!("period {n} differs from orbit period {}", orbit.period)));
    }
    let support = h
        .blocks
        .iter()
        .map(|b| match &b.support {
            Support::Ball { center, radius } => Vec2::new(wrap_coord(center[0]), wrap_coord(center[1])).norm() + radius,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    if support > 0.25 * r * (1.0 + 1e-12) {
        return Err(FieldError::SupportTooLarge { support, limit: 0.25 * r });
    }
    let frozen_ok = u.blocks.iter().any(|b| match &b.kind {
        BlockKind::FrozenTube { orbit: o, radius, .. } => o == orbit && *radius >= r * (1.0 - 1e-12),
        _ => false,
    });
    if !frozen_ok {
        return Err(FieldError::InvalidParams("u is not frozen along this orbit at radius r".into()));
    }
    let mut blocks = u.blocks.clone();
    blocks.push(Block {
        time_window: [0.0, 1.0],
        support: Support::Tube { radius: 0.25 * r, period: n },
        kind: BlockKind::OrbitInserted { child: Box::new(Block::sum(h.blocks.clone())), orbit: orbit.clone(), period: n, radius: r },
    });
    Ok(FieldSpec::new(blocks))
}

/// Centre of the `N`-th block of the infinite-entropy ladder.
pub fn ladder_center(n: usize) -> TorusPoint {
    TorusPoint::new(-0.5, -1.0 + 2f64.powi(1 - n as i32))
}

/// Support radius of the `N`-th ladder block.
pub fn ladder_radius(n: usize) -> f64 {
    2f64.powi(-(n as i32) - 2)
}

/// Superposition of horseshoe blocks `N = 2..=n_max` on disjoint balls.
pub fn build_infinite_entropy_field(n_max: usize) -> Result<FieldSpec, FieldError> {
    if !(2..=12).contains(&n_max) {
        return Err(FieldError::InvalidParams(format!("n_max {n_max} outside 2..=12")));
    }
    let mut blocks = Vec::new();
    for n in 2..=n_max {
        let c = ladder_center(n);
        let b = build_horseshoe_block(n, ladder_radius(n), None)?;
        let Some(Block { kind: BlockKind::Rescaled { child, scale, .. }, .. }) = b.blocks.into_iter().next() else {
            unreachable!("horseshoe blocks are rescaled");
        };
        blocks.push(Block {
            time_window: [0.0, 1.0],
            support: Support::Ball { center: [c.x(), c.y()], radius: ladder_radius(n) },
            kind: BlockKind::Rescaled { child, scale, center: [c.x(), c.y()] },
        });
    }
    let tail: f64 = (n_max + 1..100_000).map(|k| 1.0 / (k as f64 * k as f64)).sum::<f64>() + 1.0 / 100_000.0;
    let mut f = FieldSpec::new(blocks);
    f.manifest = Some(serde_json::json!({
        "n_max": n_max,
        "tail_bound": tail,
        "tail_rule": "sum over N > n_max of N^-2",
    }));
    Ok(f)
}

/// Compresses the activity of `b` into `[0, 1 - eta]`: every window and
/// bump time is scaled by `1 - eta`, so the velocity is multiplied by
/// `1 / (1 - eta)` there and vanishes on `[1 - eta, 1]`. The time-one map
/// and the `L^1`-in-time norm are unchanged. When all windows are
/// pairwise disjoint, uniform stage profiles also become smooth ones,
/// which keeps each stage map and makes the velocity continuous in time.
pub fn compress_time(b: &FieldSpec, eta: f64) -> Result<FieldSpec, FieldError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(FieldError::InvalidParams(format!("eta {eta} outside (0,1)")));
    }
    let k = 1.0 - eta;
    let mut windows: Vec<[f64; 2]> = b.blocks.iter().map(|bl| bl.time_window).collect();
    windows.sort_by(|x, y| x[0].partial_cmp(&y[0]).unwrap());
    let disjoint = windows.windows(2).all(|w| w[1][0] >= w[0][1]);
    fn walk(bl: &Block, k: f64, smooth: bool) -> Result<Block, FieldError> {
        let kind = match &bl.kind {
            BlockKind::StreamStage(s) => {
                let mut s = s.clone();
                if smooth {
                    s.time_profile = TimeProfile::Smooth;
                }
                BlockKind::StreamStage(s)
            }
            BlockKind::RotationBump { center, rho, eta, anchor } => {
                BlockKind::RotationBump { center: *center, rho: *rho, eta: eta * k, anchor: anchor * k }
            }
            BlockKind::Rescaled { child, scale, center } => {
                BlockKind::Rescaled { child: Box::new(walk(child, k, smooth)?), scale: *scale, center: *center }
            }
            BlockKind::Sum { children } => BlockKind::Sum {
                children: children.iter().map(|c| walk(c, k, false)).collect::<Result<_, _>>()?,
            },
            BlockKind::Scaled { child, ln_factor } => {
                BlockKind::Scaled { child: Box::new(walk(child, k, smooth)?), ln_factor: *ln_factor }
            }
            BlockKind::FrozenTube { .. } | BlockKind::OrbitInserted { .. } => {
                return Err(FieldError::InvalidParams("tube blocks cannot be compressed in time".into()))
            }
        };
        Ok(Block { time_window: [bl.time_window[0] * k, bl.time_window[1] * k], support: bl.support.clone(), kind })
    }
    let blocks = b.blocks.iter().map(|bl| walk(bl, k, disjoint)).collect::<Result<Vec<_>, _>>()?;
    Ok(FieldSpec { period: 1.0, blocks, manifest: b.manifest.clone() })
}
