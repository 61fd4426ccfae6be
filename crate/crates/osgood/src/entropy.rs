//! Entropy lower bounds: pseudo-horseshoe certificates, cylinder counting
//! by curve tracking, Bowen separated sets and the combination rules.
//!
//! All entropies are in nats.

use crate::torus::{geodesic_distance, wrap_vec, Box2, TorusPoint, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("map oracle failed at ({x}, {y}): {message}")]
    OracleFailure { x: f64, y: f64, message: String },
    #[error("empty list of entropy pieces")]
    EmptyList,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Failure reported by a map oracle; the caller attaches the location.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct OracleError(pub String);

/// A map acting on frame-local coordinates.
pub trait MapOracle: Sync {
    fn image(&self, z: Vec2) -> Result<Vec2, OracleError>;
}

impl<F: Fn(Vec2) -> Result<Vec2, OracleError> + Sync> MapOracle for F {
    fn image(&self, z: Vec2) -> Result<Vec2, OracleError> {
        self(z)
    }
}

/// A map of the torus.
pub trait TorusMap: Sync {
    fn image(&self, p: &TorusPoint) -> Result<TorusPoint, OracleError>;
}

impl<F: Fn(&TorusPoint) -> Result<TorusPoint, OracleError> + Sync> TorusMap for F {
    fn image(&self, p: &TorusPoint) -> Result<TorusPoint, OracleError> {
        self(p)
    }
}

/// Views a torus map through a frame's local coordinates.
pub struct Framed<'a, M: TorusMap> {
    pub map: &'a M,
    pub frame: &'a HorseshoeFrame,
}

impl<M: TorusMap> MapOracle for Framed<'_, M> {
    fn image(&self, z: Vec2) -> Result<Vec2, OracleError> {
        let p = self.frame.to_torus(z);
        Ok(self.frame.to_local(&self.map.image(&p)?))
    }
}

fn at(z: Vec2, e: OracleError) -> EntropyError {
    EntropyError::OracleFailure { x: z.x, y: z.y, message: e.0 }
}

/// Location of a horseshoe frame: local `z` sits at `center + scale z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub scale: f64,
    pub center: [f64; 2],
}

/// The square `[-1/4,1/4]^2`, its `N` strips and the two end boxes, in
/// local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeFrame {
    pub n: usize,
    pub scale: f64,
    pub center: [f64; 2],
}

impl HorseshoeFrame {
    pub fn new(n: usize, scale: f64, center: [f64; 2]) -> Result<Self, EntropyError> {
        if n < 1 || !(scale > 0.0) {
            return Err(EntropyError::InvalidParams(format!("frame N={n} scale={scale}")));
        }
        Ok(HorseshoeFrame { n, scale, center })
    }

    pub fn unit(n: usize) -> Self {
        HorseshoeFrame { n, scale: 1.0, center: [0.0, 0.0] }
    }

    /// x-coordinate of the boundary segment `E_i`.
    pub fn boundary_x(&self, i: usize) -> f64 {
        -0.25 + i as f64 / (2 * self.n) as f64
    }

    pub fn strip(&self, i: usize) -> Box2 {
        Box2::closed(self.boundary_x(i), self.boundary_x(i + 1), -0.25, 0.25)
    }

    pub fn square() -> Box2 {
        Box2::closed(-0.25, 0.25, -0.25, 0.25)
    }

    pub fn d_minus() -> Box2 {
        Box2::open(-0.5, -1.0 / 3.0, -0.25, 0.25)
    }

    pub fn d_plus() -> Box2 {
        Box2::open(1.0 / 3.0, 0.5, -0.25, 0.25)
    }

    /// End box that `E_i` must land in: `D_+` for even `i`.
    pub fn target(&self, i: usize) -> Box2 {
        if i.is_multiple_of(2) {
            Self::d_plus()
        } else {
            Self::d_minus()
        }
    }

    pub fn to_torus(&self, z: Vec2) -> TorusPoint {
        TorusPoint::new(self.center[0] + self.scale * z.x, self.center[1] + self.scale * z.y)
    }

    pub fn to_local(&self, p: &TorusPoint) -> Vec2 {
        (1.0 / self.scale) * wrap_vec(p.as_vec() - Vec2::new(self.center[0], self.center[1]))
    }

    /// Strip index of a local point, if it lies in the closed square.
    pub fn strip_of(&self, z: Vec2) -> Option<usize> {
        if Self::square().clearance(z) < 0.0 {
            return None;
        }
        let k = ((z.x + 0.25) * (2 * self.n) as f64).floor();
        Some((k.max(0.0) as usize).min(self.n - 1))
    }
}

/// Sampling used by the certifier: points per boundary segment and
/// grid side for the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Density {
    pub per_segment: usize,
    pub square: usize,
}

impl Default for Density {
    fn default() -> Self {
        Density { per_segment: 1000, square: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeCertificate {
    #[serde(rename = "N")]
    pub n: usize,
    /// Smallest clearance of a sampled image to the complement of its
    /// target set, in frame-local units.
    #[serde(with = "crate::torus::nonfinite")]
    pub margin: f64,
    pub bound_nats: f64,
    pub sample_density: Density,
    pub pass: bool,
    pub frame: FrameGeometry,
    #[serde(with = "crate::torus::nonfinite")]
    pub square_clearance: f64,
    #[serde(with = "crate::torus::nonfinite")]
    pub boundary_clearance: f64,
}

impl HorseshoeCertificate {
    pub fn margin_absolute(&self) -> f64 {
        self.margin * self.frame.scale
    }
}

fn clearance_or_neg(c: f64) -> f64 {
    if c.is_nan() {
        f64::NEG_INFINITY
    } else {
        c
    }
}

/// Checks on samples that the square maps into the horizontal strip
/// `(-1/2,1/2) x (-1/4,1/4)` and each `E_i` into its end box.
pub fn certify_pseudo_horseshoe<M: MapOracle + ?Sized>(
    t: &M,
    frame: &HorseshoeFrame,
    density: Density,
) -> Result<HorseshoeCertificate, EntropyError> {
    if density.per_segment < 2 || density.square < 2 {
        return Err(EntropyError::InvalidParams("density below 2".into()));
    }
    let band = Box2::open(-0.5, 0.5, -0.25, 0.25);
    let g = density.square;
    let lin = |k: usize, m: usize| -0.25 + 0.5 * k as f64 / (m - 1) as f64;
    let square = (0..g)
        .into_par_iter()
        .map(|i| {
            let mut c = f64::INFINITY;
            for j in 0..g {
                let z = Vec2::new(lin(i, g), lin(j, g));
                let w = t.image(z).map_err(|e| at(z, e))?;
                c = c.min(clearance_or_neg(band.clearance(w)));
            }
            Ok(c)
        })
        .collect::<Result<Vec<f64>, EntropyError>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let boundary = (0..=frame.n)
        .into_par_iter()
        .map(|i| {
            let target = frame.target(i);
            let x = frame.boundary_x(i);
            let mut c = f64::INFINITY;
            for j in 0..density.per_segment {
                let z = Vec2::new(x, lin(j, density.per_segment));
                let w = t.image(z).map_err(|e| at(z, e))?;
                c = c.min(clearance_or_neg(target.clearance(w)));
            }
            Ok(c)
        })
        .collect::<Result<Vec<f64>, EntropyError>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let margin = square.min(boundary);
    Ok(HorseshoeCertificate {
        n: frame.n,
        margin,
        bound_nats: shift_entropy(frame.n),
        sample_density: density,
        pass: margin > 0.0,
        frame: FrameGeometry { scale: frame.scale, center: frame.center },
        square_clearance: square,
        boundary_clearance: boundary,
    })
}

/// Polyline control for curve tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Longest allowed image segment; `None` means `1/(8N)`.
    pub segment_length: Option<f64>,
    pub max_segments: usize,
    pub keep_witnesses: bool,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement { segment_length: None, max_segments: 1 << 20, keep_witnesses: false }
    }
}

/// A realized word with the curve witnessing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicItinerary {
    pub word: Vec<usize>,
    /// Polyline from `E_0` to `E_N` inside the coded intersection.
    pub witness: Vec<[f64; 2]>,
    /// Point on the initial horizontal segment whose forward orbit
    /// follows the word.
    pub seed: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub depth: usize,
    pub realized: u64,
    pub total: u64,
    #[serde(with = "crate::torus::nonfinite")]
    pub rate: f64,
    pub exhausted: Vec<Vec<usize>>,
    pub missing: Vec<Vec<usize>>,
    /// Words whose witness seed was iterated and coded.
    pub semiconjugacy_checked: u64,
    pub semiconjugacy_failures: Vec<Vec<usize>>,
    /// Words whose cylinder is too thin to hold a float seed.
    pub unresolved_witnesses: u64,
    pub witnesses: Vec<SymbolicItinerary>,
}

/// Sample of a tracked curve: parameter `u` on the initial segment and
/// the current image of `(u, 0)`.
#[derive(Debug, Clone, Copy)]
struct Knot {
    u: f64,
    p: Vec2,
}

/// A refined source curve and its image.
type CurvePair = (Vec<Knot>, Vec<Knot>);

struct Tracker<'a, M: MapOracle + ?Sized> {
    t: &'a M,
    frame: HorseshoeFrame,
    seg: f64,
    max_segments: usize,
}

enum Step {
    Curve(Vec<Knot>),
    Exhausted,
    Missing,
}

impl<M: MapOracle + ?Sized> Tracker<'_, M> {
    fn iterate(&self, u: f64, depth: usize) -> Result<Vec2, EntropyError> {
        let mut p = Vec2::new(u, 0.0);
        for _ in 0..depth {
            p = self.t.image(p).map_err(|e| at(p, e))?;
        }
        Ok(p)
    }

    /// Parameter where the curve at `depth` crosses `x = level` between
    /// two knots on opposite sides.
    fn crossing(&self, a: Knot, b: Knot, level: f64, depth: usize) -> Result<Knot, EntropyError> {
        let (mut lo, mut hi) = (a, b);
        let below = lo.p.x < level;
        for _ in 0..200 {
            if (hi.u - lo.u).abs() <= 4.0 * f64::EPSILON * hi.u.abs().max(1e-300) {
                break;
            }
            let u = 0.5 * (lo.u + hi.u);
            if u == lo.u || u == hi.u {
                break;
            }
            let m = Knot { u, p: self.iterate(u, depth)? };
            if (m.p.x < level) == below {
                lo = m;
            } else {
                hi = m;
            }
            if (m.p.x - level).abs() < 1e-14 {
                return Ok(m);
            }
        }
        Ok(if (lo.p.x - level).abs() <= (hi.p.x - level).abs() { lo } else { hi })
    }

    /// Sub-arc of a curve that runs from `x = from` to `x = to` without
    /// leaving the band between them; `from < to` is not required.
    fn sub_arc(&self, c: &[Knot], from: f64, to: f64, depth: usize) -> Result<Option<Vec<Knot>>, EntropyError> {
        let forward = to > from;
        let past = |x: f64, level: f64| if forward { x >= level } else { x <= level };
        let Some(end) = c.iter().position(|k| past(k.p.x, to)) else {
            return Ok(None);
        };
        let Some(start) = c[..end].iter().rposition(|k| !past(k.p.x, from) || k.p.x == from) else {
            return Ok(None);
        };
        let first = if c[start].p.x == from { c[start] } else { self.crossing(c[start], c[start + 1], from, depth)? };
        let last = if c[end].p.x == to { c[end] } else { self.crossing(c[end - 1], c[end], to, depth)? };
        // crossings are found to rounding; pin them to the levels
        let mut out = vec![Knot { u: first.u, p: Vec2::new(from, first.p.y) }];
        out.extend_from_slice(&c[start + 1..end]);
        out.push(Knot { u: last.u, p: Vec2::new(to, last.p.y) });
        Ok(Some(out))
    }

    /// Maps a curve at `depth` through the map, inserting knots until no
    /// image segment is longer than the control length. Returns the
    /// refined source curve and its image.
    fn advance(&self, c: &[Knot], depth: usize) -> Result<Option<CurvePair>, EntropyError> {
        let mut src_out: Vec<Knot> = Vec::with_capacity(2 * c.len());
        let mut out: Vec<Knot> = Vec::with_capacity(2 * c.len());
        let img = |k: Knot| -> Result<Knot, EntropyError> {
            Ok(Knot { u: k.u, p: self.t.image(k.p).map_err(|e| at(k.p, e))? })
        };
        src_out.push(c[0]);
        out.push(img(c[0])?);
        for w in c.windows(2) {
            let mut stack = vec![(w[1], img(w[1])?)];
            let mut left = (w[0], *out.last().unwrap());
            while let Some(&(src, dst)) = stack.last() {
                let tiny = (src.u - left.0.u).abs() <= 4.0 * f64::EPSILON * src.u.abs().max(1e-300);
                if (dst.p - left.1.p).norm() <= self.seg || tiny {
                    src_out.push(src);
                    out.push(dst);
                    left = (src, dst);
                    stack.pop();
                    if out.len() > self.max_segments + 1 {
                        return Ok(None);
                    }
                } else {
                    let u = 0.5 * (left.0.u + src.u);
                    let mid = Knot { u, p: self.iterate(u, depth)? };
                    stack.push((mid, img(mid)?));
                }
            }
        }
        Ok(Some((src_out, out)))
    }

    /// Curve for the word extended by `a`, at depth `depth + 1`.
    fn extend(&self, c: &[Knot], a: usize, depth: usize) -> Result<Step, EntropyError> {
        let (xa, xb) = (self.frame.boundary_x(a), self.frame.boundary_x(a + 1));
        let mut curve = c.to_vec();
        // refinement can reveal excursions out of the strip between old
        // knots; re-cut until the refined piece stays inside
        let image = loop {
            let Some(piece) = self.sub_arc(&curve, xa, xb, depth)? else {
                return Ok(Step::Missing);
            };
            let Some((src, image)) = self.advance(&piece, depth)? else {
                return Ok(Step::Exhausted);
            };
            let inside = src[1..src.len() - 1].iter().all(|k| k.p.x > xa && k.p.x < xb);
            if inside {
                break image;
            }
            curve = src;
        };
        let (from, to) = if image[0].p.x < 0.0 { (-0.25, 0.25) } else { (0.25, -0.25) };
        let Some(mut next) = self.sub_arc(&image, from, to, depth + 1)? else {
            return Ok(Step::Missing);
        };
        if next.iter().any(|k| k.p.y.abs() >= 0.25) {
            return Ok(Step::Missing);
        }
        if from > to {
            next.reverse();
        }
        Ok(Step::Curve(next))
    }
}

struct Tally {
    realized: u64,
    checked: u64,
    unresolved: u64,
    exhausted: Vec<Vec<usize>>,
    missing: Vec<Vec<usize>>,
    bad_coding: Vec<Vec<usize>>,
    witnesses: Vec<SymbolicItinerary>,
}

/// Counts words of length `depth` realized by tracked curves. Every
/// realized word is also checked against the coding of its seed point:
/// the coding of `T(seed)` must be the shifted word.
pub fn count_cylinders<M: MapOracle + ?Sized>(
    t: &M,
    frame: &HorseshoeFrame,
    depth: usize,
    refinement: Refinement,
) -> Result<CylinderReport, EntropyError> {
    if depth == 0 {
        return Err(EntropyError::InvalidParams("depth must be at least 1".into()));
    }
    let n = frame.n;
    let tracker = Tracker {
        t,
        frame: *frame,
        seg: refinement.segment_length.unwrap_or(1.0 / (8 * n) as f64),
        max_segments: refinement.max_segments,
    };
    let m = 8 * n;
    let root: Vec<Knot> = (0..=m)
        .map(|k| {
            let u = -0.25 + 0.5 * k as f64 / m as f64;
            Knot { u, p: Vec2::new(u, 0.0) }
        })
        .collect();
    let tallies = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut tally =
                Tally { realized: 0, checked: 0, unresolved: 0, exhausted: vec![], missing: vec![], bad_coding: vec![], witnesses: vec![] };
            let mut word = vec![a];
            walk(&tracker, &root, &mut word, depth, refinement.keep_witnesses, &mut tally)?;
            Ok(tally)
        })
        .collect::<Result<Vec<_>, EntropyError>>()?;
    let mut report = CylinderReport {
        n,
        depth,
        realized: 0,
        total: (n as u64).saturating_pow(depth as u32),
        rate: 0.0,
        exhausted: vec![],
        missing: vec![],
        semiconjugacy_checked: 0,
        semiconjugacy_failures: vec![],
        unresolved_witnesses: 0,
        witnesses: vec![],
    };
    for t in tallies {
        report.realized += t.realized;
        report.semiconjugacy_checked += t.checked;
        report.unresolved_witnesses += t.unresolved;
        report.exhausted.extend(t.exhausted);
        report.missing.extend(t.missing);
        report.semiconjugacy_failures.extend(t.bad_coding);
        report.witnesses.extend(t.witnesses);
    }
    report.rate = if report.realized > 0 { (report.realized as f64).ln() / depth as f64 } else { f64::NEG_INFINITY };
    Ok(report)
}

fn walk<M: MapOracle + ?Sized>(
    tr: &Tracker<'_, M>,
    curve: &[Knot],
    word: &mut Vec<usize>,
    depth: usize,
    keep: bool,
    tally: &mut Tally,
) -> Result<(), EntropyError> {
    let level = word.len() - 1;
    let a = *word.last().unwrap();
    match tr.extend(curve, a, level)? {
        Step::Missing => tally.missing.extend(all_extensions(word, depth, tr.frame.n)),
        Step::Exhausted => tally.exhausted.extend(all_extensions(word, depth, tr.frame.n)),
        Step::Curve(next) => {
            if word.len() == depth {
                tally.realized += 1;
                // a witness seed must reproduce its curve point when iterated
                // from scratch; deep cylinders can be thinner than the float
                // spacing of the seed segment
                let mid = next.len() / 2;
                let mut order: Vec<usize> = (1..next.len() - 1).collect();
                order.sort_by_key(|&i| i.abs_diff(mid));
                let mut seed = None;
                for i in order {
                    let k = next[i];
                    if (tr.iterate(k.u, depth)? - k.p).norm() <= 1e-9 {
                        seed = Some(k.u);
                        break;
                    }
                }
                match seed {
                    Some(u) => {
                        tally.checked += 1;
                        if !coding_shifts(tr, u, word)? {
                            tally.bad_coding.push(word.clone());
                        }
                    }
                    None => tally.unresolved += 1,
                }
                let seed = seed.unwrap_or(next[mid].u);
                if keep {
                    tally.witnesses.push(SymbolicItinerary {
                        word: word.clone(),
                        witness: next.iter().map(|k| [k.p.x, k.p.y]).collect(),
                        seed: [seed, 0.0],
                    });
                }
            } else {
                for b in 0..tr.frame.n {
                    word.push(b);
                    walk(tr, &next, word, depth, keep, tally)?;
                    word.pop();
                }
            }
        }
    }
    Ok(())
}

fn all_extensions(prefix: &[usize], depth: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![prefix.to_vec()];
    while out[0].len() < depth {
        out = out.into_iter().flat_map(|w| (0..n).map(move |b| [w.clone(), vec![b]].concat())).collect();
    }
    out
}

/// Strip indices of `z, T z, ...` (length `len`), each step required to
/// land back in the square; `None` once the orbit leaves.
pub fn coding<M: MapOracle + ?Sized>(
    t: &M,
    frame: &HorseshoeFrame,
    mut z: Vec2,
    len: usize,
) -> Result<Option<Vec<usize>>, EntropyError> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let Some(s) = frame.strip_of(z) else {
            return Ok(None);
        };
        out.push(s);
        z = t.image(z).map_err(|e| at(z, e))?;
    }
    if frame.strip_of(z).is_none() {
        return Ok(None);
    }
    Ok(Some(out))
}

fn coding_shifts<M: MapOracle + ?Sized>(tr: &Tracker<'_, M>, u: f64, word: &[usize]) -> Result<bool, EntropyError> {
    let z = Vec2::new(u, 0.0);
    let here = coding(tr.t, &tr.frame, z, word.len())?;
    let tz = tr.t.image(z).map_err(|e| at(z, e))?;
    let there = coding(tr.t, &tr.frame, tz, word.len() - 1)?;
    Ok(matches!((here, there), (Some(h), Some(s)) if h == word && s == word[1..]))
}

/// Sample grid of `region` in refinement order: coarser dyadic levels
/// first, lexicographic within a level, so a finer sample extends a
/// coarser one.
pub fn refinement_order(region: &Box2, samples: usize) -> Vec<TorusPoint> {
    let mut level = 0u32;
    while ((1usize << level) + 1).pow(2) < samples {
        level += 1;
    }
    let m = 1usize << level;
    let mut out = Vec::with_capacity((m + 1) * (m + 1));
    let pt = |i: usize, j: usize| {
        TorusPoint::new(
            region.x_min + (region.x_max - region.x_min) * i as f64 / m as f64,
            region.y_min + (region.y_max - region.y_min) * j as f64 / m as f64,
        )
    };
    for l in 0..=level {
        let stride = m >> l;
        for i in (0..=m).step_by(stride) {
            for j in (0..=m).step_by(stride) {
                let coarser = l > 0 && i % (2 * stride) == 0 && j % (2 * stride) == 0;
                if !coarser {
                    out.push(pt(i, j));
                }
            }
        }
    }
    out
}

/// `(1/n) ln |S|` for a greedy maximal `(n, eps)`-separated subset `S`
/// of a sample of `region`, distances in the Bowen metric
/// `max_{i<n} d(T^i x, T^i y)`.
pub fn bowen_entropy_estimate<M: TorusMap + ?Sized>(
    t: &M,
    region: &Box2,
    n: usize,
    eps: f64,
    samples: usize,
) -> Result<f64, EntropyError> {
    if n < 1 || !(eps > 0.0) {
        return Err(EntropyError::InvalidParams(format!("n={n} eps={eps}")));
    }
    let seeds = refinement_order(region, samples);
    let orbits = seeds
        .par_iter()
        .map(|p| {
            let mut orbit = Vec::with_capacity(n);
            let mut q = *p;
            for i in 0..n {
                orbit.push(q);
                if i + 1 < n {
                    q = t.image(&q).map_err(|e| EntropyError::OracleFailure { x: q.x(), y: q.y(), message: e.0 })?;
                }
            }
            Ok(orbit)
        })
        .collect::<Result<Vec<_>, EntropyError>>()?;
    // selected points bucketed by starting cell; only near starts can be
    // eps-close along the whole orbit
    let cells = ((2.0 / eps).floor() as i64).max(1);
    let cell_of = |p: &TorusPoint| {
        let f = |v: f64| (((v + 1.0) / 2.0 * cells as f64).floor() as i64).rem_euclid(cells);
        (f(p.x()), f(p.y()))
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut count = 0usize;
    for (k, orbit) in orbits.iter().enumerate() {
        let (cx, cy) = cell_of(&orbit[0]);
        let mut separated = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                let key = ((cx + dx).rem_euclid(cells), (cy + dy).rem_euclid(cells));
                if let Some(list) = buckets.get(&key) {
                    for &s in list {
                        let other = &orbits[s];
                        if !orbit.iter().zip(other).any(|(a, b)| geodesic_distance(a, b) > eps) {
                            separated = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if separated {
            buckets.entry((cx, cy)).or_default().push(k);
            count += 1;
        }
    }
    Ok((count as f64).ln() / n as f64)
}

/// Entropy of a map that is the union of invariant pieces.
pub fn combine_invariant_pieces(bounds: &[f64]) -> Result<f64, EntropyError> {
    bounds.iter().cloned().reduce(f64::max).ok_or(EntropyError::EmptyList)
}

/// Entropy bound for `T` from one for `T^n`.
pub fn entropy_of_iterate(h_of_iterate: f64, n: usize) -> f64 {
    assert!(n >= 1, "iterate order must be positive");
    h_of_iterate / n as f64
}

/// Entropy of the full shift on `n` symbols.
pub fn shift_entropy(n: usize) -> f64 {
    (n as f64).ln()
}

/// Entropy in bits.
pub fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
