//! Sampled estimates of `int_0^1 (|b(t)|_sup + [b(t)]_omega) dt`.

use super::{BlockKind, FieldSpec, Support};
use crate::moduli::{omega_seminorm, Modulus};
use crate::torus::{geodesic_distance, TorusPoint, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Uniform grid over the cell plus a local grid on every small ball or
/// tube support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub resolution: usize,
    pub local_resolution: usize,
}

impl SpaceGrid {
    pub fn new(resolution: usize, local_resolution: usize) -> Self {
        SpaceGrid { resolution, local_resolution }
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.resolution as f64
    }
}

impl Default for SpaceGrid {
    fn default() -> Self {
        SpaceGrid::new(48, 96)
    }
}

/// `per_interval` midpoint nodes between consecutive window seams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub per_interval: usize,
}

impl TimeGrid {
    pub fn new(per_interval: usize) -> Self {
        TimeGrid { per_interval }
    }

    /// `(time, weight)` nodes adapted to the field's seams.
    pub fn nodes(&self, field: &FieldSpec) -> Vec<(f64, f64)> {
        let seams = field.seams();
        let k = self.per_interval.max(1);
        let mut out = Vec::new();
        for w in seams.windows(2) {
            let len = w[1] - w[0];
            if len <= 0.0 {
                continue;
            }
            for j in 0..k {
                out.push((w[0] + len * (j as f64 + 0.5) / k as f64, len / k as f64));
            }
        }
        out
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::new(4)
    }
}

#[derive(Debug, Clone, Copy)]
struct Group {
    start: usize,
    n: usize,
}

/// Sample points made of square grids; pairs of grid neighbours are
/// always examined, other pairs on a subsample.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub points: Vec<TorusPoint>,
    groups: Vec<Group>,
}

impl SampleSet {
    fn push_grid(&mut self, center: Vec2, half: f64, n: usize) {
        let start = self.points.len();
        let h = 2.0 * half / n as f64;
        for j in 0..n {
            for i in 0..n {
                let x = center.x - half + (i as f64 + 0.5) * h;
                let y = center.y - half + (j as f64 + 0.5) * h;
                self.points.push(TorusPoint::new(x, y));
            }
        }
        self.groups.push(Group { start, n });
    }

    /// Samples for `field` at time `t` (tubes are placed only when `t` is given).
    pub fn for_field(field: &FieldSpec, grid: &SpaceGrid, t: Option<f64>) -> Self {
        let mut s = SampleSet::default();
        s.push_grid(Vec2::ZERO, 1.0, grid.resolution);
        let coarse = grid.spacing();
        for b in &field.blocks {
            match (&b.support, &b.kind) {
                (Support::Ball { center, radius }, _) if *radius < 8.0 * coarse => {
                    s.push_grid(Vec2::new(center[0], center[1]), 1.05 * radius, grid.local_resolution);
                }
                (Support::Tube { radius, .. }, BlockKind::FrozenTube { orbit, .. })
                | (Support::Tube { radius, .. }, BlockKind::OrbitInserted { orbit, .. }) => {
                    if let Some(t) = t {
                        let tm = t - t.floor();
                        for i in 0..orbit.period {
                            let c = orbit.point(tm + i as f64);
                            s.push_grid(c.as_vec(), 1.05 * radius, grid.local_resolution);
                        }
                    }
                }
                _ => {}
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lower estimate of the omega-seminorm of `values` (aligned with points).
    pub fn seminorm(&self, values: &[Vec2], m: &Modulus, max_scale: f64) -> f64 {
        let near = self
            .groups
            .par_iter()
            .map(|g| {
                let mut best = 0.0f64;
                for j in 0..g.n {
                    for i in 0..g.n {
                        let a = g.start + j * g.n + i;
                        for dj in 0..=2usize {
                            for di in -2i64..=2 {
                                if dj == 0 && di <= 0 {
                                    continue;
                                }
                                let (ii, jj) = (i as i64 + di, j + dj);
                                if ii < 0 || ii >= g.n as i64 || jj >= g.n {
                                    continue;
                                }
                                let b = g.start + jj * g.n + ii as usize;
                                let d = geodesic_distance(&self.points[a], &self.points[b]);
                                if d > 0.0 && d < max_scale {
                                    best = best.max((values[a] - values[b]).norm() / m.eval(d));
                                }
                            }
                        }
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
        let stride = (self.points.len() / 1500).max(1);
        let sub: Vec<(TorusPoint, Vec2)> =
            (0..self.points.len()).step_by(stride).map(|k| (self.points[k], values[k])).collect();
        near.max(omega_seminorm(&sub, m, max_scale))
    }
}

impl FieldSpec {
    /// Time-independent sample points (no tube grids).
    pub fn sample_points(&self, grid: &SpaceGrid) -> Vec<TorusPoint> {
        SampleSet::for_field(self, grid, None).points
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub sup_part: f64,
    pub seminorm_part: f64,
    pub time_nodes: usize,
    pub max_space_samples: usize,
    /// `[t, sup, seminorm]` per node.
    pub per_node: Vec<[f64; 3]>,
}

fn estimate<E>(eval: E, samples: impl Fn(f64) -> SampleSet, nodes: &[(f64, f64)], m: &Modulus) -> NormEstimate
where
    E: Fn(f64, &TorusPoint) -> Vec2 + Sync,
{
    let mut per_node = Vec::with_capacity(nodes.len());
    let (mut sup_part, mut semi_part, mut most) = (0.0, 0.0, 0);
    for &(t, w) in nodes {
        let s = samples(t);
        most = most.max(s.len());
        let vals: Vec<Vec2> = s.points.par_iter().map(|p| eval(t, p)).collect();
        let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let semi = if sup == 0.0 { 0.0 } else { s.seminorm(&vals, m, f64::INFINITY) };
        sup_part += w * sup;
        semi_part += w * semi;
        per_node.push([t, sup, semi]);
    }
    NormEstimate {
        value: sup_part + semi_part,
        sup_part,
        seminorm_part: semi_part,
        time_nodes: nodes.len(),
        max_space_samples: most,
        per_node,
    }
}

/// Sampled `L^1_per c_omega` norm; a lower estimate of the true norm.
pub fn field_norm_estimate(b: &FieldSpec, m: &Modulus, time_grid: &TimeGrid, space_grid: &SpaceGrid) -> NormEstimate {
    let nodes = time_grid.nodes(b);
    estimate(|t, p| b.eval(t, p), |t| SampleSet::for_field(b, space_grid, Some(t)), &nodes, m)
}

/// Sampled norm of `a - b`, on the union of both sample sets and seams.
pub fn field_distance_estimate(
    a: &FieldSpec,
    b: &FieldSpec,
    m: &Modulus,
    time_grid: &TimeGrid,
    space_grid: &SpaceGrid,
) -> NormEstimate {
    let union = FieldSpec::new(a.blocks.iter().chain(b.blocks.iter()).cloned().collect());
    let nodes = time_grid.nodes(&union);
    estimate(
        |t, p| a.eval(t, p) - b.eval(t, p),
        |t| SampleSet::for_field(&union, space_grid, Some(t)),
        &nodes,
        m,
    )
}

/// Per-node pair statistics of a block in its own (unwrapped) frame,
/// reusable across scales.
///
/// For `b_s(x) = s b(x/s)` the sup is `s sup|b|` and a sampled pair at
/// frame distance `d` with difference `D` contributes `s D / omega(s d)`.
/// Pairs are binned by `ln d` (bin width 1/50); each bin keeps its
/// smallest distance and largest difference, which only overestimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledProfile {
    pub nodes: Vec<ProfileNode>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileNode {
    pub time: f64,
    pub weight: f64,
    pub sup: f64,
    /// `(d_min, diff_max)` per distance bin.
    pub bins: Vec<(f64, f64)>,
}

const BINS_PER_UNIT: f64 = 50.0;

impl ScaledProfile {
    /// Samples `child` on a square grid of side `resolution` over its
    /// support and on two line grids, `fine` points along x by
    /// `resolution` rows and the transpose. The stages vary sharply in
    /// one coordinate only, so the line grids resolve their gradients.
    pub fn new(child: &super::Block, time_grid: &TimeGrid, resolution: usize, fine: usize) -> Self {
        let f = FieldSpec::new(vec![child.clone()]);
        let half = child.support_radius();
        let mut points: Vec<Vec2> = Vec::new();
        let mut groups = Vec::new();
        let mut rect = |nx: usize, ny: usize| {
            let (hx, hy) = (2.0 * half / nx as f64, 2.0 * half / ny as f64);
            groups.push(Rect { start: points.len(), nx, ny });
            for j in 0..ny {
                for i in 0..nx {
                    points.push(Vec2::new(-half + (i as f64 + 0.5) * hx, -half + (j as f64 + 0.5) * hy));
                }
            }
        };
        rect(resolution, resolution);
        if fine > 0 {
            rect(fine, resolution);
            rect(resolution, fine);
        }
        let coarse = resolution * resolution;
        let nodes = time_grid
            .nodes(&f)
            .into_iter()
            .map(|(t, w)| {
                let vals: Vec<Vec2> = points.par_iter().map(|p| child.eval(t, *p)).collect();
                let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let bins = if sup == 0.0 { Vec::new() } else { pair_bins(&points, &groups, coarse, &vals) };
                ProfileNode { time: t, weight: w, sup, bins }
            })
            .collect();
        ScaledProfile { nodes, samples: points.len() }
    }

    /// Norm estimate of the block rescaled by `exp(ln_scale)`.
    pub fn estimate(&self, ln_scale: f64, m: &Modulus) -> NormEstimate {
        let s = ln_scale.exp();
        let mut per_node = Vec::with_capacity(self.nodes.len());
        let (mut sup_part, mut semi_part) = (0.0, 0.0);
        for node in &self.nodes {
            let semi = node.bins.iter().map(|&(d, diff)| s * diff / m.eval(s * d)).fold(0.0, f64::max);
            sup_part += node.weight * s * node.sup;
            semi_part += node.weight * semi;
            per_node.push([node.time, s * node.sup, semi]);
        }
        NormEstimate {
            value: sup_part + semi_part,
            sup_part,
            seminorm_part: semi_part,
            time_nodes: self.nodes.len(),
            max_space_samples: self.samples,
            per_node,
        }
    }
}

/// `(d_min, diff_max)` per `ln d` bin over grid neighbours and a
/// subsample of all pairs.
#[derive(Debug, Clone, Copy)]
struct Rect {
    start: usize,
    nx: usize,
    ny: usize,
}

fn pair_bins(points: &[Vec2], groups: &[Rect], coarse: usize, values: &[Vec2]) -> Vec<(f64, f64)> {
    type Bins = std::collections::BTreeMap<i64, (f64, f64)>;
    fn add(bins: &mut Bins, points: &[Vec2], values: &[Vec2], a: usize, b: usize) {
        let d = (points[a] - points[b]).norm();
        let diff = (values[a] - values[b]).norm();
        if d <= 0.0 || diff == 0.0 {
            return;
        }
        let e = bins.entry((d.ln() * BINS_PER_UNIT).floor() as i64).or_insert((d, diff));
        e.0 = e.0.min(d);
        e.1 = e.1.max(diff);
    }
    fn merge(mut a: Bins, b: Bins) -> Bins {
        for (k, (d, diff)) in b {
            let e = a.entry(k).or_insert((d, diff));
            e.0 = e.0.min(d);
            e.1 = e.1.max(diff);
        }
        a
    }
    let mut bins = Bins::new();
    for g in groups {
        let (nx, ny) = (g.nx, g.ny);
        let rows = (0..ny)
            .into_par_iter()
            .map(|j| {
                let mut local = Bins::new();
                for i in 0..nx {
                    for dj in 0..=2usize {
                        for di in -2i64..=2 {
                            if dj == 0 && di <= 0 {
                                continue;
                            }
                            let (ii, jj) = (i as i64 + di, j + dj);
                            if ii < 0 || ii >= nx as i64 || jj >= ny {
                                continue;
                            }
                            add(&mut local, points, values, g.start + j * nx + i, g.start + jj * nx + ii as usize);
                        }
                    }
                }
                local
            })
            .reduce(Bins::new, merge);
        bins = merge(bins, rows);
    }
    let stride = (coarse / 1500).max(1);
    let sub: Vec<usize> = (0..coarse).step_by(stride).collect();
    for (k, &a) in sub.iter().enumerate() {
        for &b in &sub[k + 1..] {
            add(&mut bins, points, values, a, b);
        }
    }
    bins.into_values().collect()
}
