//! Horseshoe blocks: an area-preserving stage chain folding the square
//! `[-1/4,1/4]^2` into `N` horizontal crossings of itself.
//!
//! The chain stretches the square into a horizontal ribbon made of `M`
//! legs (a remap), then folds it leg by leg into a zig-zag with
//! vertical/horizontal shear pairs, and finally recentres, squeezes and
//! turns it by pi so that the strip boundaries land in alternating end
//! boxes.

use super::profile::{Profile, Term, RAMP_BLEND};
use super::stage::{Stage, StageChain};
use super::{Block, BlockKind, Cutoff, FieldError, FieldSpec, Support, TimeProfile};
use crate::entropy::{certify_pseudo_horseshoe, Density, HorseshoeFrame};
use crate::torus::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Shape parameters of a fold design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeParams {
    /// Leg indices at which the strip boundaries sit; first 0, last `M`.
    pub tips: Vec<usize>,
    /// Length of folded (odd) legs relative to flat ones.
    pub leg_ratio: f64,
    /// Total ribbon length, in units of half the square side.
    pub stretch: f64,
    /// Final half-width of the folded ribbon.
    pub half_width: f64,
    /// Clearance between neighbouring legs, relative to leg thickness.
    pub gap: f64,
    /// Vertical room of a fold, relative to the folded leg thickness.
    pub fold_room: f64,
    /// Fraction of each fold leg used by the smooth turn.
    pub turn: f64,
    /// Contraction applied between folds.
    pub squeeze: f64,
    /// Width of slope transitions in the remap, relative to the thinnest leg.
    pub knot_blend: f64,
}

impl HorseshoeParams {
    #[allow(clippy::too_many_arguments)]
    fn new(
        tips: Vec<usize>,
        turn: f64,
        leg_ratio: f64,
        stretch: f64,
        squeeze: f64,
        half_width: f64,
        fold_room: f64,
        knot_blend: f64,
    ) -> Self {
        HorseshoeParams { tips, leg_ratio, stretch, half_width, gap: 0.1, fold_room, turn, squeeze, knot_blend }
    }
}

/// Tuned designs for `N = 2..=12`.
pub fn horseshoe_params(n: usize) -> Result<HorseshoeParams, FieldError> {
    let seq = |m: usize| (0..=m).collect::<Vec<_>>();
    let p = match n {
        2 => HorseshoeParams::new(vec![0, 3, 6], 0.05, 2.0, 2.6, 1.4, 0.41, 1.05, 0.3),
        3 => HorseshoeParams::new(seq(3), 0.1, 1.5, 2.9, 1.2, 0.39, 1.05, 0.3),
        4 => HorseshoeParams::new(seq(4), 0.02, 2.0, 2.3, 1.4, 0.40, 0.95, 0.1),
        5 => HorseshoeParams::new(seq(5), 0.1, 1.5, 2.9, 1.7, 0.39, 1.05, 0.3),
        6 => HorseshoeParams::new(seq(6), 0.04, 2.0, 2.9, 1.4, 0.39, 0.95, 0.3),
        7 => HorseshoeParams::new(seq(7), 0.1, 1.5, 2.9, 1.4, 0.39, 1.05, 0.3),
        8 => HorseshoeParams::new(seq(8), 0.02, 1.5, 2.9, 1.4, 0.41, 0.95, 0.3),
        9 => HorseshoeParams::new(seq(9), 0.1, 1.5, 2.6, 1.4, 0.39, 1.05, 0.3),
        10 => HorseshoeParams::new(seq(10), 0.06, 1.5, 2.3, 1.4, 0.39, 0.95, 0.3),
        11 => HorseshoeParams::new(seq(11), 0.02, 1.5, 2.0, 1.4, 0.39, 0.95, 0.3),
        12 => HorseshoeParams::new(seq(12), 0.02, 1.5, 2.0, 1.4, 0.39, 0.95, 0.3),
        _ => return Err(FieldError::InvalidParams(format!("no horseshoe design for N = {n}"))),
    };
    Ok(p)
}

/// Builds the unscaled fold chain for `n` strips.
pub fn fold_chain(n: usize, p: &HorseshoeParams) -> Result<StageChain, FieldError> {
    let legs = *p.tips.last().unwrap_or(&0);
    if p.tips.len() != n + 1 || p.tips[0] != 0 || p.tips.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FieldError::InvalidParams("tips must increase from 0 with N+1 entries".into()));
    }
    let q = p.leg_ratio;
    let rel_len = |l: usize| if l.is_multiple_of(2) { 1.0 } else { q };

    // each strip is shared among its legs in proportion to their lengths
    let mut area = vec![0.0; legs];
    for i in 0..n {
        let span = p.tips[i]..p.tips[i + 1];
        let total: f64 = span.clone().map(rel_len).sum();
        for l in span {
            area[l] = rel_len(l) / total / (4.0 * n as f64);
        }
    }
    let unit = 0.5 * p.stretch / (0..legs).map(rel_len).sum::<f64>();
    let widths: Vec<f64> = area.iter().map(|a| 2.0 * a).collect();
    let mut knots = vec![-0.25];
    for w in &widths {
        knots.push(knots.last().unwrap() + w);
    }
    let slopes: Vec<f64> = (0..legs).map(|l| rel_len(l) * unit / widths[l]).collect();
    let blend = p.knot_blend * widths.iter().cloned().fold(f64::INFINITY, f64::min);
    let remap = Stage::Remap {
        slope: Profile {
            base: slopes[0],
            terms: (1..legs)
                .map(|i| Term::Step { start: knots[i] - 0.5 * blend, width: blend, weight: slopes[i] - slopes[i - 1] })
                .collect(),
        },
    };

    let mut stages = vec![remap];
    let mut tips: Vec<Vec2> = knots.iter().map(|&k| stages[0].map(1.0, Vec2::new(k, 0.0))).collect();
    let push = |stages: &mut Vec<Stage>, tips: &mut Vec<Vec2>, s: Stage| {
        for t in tips.iter_mut() {
            *t = s.map(1.0, *t);
        }
        stages.push(s);
    };
    let thick: Vec<f64> = slopes.iter().map(|s| 0.5 / s).collect();
    let mut shrink = 1.0;
    for j in 0..legs / 2 {
        let lo = 2 * j + 1;
        if lo >= legs {
            break;
        }
        let (a, b) = (tips[lo].x, tips[lo + 1].x);
        let t_before = thick[lo - 1] * shrink;
        let t_fold = thick[lo] * shrink;
        let t_after = if lo + 1 < legs { thick[lo + 1] * shrink } else { t_fold };
        let gap = p.gap * t_before;
        let room = p.fold_room * t_fold * (1.0 + q);
        let height = t_before / 2.0 + gap + room + gap + t_after / 2.0;
        let g0 = 1.0 / (2.0 * (1.0 + q));
        let r1 = (t_before / 2.0 + gap + g0 * room) / height;
        let r2 = (t_after / 2.0 + gap + g0 * room) / height;
        let turn = p.turn / q;
        let d = b - a;
        let lift = Stage::VerticalShear {
            f: Profile {
                base: -height / 2.0,
                terms: vec![
                    Term::Step { start: a, width: turn * d, weight: height * r1 },
                    Term::Ramp {
                        start: a + turn * d,
                        width: (1.0 - 2.0 * turn) * d,
                        weight: height * (1.0 - r1 - r2),
                        blend: RAMP_BLEND,
                    },
                    Term::Step { start: b - turn * d, width: turn * d, weight: height * r2 },
                ],
            },
        };
        push(&mut stages, &mut tips, lift);
        let ya = tips[lo].y + t_before / 2.0 + gap;
        let yb = tips[lo + 1].y - t_after / 2.0 - gap;
        let span = tips[lo + 1].x - tips[lo - 1].x;
        let slide = Stage::HorizontalShear {
            g: Profile {
                base: span / 2.0,
                terms: vec![Term::Ramp { start: ya, width: yb - ya, weight: -span, blend: RAMP_BLEND }],
            },
        };
        push(&mut stages, &mut tips, slide);
        let recentre = bbox_shift(&stages);
        push(&mut stages, &mut tips, recentre);
        if p.squeeze != 1.0 && 2 * j + 3 < legs {
            push(&mut stages, &mut tips, Stage::Saddle { factor: p.squeeze });
            shrink /= p.squeeze;
        }
    }
    let (x0, x1) = min_max(tips.iter().map(|t| t.x));
    let (y0, y1) = min_max(tips.iter().map(|t| t.y));
    stages.push(Stage::Shift { dx: -(x0 + x1) / 2.0, dy: -(y0 + y1) / 2.0 });
    stages.push(Stage::Saddle { factor: p.half_width / ((x1 - x0) / 2.0) });
    stages.push(Stage::Rotate { angle: PI });
    Ok(StageChain { stages })
}

fn min_max<I: Iterator<Item = f64>>(it: I) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Shift centring the bounding box of the current image of three
/// horizontal lines through the square.
fn bbox_shift(stages: &[Stage]) -> Stage {
    let chain = StageChain { stages: stages.to_vec() };
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = xs;
    for y in [0.0, -0.25, 0.25] {
        for k in 0..=2000 {
            let q = chain.apply(Vec2::new(-0.25 + 0.5 * k as f64 / 2000.0, y));
            xs = (xs.0.min(q.x), xs.1.max(q.x));
            ys = (ys.0.min(q.y), ys.1.max(q.y));
        }
    }
    Stage::Shift { dx: -(xs.0 + xs.1) / 2.0, dy: -(ys.0 + ys.1) / 2.0 }
}

/// Largest radius reached by any stage trajectory of the square. Every
/// stage moves `|p|^2` convexly in its parameter, so endpoints suffice.
pub fn chain_reach(chain: &StageChain) -> f64 {
    let g = 81;
    let mut r: f64 = 0.0;
    for i in 0..g {
        for j in 0..g {
            let p = Vec2::new(-0.25 + 0.5 * i as f64 / (g - 1) as f64, -0.25 + 0.5 * j as f64 / (g - 1) as f64);
            r = r.max(p.norm());
            for q in chain.trace(p) {
                r = r.max(q.norm());
            }
        }
    }
    r
}

/// Points per strip boundary checked before a block is accepted.
pub const GATE_DENSITY: Density = Density { per_segment: 1000, square: 101 };

/// Outer cutoff radius of the stages, in units of the fold frame. A wide
/// annulus between the reach of the folds and this radius keeps the
/// cutoff gradients, and so the field's modulus seminorm, small.
pub const CUTOFF_OUTER: f64 = 3.0;

/// Scale of the fold frame of a block whose support has radius `scale`.
pub fn frame_scale(scale: f64) -> f64 {
    scale / CUTOFF_OUTER
}

/// Builds the `n`-strip horseshoe block supported in the ball of radius
/// `scale` about the origin; its fold frame has scale
/// [`frame_scale`]`(scale)`. The block is rejected unless its exact
/// time-one map certifies.
pub fn build_horseshoe_block(n: usize, scale: f64, params: Option<HorseshoeParams>) -> Result<FieldSpec, FieldError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(FieldError::InvalidParams(format!("scale {scale} outside (0, 1]")));
    }
    let params = match params {
        Some(p) => p,
        None => horseshoe_params(n)?,
    };
    let chain = fold_chain(n, &params)?;
    let reach = chain_reach(&chain);
    let inner = (reach + 0.02).max(0.9);
    if reach >= inner {
        return Err(FieldError::SupportTooLarge { support: reach, limit: inner });
    }
    let cutoff = Cutoff { inner, outer: CUTOFF_OUTER };
    let k = chain.stages.len() as f64;
    let children: Vec<Block> = chain
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| Block::stage(s.clone(), [i as f64 / k, (i + 1) as f64 / k], Some(cutoff), TimeProfile::Smooth))
        .collect();
    let cost: f64 = chain.stages.iter().map(Stage::gradient_cost).sum();

    let frame = HorseshoeFrame::unit(n);
    let cert = certify_pseudo_horseshoe(&|z: Vec2| Ok(chain.apply(z)), &frame, GATE_DENSITY)
        .map_err(|e| FieldError::InvalidParams(e.to_string()))?;
    if !cert.pass {
        return Err(FieldError::CertificationFailed { n, margin: cert.margin });
    }

    let sum = Block {
        time_window: [0.0, 1.0],
        support: Support::Ball { center: [0.0, 0.0], radius: CUTOFF_OUTER },
        kind: BlockKind::Sum { children },
    };
    let block = Block {
        time_window: [0.0, 1.0],
        support: Support::Ball { center: [0.0, 0.0], radius: scale },
        kind: BlockKind::Rescaled { child: Box::new(sum), scale: frame_scale(scale), center: [0.0, 0.0] },
    };
    let mut f = FieldSpec::new(vec![block]);
    f.manifest = Some(serde_json::json!({
        "N": n,
        "scale": scale,
        "frame_scale": frame_scale(scale),
        "margin": cert.margin,
        "reach": reach,
        "gradient_cost": cost,
        "params": params,
    }));
    Ok(f)
}
