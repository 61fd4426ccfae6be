//! Osgood moduli of continuity, the Osgood integral and the
//! Bihari-LaSalle comparison bound.

use crate::fields::{FieldSpec, SpaceGrid, TimeGrid};
use crate::torus::{geodesic_distance, TorusPoint, Vec2, DIAMETER};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulusError {
    #[error("modulus is not increasing near s = {0}")]
    NonMonotone(f64),
    #[error("argument {0} outside the domain")]
    DomainError(f64),
    #[error("invalid modulus parameters: {0}")]
    InvalidParams(String),
    #[error("no dyadic scale down to {finest} keeps the excluded mass below the threshold")]
    NoAdmissibleScale { finest: f64 },
}

/// Closed-form family of the modulus near zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModulusKind {
    /// `-s ln s`
    LogLipschitz {},
    /// `s (ln 1/s)^exponent`
    PowerLog { exponent: f64 },
    /// `s^alpha`
    Holder { alpha: f64 },
    /// `s`
    Linear {},
}

/// A modulus given by its closed form on `(0, crossover]` and extended
/// affinely (matching value and slope) beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    #[serde(flatten)]
    pub kind: ModulusKind,
    pub crossover: f64,
}

impl Modulus {
    /// `-s ln s` up to `e^-2`, affine beyond.
    pub fn log_lipschitz() -> Self {
        Modulus { kind: ModulusKind::LogLipschitz {}, crossover: (-2.0f64).exp() }
    }

    pub fn power_log(exponent: f64) -> Result<Self, ModulusError> {
        // concave and increasing below the crossover when ln(1/s*) > exponent + 1
        let l = 2.0f64.max(exponent + 1.5);
        Self::with_crossover(ModulusKind::PowerLog { exponent }, (-l).exp())
    }

    pub fn holder(alpha: f64) -> Result<Self, ModulusError> {
        Self::with_crossover(ModulusKind::Holder { alpha }, 1.0)
    }

    pub fn linear() -> Self {
        Modulus { kind: ModulusKind::Linear {}, crossover: 1.0 }
    }

    pub fn with_crossover(kind: ModulusKind, crossover: f64) -> Result<Self, ModulusError> {
        let m = Modulus { kind, crossover };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModulusError> {
        let c = self.crossover;
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModulusError::InvalidParams(format!("crossover {c}")));
        }
        match self.kind {
            ModulusKind::LogLipschitz {} => {
                if c > (-1.0f64).exp() {
                    return Err(ModulusError::InvalidParams("log-Lipschitz crossover must be below 1/e".into()));
                }
            }
            ModulusKind::PowerLog { exponent } => {
                if !(exponent > 0.0) || -c.ln() <= exponent + 1.0 {
                    return Err(ModulusError::InvalidParams(format!(
                        "power-log exponent {exponent} with crossover {c}"
                    )));
                }
            }
            ModulusKind::Holder { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(ModulusError::InvalidParams(format!("holder exponent {alpha}")));
                }
            }
            ModulusKind::Linear {} => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModulusKind::LogLipschitz {} => "log_lipschitz",
            ModulusKind::PowerLog { .. } => "power_log",
            ModulusKind::Holder { .. } => "holder",
            ModulusKind::Linear {} => "linear",
        }
    }

    fn core(&self, s: f64) -> f64 {
        match self.kind {
            ModulusKind::LogLipschitz {} => -s * s.ln(),
            ModulusKind::PowerLog { exponent } => s * (-s.ln()).powf(exponent),
            ModulusKind::Holder { alpha } => s.powf(alpha),
            ModulusKind::Linear {} => s,
        }
    }

    fn core_slope(&self, s: f64) -> f64 {
        match self.kind {
            ModulusKind::LogLipschitz {} => -s.ln() - 1.0,
            ModulusKind::PowerLog { exponent: p } => {
                let l = -s.ln();
                l.powf(p) - p * l.powf(p - 1.0)
            }
            ModulusKind::Holder { alpha } => alpha * s.powf(alpha - 1.0),
            ModulusKind::Linear {} => 1.0,
        }
    }

    /// Coefficients `(a, b)` of the affine extension `a + b s`.
    fn affine(&self) -> (f64, f64) {
        let c = self.crossover;
        let b = self.core_slope(c);
        (self.core(c) - b * c, b)
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s <= self.crossover {
            self.core(s)
        } else {
            let (a, b) = self.affine();
            a + b * s
        }
    }

    /// Antiderivative of `1/core` as a function of `ln s`.
    fn core_antideriv(&self, ls: f64) -> f64 {
        match self.kind {
            ModulusKind::LogLipschitz {} => -(-ls).ln(),
            ModulusKind::PowerLog { exponent: p } => {
                let l = -ls;
                if (p - 1.0).abs() < 1e-15 {
                    -l.ln()
                } else {
                    -l.powf(1.0 - p) / (1.0 - p)
                }
            }
            ModulusKind::Holder { alpha } => {
                if alpha == 1.0 {
                    ls
                } else {
                    ((1.0 - alpha) * ls).exp() / (1.0 - alpha)
                }
            }
            ModulusKind::Linear {} => ls,
        }
    }

    /// Inverse of `core_antideriv`, returning `ln s`.
    fn core_antideriv_inv(&self, g: f64) -> f64 {
        match self.kind {
            ModulusKind::LogLipschitz {} => -(-g).exp(),
            ModulusKind::PowerLog { exponent: p } => {
                if (p - 1.0).abs() < 1e-15 {
                    -(-g).exp()
                } else {
                    let v = -(1.0 - p) * g;
                    if v <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        -v.powf(1.0 / (1.0 - p))
                    }
                }
            }
            ModulusKind::Holder { alpha } => {
                if alpha == 1.0 {
                    g
                } else {
                    let v = (1.0 - alpha) * g;
                    if v <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        v.ln() / (1.0 - alpha)
                    }
                }
            }
            ModulusKind::Linear {} => g,
        }
    }

    /// Continuous antiderivative of `1/omega` over `(0, inf)`, in `ln s`.
    fn antideriv_ln(&self, ls: f64) -> f64 {
        let lc = self.crossover.ln();
        if ls <= lc {
            return self.core_antideriv(ls);
        }
        let (a, b) = self.affine();
        let shift = self.core_antideriv(lc) - self.core(self.crossover).ln() / b;
        (a + b * ls.exp()).ln() / b + shift
    }

    fn antideriv_inv_ln(&self, g: f64) -> f64 {
        let lc = self.crossover.ln();
        let gc = self.core_antideriv(lc);
        if g <= gc {
            return self.core_antideriv_inv(g);
        }
        let (a, b) = self.affine();
        let shift = gc - self.core(self.crossover).ln() / b;
        let v = (b * (g - shift)).exp();
        ((v - a) / b).ln()
    }
}

/// `G(s) = int_1^s dt / omega(t)`, evaluated from closed-form antiderivatives.
pub fn osgood_g(m: &Modulus, s: f64) -> Result<f64, ModulusError> {
    if !(s > 0.0) {
        return Err(ModulusError::DomainError(s));
    }
    Ok(osgood_g_ln(m, s.ln()))
}

/// `G` as a function of `ln s`; usable far below the smallest normal float.
pub fn osgood_g_ln(m: &Modulus, ls: f64) -> f64 {
    m.antideriv_ln(ls) - m.antideriv_ln(0.0)
}

/// `ln G^{-1}(g)`.
pub fn osgood_g_inv_ln(m: &Modulus, g: f64) -> f64 {
    m.antideriv_inv_ln(g + m.antideriv_ln(0.0))
}

/// `G^{-1}(G(a) + budget)`, capped at the torus diameter.
pub fn bihari_bound(m: &Modulus, initial_gap: f64, budget: f64) -> Result<f64, ModulusError> {
    if !(initial_gap > 0.0) {
        return Err(ModulusError::DomainError(initial_gap));
    }
    if budget < 0.0 || budget.is_nan() {
        return Err(ModulusError::DomainError(budget));
    }
    if budget == 0.0 {
        return Ok(initial_gap.min(DIAMETER));
    }
    Ok(bihari_bound_ln(m, initial_gap.ln(), budget).exp().min(DIAMETER))
}

/// Log-space version of [`bihari_bound`] without the cap.
pub fn bihari_bound_ln(m: &Modulus, ln_gap: f64, budget: f64) -> f64 {
    if budget == 0.0 {
        return ln_gap;
    }
    m.antideriv_inv_ln(m.antideriv_ln(ln_gap) + budget)
}

/// Largest `ln a` with `bihari_bound(a, budget) <= target`.
pub fn bihari_preimage_ln(m: &Modulus, ln_target: f64, budget: f64) -> f64 {
    if budget == 0.0 {
        return ln_target;
    }
    m.antideriv_inv_ln(m.antideriv_ln(ln_target) - budget)
}

// Gauss-Kronrod 7/15 nodes and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to relative tolerance `rel_tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let (whole, _) = gk15(&f, a, b);
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        if err <= rel_tol * whole.abs().max(v.abs()) * ((hi - lo) / (b - a)).max(1e-3) || depth > 40 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// `int_lo^hi ds / omega(s)` by quadrature in `ln s`.
pub fn reciprocal_integral(m: &Modulus, lo: f64, hi: f64) -> f64 {
    integrate_adaptive(|u| u.exp() / m.eval(u.exp()), lo.ln(), hi.ln(), 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Yes,
    No,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OsgoodReport {
    pub is_increasing: bool,
    pub is_concave: bool,
    pub integral_diverges: Divergence,
    /// `int_{2^-k}^1 ds/omega` for `k = 0..=depth`.
    pub partial_sums: Vec<f64>,
    pub non_lipschitz: bool,
    /// `s/omega(s)` at `s = 2^-k`.
    pub slope_ratios: Vec<f64>,
}

/// Window of dyadic depths used by the divergence heuristic.
const WINDOW: usize = 8;
/// Ratio separating slow (divergent) from geometric (summable) decay.
const RATIO: f64 = 0.95;

pub fn check_osgood(m: &Modulus, depth: usize) -> Result<OsgoodReport, ModulusError> {
    if depth < 4 {
        return Err(ModulusError::InvalidParams(format!("depth {depth} < 4")));
    }
    let (is_increasing, is_concave) = shape_checks(m);
    if !is_increasing {
        return Err(ModulusError::NonMonotone(first_non_increase(m)));
    }
    let mut partial_sums = vec![0.0];
    let mut increments = Vec::with_capacity(depth);
    for k in 1..=depth {
        let hi = 2f64.powi(-(k as i32) + 1);
        let inc = reciprocal_integral(m, 0.5 * hi, hi);
        increments.push(inc);
        partial_sums.push(partial_sums[k - 1] + inc);
    }
    let w = WINDOW.min(depth - 1);
    let tail = &increments[depth - 1 - w..];
    let ratios: Vec<f64> = tail.windows(2).map(|p| p[1] / p[0]).collect();
    let mean_ratio = (tail[w] / tail[0]).powf(1.0 / w as f64);
    let integral_diverges = if mean_ratio > RATIO {
        Divergence::Yes
    } else if ratios.iter().all(|&r| r <= RATIO)
        && ratios.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-6))
    {
        // steady geometric decay: the remaining tail is summable
        Divergence::No
    } else {
        Divergence::Inconclusive
    };
    let slope_ratios: Vec<f64> = (0..=depth)
        .map(|k| {
            let s = 2f64.powi(-(k as i32));
            s / m.eval(s)
        })
        .collect();
    let last = &slope_ratios[depth - w..];
    let non_lipschitz = last.windows(2).all(|p| p[1] < p[0] * (1.0 - 1e-12));
    Ok(OsgoodReport {
        is_increasing,
        is_concave,
        integral_diverges,
        partial_sums,
        non_lipschitz,
        slope_ratios,
    })
}

fn shape_grid() -> Vec<f64> {
    let mut s: Vec<f64> = (0..=400).map(|k| 2f64.powf(-(k as f64) / 10.0)).collect();
    s.extend((1..=200).map(|k| k as f64 * DIAMETER / 200.0));
    s.push(0.0);
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s
}

fn shape_checks(m: &Modulus) -> (bool, bool) {
    let s = shape_grid();
    let v: Vec<f64> = s.iter().map(|&x| m.eval(x)).collect();
    let inc = v.windows(2).all(|p| p[1] > p[0]);
    let slopes: Vec<f64> = (1..s.len()).map(|i| (v[i] - v[i - 1]) / (s[i] - s[i - 1])).collect();
    let conc = slopes.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-9) + 1e-12);
    (inc, conc)
}

fn first_non_increase(m: &Modulus) -> f64 {
    let s = shape_grid();
    for p in s.windows(2) {
        if m.eval(p[1]) <= m.eval(p[0]) {
            return p[1];
        }
    }
    f64::NAN
}

/// Largest `|f(x)-f(y)| / omega(d(x,y))` over sampled pairs with
/// `0 < d < max_scale`.
pub fn omega_seminorm(samples: &[(TorusPoint, Vec2)], m: &Modulus, max_scale: f64) -> f64 {
    (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let (p, fp) = samples[i];
            let mut best = 0.0f64;
            for &(q, fq) in &samples[i + 1..] {
                let d = geodesic_distance(&p, &q);
                if d > 0.0 && d < max_scale {
                    let r = (fp - fq).norm() / m.eval(d);
                    if r > best {
                        best = r;
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Sup norm plus seminorm over all sampled pairs.
pub fn omega_norm(samples: &[(TorusPoint, Vec2)], m: &Modulus) -> f64 {
    let sup = samples.iter().map(|s| s.1.norm()).fold(0.0, f64::max);
    sup + omega_seminorm(samples, m, f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    /// Maximal runs of good time cells, as closed intervals.
    pub good_times: Vec<[f64; 2]>,
    pub scale: f64,
    pub threshold: f64,
    pub bad_mass: f64,
    /// Dyadic scales tried, coarse to fine.
    pub ladder: Vec<f64>,
}

/// Picks the coarsest dyadic scale `r` for which the time cells with
/// restricted oscillation `>= eps` carry full norm mass `< eps`.
pub fn good_scale_bad_interval(
    field: &FieldSpec,
    m: &Modulus,
    eps: f64,
    time_grid: &TimeGrid,
    space_grid: &SpaceGrid,
) -> Result<OscillationProfile, ModulusError> {
    if !(eps > 0.0) {
        return Err(ModulusError::DomainError(eps));
    }
    let pts = field.sample_points(space_grid);
    let finest = space_grid.spacing();
    let times = time_grid.nodes(field);
    let slices: Vec<Vec<(TorusPoint, Vec2)>> = times
        .iter()
        .map(|&(t, _)| pts.iter().map(|p| (*p, field.eval(t, p))).collect())
        .collect();
    let norms: Vec<f64> = slices.iter().map(|s| omega_norm(s, m)).collect();
    let mut ladder = Vec::new();
    let mut r = 0.5;
    while r > finest {
        ladder.push(r);
        let good: Vec<bool> = slices.iter().map(|s| omega_seminorm(s, m, r) < eps).collect();
        let bad_mass: f64 = times
            .iter()
            .zip(&good)
            .zip(&norms)
            .filter(|((_, g), _)| !**g)
            .map(|(((_, w), _), n)| w * n)
            .sum();
        if bad_mass < eps {
            let mut good_times: Vec<[f64; 2]> = Vec::new();
            for (((t, w), g), _) in times.iter().zip(&good).zip(&norms) {
                if !*g {
                    continue;
                }
                let (a, b) = (t - 0.5 * w, t + 0.5 * w);
                match good_times.last_mut() {
                    Some(last) if (last[1] - a).abs() < 1e-12 => last[1] = b,
                    _ => good_times.push([a, b]),
                }
            }
            return Ok(OscillationProfile { good_times, scale: r, threshold: eps, bad_mass, ladder });
        }
        r *= 0.5;
    }
    Err(ModulusError::NoAdmissibleScale { finest: ladder.last().copied().unwrap_or(r) })
}

/// `e^-2`, the default log-Lipschitz crossover.
pub fn default_crossover() -> f64 {
    E.powi(-2)
}
