//! The generic-perturbation pipeline: starting from a base field `b`,
//! builds a field `v` with `||v - b|| < eps` whose time-one map carries a
//! certified entropy bound above `K`, together with a radius (in log
//! form) inside which the bound persists.
//!
//! Stages, in order: time compression of `b`, closing a near-periodic
//! orbit with a rotation bump, choosing a tube radius, freezing the field
//! on the tube, inserting a rescaled horseshoe along the orbit,
//! certifying `X_N^v` in co-moving coordinates, and converting the
//! certificate margin into a stability radius.

use crate::entropy::{certify_pseudo_horseshoe, entropy_of_iterate, shift_entropy, Density, HorseshoeCertificate, HorseshoeFrame};
use crate::fields::{
    build_horseshoe_block, build_rotation_bump, compress_time, field_distance_estimate, field_norm_estimate, freeze_tube,
    insert_horseshoe_along_orbit, tube_separation, Block, BlockKind, Cutoff, FieldSpec, NormEstimate, Orbit, ScaledProfile,
    SpaceGrid, Stage, TimeGrid, TimeProfile, CUTOFF_OUTER,
};
use crate::flow::{
    deviation_check, find_near_periodic_point, integrate, integrate_comoving, trace_orbit, DeviationReport,
    IntegratorConfig, PeriodicOrbitResult,
};
use crate::moduli::{bihari_preimage_ln, good_scale_bad_interval, Modulus, OscillationProfile};
use crate::torus::{geodesic_distance, geodesic_midpoint, TorusPoint, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

fn fail<E: std::fmt::Display>(stage: &str) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError { stage: stage.to_string(), message: e.to_string() }
}

fn stage_err(stage: &str, message: String) -> PipelineError {
    PipelineError { stage: stage.to_string(), message }
}

/// A field given inline or as a path to a field-spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Path(String),
    Inline(FieldSpec),
}

/// Grids of the unit-frame sampling used for rescaled horseshoe norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub resolution: usize,
    pub fine: usize,
    pub per_interval: usize,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        ProfileGrid { resolution: 48, fine: 3000, per_interval: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub base_field: FieldSource,
    pub eps_budget: f64,
    #[serde(rename = "K")]
    pub k_target: f64,
    pub modulus: Modulus,
    pub rho0: f64,
    /// Length of the quiet time interval `[1 - eta, 1]`.
    pub eta: f64,
    pub seeds: usize,
    pub m_max: usize,
    /// Gaps below this are treated as exact closure.
    pub closure_tol: f64,
    pub orbit_knots: usize,
    pub integrator: IntegratorConfig,
    pub space_grid: SpaceGrid,
    pub time_grid: TimeGrid,
    pub profile_grid: ProfileGrid,
    pub density: Density,
    /// Fraction of the remaining budget given to the horseshoe.
    pub safety: f64,
    /// Strip counts considered for the inserted horseshoe.
    pub candidates: Vec<usize>,
    pub perturbations: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            base_field: FieldSource::Inline(FieldSpec::zero()),
            eps_budget: 0.5,
            k_target: 1.0,
            modulus: Modulus::log_lipschitz(),
            rho0: 1e-3,
            eta: 0.25,
            seeds: 16,
            m_max: 32,
            closure_tol: 1e-8,
            orbit_knots: 256,
            integrator: IntegratorConfig::default(),
            space_grid: SpaceGrid::default(),
            time_grid: TimeGrid::default(),
            profile_grid: ProfileGrid::default(),
            density: Density::default(),
            safety: 0.9,
            candidates: (2..=12).collect(),
            perturbations: 5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn new(base: FieldSpec, eps_budget: f64, k_target: f64) -> Self {
        PipelineConfig { base_field: FieldSource::Inline(base), eps_budget, k_target, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(stage_err("config", m));
        if !(self.eps_budget > 0.0) {
            return bad(format!("eps_budget {} must be positive", self.eps_budget));
        }
        if !(self.k_target > 0.0) {
            return bad(format!("K {} must be positive", self.k_target));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta {} outside (0,1)", self.eta));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety {} outside (0,1]", self.safety));
        }
        if self.orbit_knots < 4 {
            return bad("orbit_knots below 4".into());
        }
        self.modulus.validate().map_err(fail("config"))
    }

    /// Resolves the base field; relative paths are taken from `dir`.
    pub fn load_base(&self, dir: Option<&Path>) -> Result<FieldSpec, PipelineError> {
        match &self.base_field {
            FieldSource::Inline(f) => Ok(f.clone()),
            FieldSource::Path(p) => {
                let path = match dir {
                    Some(d) if Path::new(p).is_relative() => d.join(p),
                    _ => Path::new(p).to_path_buf(),
                };
                let text = std::fs::read_to_string(&path).map_err(fail("config"))?;
                FieldSpec::from_json(&text).map_err(fail("config"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionRecord {
    pub eta: f64,
    pub norm_before: f64,
    pub norm_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpRecord {
    pub center: TorusPoint,
    pub rho: f64,
    pub norm: f64,
    /// Closest approach of intermediate orbit points to the bump centre.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureRecord {
    pub periodic: PeriodicOrbitResult,
    pub bump: Option<BumpRecord>,
    /// Return gap of the orbit of the closed field.
    pub residual_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeRecord {
    pub oscillation: OscillationProfile,
    pub radius: f64,
    #[serde(with = "crate::torus::nonfinite")]
    pub separation: f64,
    pub freeze_norm: f64,
    pub freeze_seminorm: f64,
    pub orbit: Orbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    #[serde(rename = "N")]
    pub n: usize,
    /// `lim L ||b_s|| ` with `L = ln(1/s)`, estimated at `L = 300`.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionRecord {
    #[serde(rename = "N_h")]
    pub n_h: usize,
    pub candidates: Vec<CandidateRecord>,
    pub budget: f64,
    /// Log of the fold-frame scale of the inserted block.
    pub ln_frame_scale: f64,
    pub frame_scale: f64,
    pub support_radius: f64,
    pub norm: f64,
    pub seminorm: f64,
    pub cross_term: f64,
    /// Largest local-unit gap between `X_N^v` and the block's exact
    /// time-one map on square samples.
    pub insertion_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRecord {
    pub certificate: HorseshoeCertificate,
    pub period: usize,
    /// Bound for `X_N^v`.
    pub bound_iterate: f64,
    /// Bound for `X_1^v`.
    pub bound: f64,
    #[serde(rename = "K")]
    pub k_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    /// `ln` of half the absolute certificate margin.
    pub ln_margin: f64,
    /// `int_0^N [v]_omega dt`.
    pub seminorm_budget: f64,
    /// `ln` of the admissible `int_0^N ||w - v|| dt`.
    pub ln_delta_integral: f64,
    /// `ln delta`: perturbations with `||w - v|| < delta` keep the bound.
    pub ln_delta: f64,
    /// `delta` itself; 0 when below the float range.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub bump: f64,
    pub freeze: f64,
    pub horseshoe: f64,
    pub total: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPerturbation {
    pub description: String,
    pub ln_norm: f64,
    /// The added block; `w = v + block`.
    pub block: Block,
    pub certificate: HorseshoeCertificate,
    pub bound: f64,
    pub deviation: DeviationReport,
    pub recertified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Wall-clock data of a run; the only part of a report that differs
/// between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunStamp {
    pub finished_unix: u64,
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub timestamp: RunStamp,
    pub config: PipelineConfig,
    pub base_digest: String,
    pub compression: CompressionRecord,
    pub closure: ClosureRecord,
    pub tube: TubeRecord,
    pub insertion: InsertionRecord,
    pub certification: CertificationRecord,
    pub stability: StabilityRecord,
    pub budget: BudgetLedger,
    pub perturbations: Vec<StoredPerturbation>,
    pub success: bool,
    pub field_digest: String,
    pub field: FieldSpec,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat `key,value` rows of the scalar entries.
    pub fn to_csv(&self) -> String {
        flat_csv(&serde_json::to_value(self).expect("report serializes"))
    }
}

/// Flat `key,value` rows of the scalar leaves of a JSON document, keys
/// joined by dots.
pub fn flat_csv(v: &serde_json::Value) -> String {
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let mut s = String::from("key,value\n");
    for (k, val) in rows {
        s.push_str(&format!("{k},{val}\n"));
    }
    s
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                // the field spec and the orbit knots are not scalar data
                if k == "field" || k == "knots" || k == "block" || k == "per_node" {
                    continue;
                }
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.replace(',', ";"))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// `X_N^v` on the fold frame centred at the orbit's start, in frame-local
/// coordinates, by co-moving integration.
pub fn comoving_map<'a>(
    v: &'a FieldSpec,
    orbit: &'a Orbit,
    frame_scale: f64,
    cfg: &'a IntegratorConfig,
) -> impl Fn(Vec2) -> Result<Vec2, crate::entropy::OracleError> + Sync + 'a {
    move |z: Vec2| {
        integrate_comoving(v, orbit, frame_scale * z, 0.0, orbit.period as f64, cfg, frame_scale)
            .map(|off| (1.0 / frame_scale) * off)
            .map_err(|e| crate::entropy::OracleError(e.to_string()))
    }
}

/// Certifies `X_N^v` on the fold frame of scale `frame_scale` at the
/// orbit's start.
pub fn certify_along_orbit(
    v: &FieldSpec,
    orbit: &Orbit,
    n_h: usize,
    frame_scale: f64,
    density: Density,
    cfg: &IntegratorConfig,
) -> Result<HorseshoeCertificate, PipelineError> {
    let start = orbit.position(0.0);
    let frame = HorseshoeFrame::new(n_h, frame_scale, [start.x, start.y]).map_err(fail("certification"))?;
    let map = comoving_map(v, orbit, frame_scale, cfg);
    certify_pseudo_horseshoe(&map, &frame, density).map_err(fail("certification"))
}

fn tube_orbit(v: &FieldSpec) -> Option<&Orbit> {
    v.blocks.iter().find_map(|b| match &b.kind {
        BlockKind::FrozenTube { orbit, .. } => Some(orbit),
        _ => None,
    })
}

/// Re-certifies `v + extra` with the frame of a finished report and
/// returns the certificate and the bound for the time-one map.
pub fn recertify(report: &PipelineReport, extra: &Block) -> Result<(HorseshoeCertificate, f64), PipelineError> {
    let mut w = report.field.clone();
    w.blocks.push(extra.clone());
    let orbit = tube_orbit(&report.field).ok_or_else(|| stage_err("recertify", "no frozen tube in v".into()))?;
    let cert = certify_along_orbit(
        &w,
        orbit,
        report.insertion.n_h,
        report.insertion.frame_scale,
        report.config.density,
        &report.config.integrator,
    )?;
    let bound = if cert.pass { entropy_of_iterate(cert.bound_nats, orbit.period) } else { 0.0 };
    Ok((cert, bound))
}

fn unit_block(n: usize) -> Result<Block, PipelineError> {
    let f = build_horseshoe_block(n, 1.0, None).map_err(fail("insertion"))?;
    match f.blocks.into_iter().next() {
        Some(Block { kind: BlockKind::Rescaled { child, .. }, .. }) => Ok(*child),
        _ => Err(stage_err("insertion", "horseshoe block is not rescaled".into())),
    }
}

/// Reference log-scale at which candidate coefficients are compared.
const REFERENCE_LN: f64 = -300.0;

pub fn run_pipeline(config: &PipelineConfig, base: &FieldSpec) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let m = &config.modulus;
    let cfg = &config.integrator;
    let eps = config.eps_budget;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    fn lap(timings: &mut Vec<StageTiming>, name: &str, clock: &mut Instant) {
        timings.push(StageTiming { stage: name.to_string(), seconds: clock.elapsed().as_secs_f64() });
        *clock = Instant::now();
    }

    // quiet interval [1 - eta, 1] for the bump
    let compressed = compress_time(base, config.eta).map_err(fail("compression"))?;
    let norm_before = field_norm_estimate(base, m, &config.time_grid, &config.space_grid).value;
    let norm_after = field_norm_estimate(&compressed, m, &config.time_grid, &config.space_grid).value;
    let compression = CompressionRecord { eta: config.eta, norm_before, norm_after };
    lap(&mut timings, "compression", &mut clock);

    // near-periodic point, closed by a rotation bump if needed
    let periodic = find_near_periodic_point(&compressed, config.rho0, config.seeds, config.m_max, cfg)
        .map_err(fail("periodic_orbit"))?;
    let n = periodic.n;
    let x = periodic.x;
    let (closed, bump) = if periodic.rho <= config.closure_tol {
        (compressed.clone(), None)
    } else {
        let step = |p: &TorusPoint| integrate(&compressed, p, 1.0, cfg).map(|r| r.point);
        let mut pts = vec![x];
        for _ in 0..n {
            pts.push(step(pts.last().unwrap()).map_err(fail("periodic_orbit"))?);
        }
        let end = pts[n];
        let rho = geodesic_distance(&x, &end);
        let center = geodesic_midpoint(&x, &end).map_err(fail("periodic_orbit"))?;
        let rho_b = (7.0 / 6.0 * rho).min(0.99);
        let clearance = pts[1..n].iter().map(|p| geodesic_distance(p, &center)).fold(f64::INFINITY, f64::min);
        if clearance <= rho_b {
            return Err(stage_err(
                "periodic_orbit",
                format!("orbit revisits the bump ball: clearance {clearance} <= radius {rho_b}"),
            ));
        }
        let bump = build_rotation_bump(center, rho_b, config.eta, 1.0).map_err(fail("periodic_orbit"))?;
        let norm = field_norm_estimate(&bump, m, &config.time_grid, &config.space_grid).value;
        if norm >= eps / 4.0 {
            return Err(stage_err("periodic_orbit", format!("bump norm {norm} exceeds eps/4 = {}", eps / 4.0)));
        }
        let mut f = compressed.clone();
        f.blocks.extend(bump.blocks);
        (f, Some(BumpRecord { center, rho: rho_b, norm, clearance }))
    };
    let orbit = trace_orbit(&closed, &x, n, config.orbit_knots, cfg).map_err(fail("periodic_orbit"))?;
    let residual_gap = {
        let end = integrate(&closed, &x, n as f64, cfg).map_err(fail("periodic_orbit"))?.point;
        geodesic_distance(&x, &end)
    };
    let closure = ClosureRecord { periodic: periodic.clone(), bump: bump.clone(), residual_gap };
    let bump_norm = bump.as_ref().map(|b| b.norm).unwrap_or(0.0);
    lap(&mut timings, "periodic_orbit", &mut clock);

    // tube radius: good scale, disjoint tubes, freeze budget eps/2
    let oscillation =
        good_scale_bad_interval(&closed, m, eps / 4.0, &config.time_grid, &config.space_grid).map_err(fail("tube"))?;
    let (separation, _) = tube_separation(&orbit, 512);
    let mut r = oscillation.scale;
    while separation <= 2.0 * r * (1.0 + 1e-9) {
        r *= 0.5;
    }
    let (u, freeze) = loop {
        let u = freeze_tube(&closed, &orbit, r).map_err(fail("tube"))?;
        let d = field_distance_estimate(&u, &closed, m, &config.time_grid, &config.space_grid);
        if d.value < eps / 2.0 {
            break (u, d);
        }
        r *= 0.5;
        if r < 1e-6 {
            return Err(stage_err("tube", format!("freeze norm {} stays above eps/2", d.value)));
        }
    };
    let u_norm = field_norm_estimate(&u, m, &config.time_grid, &config.space_grid);
    let tube = TubeRecord {
        oscillation,
        radius: r,
        separation,
        freeze_norm: freeze.value,
        freeze_seminorm: u_norm.seminorm_part,
        orbit: orbit.clone(),
    };
    lap(&mut timings, "tube", &mut clock);

    // horseshoe: cheapest admissible design, scaled into the budget
    let need = n as f64 * config.k_target;
    let eligible: Vec<usize> = config.candidates.iter().copied().filter(|&c| shift_entropy(c) > need).collect();
    if eligible.is_empty() {
        return Err(stage_err("insertion", format!("no candidate with ln N_h > {need}")));
    }
    let pg = config.profile_grid;
    let mut candidates = Vec::new();
    let mut best: Option<(f64, usize, ScaledProfile)> = None;
    for &c in &eligible {
        let Ok(child) = unit_block(c) else { continue };
        let profile = ScaledProfile::new(&child, &TimeGrid::new(pg.per_interval), pg.resolution, pg.fine);
        let coefficient = -REFERENCE_LN * profile.estimate(REFERENCE_LN, m).value;
        candidates.push(CandidateRecord { n: c, coefficient });
        if best.as_ref().map(|b| coefficient < b.0).unwrap_or(true) {
            best = Some((coefficient, c, profile));
        }
    }
    let (_, n_h, profile) = best.ok_or_else(|| stage_err("insertion", "no candidate design builds".into()))?;
    let budget = config.safety * (eps - bump_norm - freeze.value);
    if !(budget > 0.0) {
        return Err(stage_err("insertion", format!("no budget left: {budget}")));
    }
    // pairs across distinct copies are at least `separation - r/2` apart
    let cross = |e: &NormEstimate| if n > 1 { 2.0 * e.sup_part / m.eval(separation - 0.5 * r) } else { 0.0 };
    let total = |ls: f64| {
        let e = profile.estimate(ls, m);
        let c = cross(&e);
        (e.value + c, e, c)
    };
    let hi_ln = (0.25 * r / CUTOFF_OUTER).ln();
    const LOWEST_LN: f64 = -700.0;
    let ln_frame_scale = if total(hi_ln).0 < budget {
        hi_ln
    } else {
        if total(LOWEST_LN).0 >= budget {
            return Err(stage_err("insertion", format!("horseshoe norm stays above {budget} down to scale e^{LOWEST_LN}")));
        }
        let (mut lo, mut hi) = (LOWEST_LN, hi_ln);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if total(mid).0 < budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let (h_norm, h_est, cross_term) = total(ln_frame_scale);
    let frame_scale = ln_frame_scale.exp();
    let support_radius = CUTOFF_OUTER * frame_scale;
    let h = build_horseshoe_block(n_h, support_radius.min(1.0), None).map_err(fail("insertion"))?;
    let v = insert_horseshoe_along_orbit(&u, &h, &orbit, n, r).map_err(fail("insertion"))?;
    let exact = h.exact_map().ok_or_else(|| stage_err("insertion", "horseshoe block has no exact map".into()))?;
    let comoving = comoving_map(&v, &orbit, frame_scale, cfg);
    let mut insertion_error: f64 = 0.0;
    for k in 0..64 {
        let z = Vec2::new(-0.25 + 0.5 * ((k * 37) % 64) as f64 / 63.0, -0.25 + 0.5 * ((k * 23) % 64) as f64 / 63.0);
        let got = comoving(z).map_err(fail("insertion"))?;
        insertion_error = insertion_error.max((got - exact.apply_local(z)).norm());
    }
    let insertion = InsertionRecord {
        n_h,
        candidates,
        budget,
        ln_frame_scale,
        frame_scale,
        support_radius,
        norm: h_norm,
        seminorm: h_est.seminorm_part + cross_term,
        cross_term,
        insertion_error,
    };
    lap(&mut timings, "insertion", &mut clock);

    // certificate for X_N^v and the bound for X_1^v
    let certificate = certify_along_orbit(&v, &orbit, n_h, frame_scale, config.density, cfg)?;
    if !certificate.pass {
        return Err(stage_err("certification", format!("margin {} on X_N^v", certificate.margin)));
    }
    let bound = entropy_of_iterate(certificate.bound_nats, n);
    let certification = CertificationRecord {
        certificate: certificate.clone(),
        period: n,
        bound_iterate: certificate.bound_nats,
        bound,
        k_target: config.k_target,
    };
    lap(&mut timings, "certification", &mut clock);

    // stability radius from the margin through the Bihari envelope
    let ln_margin = certificate.margin.ln() + ln_frame_scale - std::f64::consts::LN_2;
    let seminorm_budget = n as f64 * (tube.freeze_seminorm + insertion.seminorm);
    let ln_delta_integral = bihari_preimage_ln(m, ln_margin, seminorm_budget);
    let ln_delta = ln_delta_integral - (n as f64).ln();
    let stability = StabilityRecord { ln_margin, seminorm_budget, ln_delta_integral, ln_delta, delta: ln_delta.exp() };

    // stored test perturbations inside the delta ball
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let norm_v = field_norm_estimate(&v, m, &config.time_grid, &config.space_grid);
    let probes: Vec<TorusPoint> = (0..4)
        .map(|k| {
            let p = orbit.position(0.0) + Vec2::new(0.1 * r * (k as f64 - 1.5), 0.05 * r);
            TorusPoint::new(p.x, p.y)
        })
        .collect();
    let partial = PipelineReport {
        timestamp: RunStamp::default(),
        config: config.clone(),
        base_digest: base.digest(),
        compression,
        closure,
        tube,
        insertion,
        certification,
        stability,
        budget: BudgetLedger {
            bump: bump_norm,
            freeze: freeze.value,
            horseshoe: h_norm,
            total: bump_norm + freeze.value + h_norm,
            limit: eps,
        },
        perturbations: Vec::new(),
        success: false,
        field_digest: v.digest(),
        field: v.clone(),
    };
    let mut perturbations = Vec::new();
    for k in 0..config.perturbations {
        let (description, child, child_norm) = test_perturbation(k, &mut rng, m, config)?;
        let shrink: f64 = rng.random_range(2.0..10.0);
        let ln_norm = ln_delta - shrink.ln();
        let block = Block {
            time_window: [0.0, 1.0],
            support: child.support.clone(),
            kind: BlockKind::Scaled { child: Box::new(child), ln_factor: ln_norm - child_norm.ln() },
        };
        let (cert, bound) = recertify(&partial, &block)?;
        let mut w = v.clone();
        w.blocks.push(block.clone());
        let diff = constant_estimate(ln_norm);
        let deviation =
            deviation_check(&v, &w, m, &norm_v, &diff, &probes, n, 2, cfg).map_err(fail("stability"))?;
        let recertified = cert.pass && bound > config.k_target;
        perturbations.push(StoredPerturbation { description, ln_norm, block, certificate: cert, bound, deviation, recertified });
    }
    lap(&mut timings, "stability", &mut clock);

    let success = partial.certification.bound > config.k_target
        && partial.budget.total < eps
        && perturbations.iter().all(|p| p.recertified);
    let timestamp = RunStamp { finished_unix: unix_now(), stages: timings };
    Ok(PipelineReport { timestamp, perturbations, success, ..partial })
}

/// Norm record of size `exp(ln_norm)`, constant in time.
fn constant_estimate(ln_norm: f64) -> NormEstimate {
    let value = ln_norm.exp();
    NormEstimate {
        value,
        sup_part: value,
        seminorm_part: 0.0,
        time_nodes: 1,
        max_space_samples: 0,
        per_node: vec![[0.5, value, 0.0]],
    }
}

/// The `k`-th test perturbation shape and its norm: drifts and localized
/// rotations or saddles at random places.
fn test_perturbation(
    k: usize,
    rng: &mut ChaCha8Rng,
    m: &Modulus,
    config: &PipelineConfig,
) -> Result<(String, Block, f64), PipelineError> {
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let (description, block) = match k % 3 {
        0 => (format!("drift in direction {angle:.4}"), Block::drift(Vec2::new(angle.cos(), angle.sin()))),
        kind => {
            let stage = if kind == 1 { Stage::Rotate { angle: 1.0 } } else { Stage::Saddle { factor: 2.0 } };
            let inner = Block::stage(stage, [0.0, 1.0], Some(Cutoff { inner: 0.5, outer: 1.0 }), TimeProfile::Smooth);
            let name = if kind == 1 { "rotation" } else { "saddle" };
            (
                format!("{name} of radius 0.25 at ({:.4}, {:.4})", center[0], center[1]),
                Block {
                    time_window: [0.0, 1.0],
                    support: crate::fields::Support::Ball { center, radius: 0.25 },
                    kind: BlockKind::Rescaled { child: Box::new(inner), scale: 0.25, center },
                },
            )
        }
    };
    let norm = field_norm_estimate(&FieldSpec::new(vec![block.clone()]), m, &config.time_grid, &config.space_grid).value;
    if !(norm > 0.0) {
        return Err(stage_err("stability", format!("test perturbation {k} has zero norm")));
    }
    Ok((description, block, norm))
}
