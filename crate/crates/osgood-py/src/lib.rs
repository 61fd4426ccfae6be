//! Python bindings: fields, flows, moduli, entropy certificates and the
//! perturbation pipeline. Reports cross the boundary as JSON strings.

use osgood::entropy::{
    bowen_entropy_estimate, certify_pseudo_horseshoe, count_cylinders, Density, Framed, HorseshoeCertificate,
    HorseshoeFrame, OracleError, Refinement, TorusMap,
};
use osgood::fields::{
    build_horseshoe_block, build_infinite_entropy_field, build_rotation_bump, ExactMap, FieldSpec,
};
use osgood::flow::{find_near_periodic_point, integrate, time_one_map, IntegratorConfig};
use osgood::moduli::{bihari_bound, check_osgood, osgood_g, Modulus as CoreModulus};
use osgood::pipeline::{run_pipeline, PipelineConfig};
use osgood::torus::{Box2, TorusPoint, Vec2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::path::Path;

fn invalid(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn numeric(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// A 1-periodic velocity field on the torus `[-1,1)^2`.
#[pyclass(name = "Field", module = "osgood", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Field {
    inner: FieldSpec,
}

#[pymethods]
impl Field {
    #[staticmethod]
    fn zero() -> Self {
        Field { inner: FieldSpec::zero() }
    }

    #[staticmethod]
    fn drift(vx: f64, vy: f64) -> Self {
        Field { inner: FieldSpec::drift(Vec2::new(vx, vy)) }
    }

    /// Certified `n`-strip horseshoe block supported in the ball of radius
    /// `eps` about the origin.
    #[staticmethod]
    #[pyo3(signature = (n, eps = 1.0))]
    fn horseshoe(n: usize, eps: f64) -> PyResult<Self> {
        Ok(Field { inner: build_horseshoe_block(n, eps, None).map_err(invalid)? })
    }

    #[staticmethod]
    #[pyo3(signature = (center, rho, eta, anchor = 1.0))]
    fn rotation_bump(center: (f64, f64), rho: f64, eta: f64, anchor: f64) -> PyResult<Self> {
        let c = TorusPoint::new(center.0, center.1);
        Ok(Field { inner: build_rotation_bump(c, rho, eta, anchor).map_err(invalid)? })
    }

    /// Horseshoe blocks `N = 2..=n_max` on disjoint balls.
    #[staticmethod]
    fn ladder(n_max: usize) -> PyResult<Self> {
        Ok(Field { inner: build_infinite_entropy_field(n_max).map_err(invalid)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Field { inner: FieldSpec::from_json(text).map_err(invalid)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn num_blocks(&self) -> usize {
        self.inner.blocks.len()
    }

    /// Construction manifest as JSON, if the field carries one.
    #[getter]
    fn manifest(&self) -> Option<String> {
        self.inner.manifest.as_ref().map(to_json)
    }

    fn velocity(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let v = self.inner.eval(t, &TorusPoint::new(x, y));
        (v.x, v.y)
    }

    /// Sum of two fields.
    fn __add__(&self, other: &Field) -> Field {
        let mut inner = self.inner.clone();
        inner.blocks.extend(other.inner.blocks.iter().cloned());
        inner.manifest = None;
        Field { inner }
    }

    fn __repr__(&self) -> String {
        format!("Field(blocks={}, digest={})", self.inner.blocks.len(), &self.inner.digest()[..12])
    }
}

/// Modulus of continuity `omega`.
#[pyclass(name = "Modulus", module = "osgood", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Modulus {
    inner: CoreModulus,
}

#[pymethods]
impl Modulus {
    #[staticmethod]
    fn log_lipschitz() -> Self {
        Modulus { inner: CoreModulus::log_lipschitz() }
    }

    #[staticmethod]
    fn linear() -> Self {
        Modulus { inner: CoreModulus::linear() }
    }

    #[staticmethod]
    fn holder(alpha: f64) -> PyResult<Self> {
        Ok(Modulus { inner: CoreModulus::holder(alpha).map_err(invalid)? })
    }

    #[staticmethod]
    fn power_log(exponent: f64) -> PyResult<Self> {
        Ok(Modulus { inner: CoreModulus::power_log(exponent).map_err(invalid)? })
    }

    fn __call__(&self, s: f64) -> f64 {
        self.inner.eval(s)
    }

    /// `G(s) = int_1^s dr / omega(r)`.
    fn osgood_g(&self, s: f64) -> PyResult<f64> {
        osgood_g(&self.inner, s).map_err(invalid)
    }

    /// Upper bound on the separation after accumulating `budget` of norm.
    fn bihari_bound(&self, initial_gap: f64, budget: f64) -> PyResult<f64> {
        bihari_bound(&self.inner, initial_gap, budget).map_err(invalid)
    }

    /// Osgood classification report as JSON.
    #[pyo3(signature = (depth = 40))]
    fn check_osgood(&self, depth: usize) -> PyResult<String> {
        Ok(to_json(&check_osgood(&self.inner, depth).map_err(invalid)?))
    }

    fn __repr__(&self) -> String {
        format!("Modulus({})", self.inner.name())
    }
}

#[pyclass(name = "Certificate", module = "osgood", frozen)]
pub struct Certificate {
    inner: HorseshoeCertificate,
}

#[pymethods]
impl Certificate {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.pass
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.inner.margin
    }

    #[getter]
    fn bound_nats(&self) -> f64 {
        self.inner.bound_nats
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Certificate(N={}, pass={}, margin={})", self.inner.n, self.inner.pass, self.inner.margin)
    }
}

fn config(tol: f64) -> PyResult<IntegratorConfig> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid(format!("tol {tol} must be positive")));
    }
    Ok(IntegratorConfig::with_tol(tol))
}

enum TimeOne<'a> {
    Exact(ExactMap),
    Integrated(&'a FieldSpec, IntegratorConfig),
}

impl TorusMap for TimeOne<'_> {
    fn image(&self, p: &TorusPoint) -> Result<TorusPoint, OracleError> {
        match self {
            TimeOne::Exact(map) => Ok(map.apply(p)),
            TimeOne::Integrated(spec, cfg) => {
                integrate(spec, p, 1.0, cfg).map(|r| r.point).map_err(|e| OracleError(e.to_string()))
            }
        }
    }
}

fn time_one(field: &FieldSpec, exact: bool, tol: f64) -> PyResult<TimeOne<'_>> {
    if exact {
        let map = field.exact_map().ok_or_else(|| invalid("the field has no closed-form time-one map"))?;
        return Ok(TimeOne::Exact(map));
    }
    Ok(TimeOne::Integrated(field, config(tol)?))
}

/// Frame from explicit arguments, else from the field's manifest.
fn frame(field: &FieldSpec, n: Option<usize>, frame_scale: Option<f64>, center: (f64, f64)) -> PyResult<HorseshoeFrame> {
    let from_manifest = |key: &str| field.manifest.as_ref().and_then(|m| m.get(key)).and_then(|v| v.as_f64());
    let n = n.or_else(|| from_manifest("N").map(|v| v as usize)).ok_or_else(|| invalid("no N given and none in the manifest"))?;
    let scale = frame_scale
        .or_else(|| from_manifest("frame_scale"))
        .ok_or_else(|| invalid("no frame_scale given and none in the manifest"))?;
    HorseshoeFrame::new(n, scale, [center.0, center.1]).map_err(invalid)
}

/// `X_t(point)`.
#[pyfunction]
#[pyo3(signature = (field, point, t = 1.0, tol = 1e-9))]
fn flow(field: &Field, point: (f64, f64), t: f64, tol: f64) -> PyResult<(f64, f64)> {
    let r = integrate(&field.inner, &TorusPoint::new(point.0, point.1), t, &config(tol)?).map_err(numeric)?;
    Ok((r.point.x(), r.point.y()))
}

/// Images of the `resolution^2` grid of the cell under the time-one map,
/// row-major from `(-1, -1)`.
#[pyfunction]
#[pyo3(signature = (field, resolution, tol = 1e-9))]
fn time_one_grid(field: &Field, resolution: usize, tol: f64) -> PyResult<Vec<(f64, f64)>> {
    let grid = time_one_map(&field.inner, resolution, &config(tol)?).map_err(numeric)?;
    Ok(grid.images.iter().map(|p| (p.x(), p.y())).collect())
}

/// Near-periodic point search; the result as JSON.
#[pyfunction]
#[pyo3(signature = (field, rho0, seeds = 16, m_max = 32, tol = 1e-9))]
fn find_periodic_point(field: &Field, rho0: f64, seeds: usize, m_max: usize, tol: f64) -> PyResult<String> {
    let r = find_near_periodic_point(&field.inner, rho0, seeds, m_max, &config(tol)?).map_err(numeric)?;
    Ok(to_json(&r))
}

#[pyfunction]
#[pyo3(signature = (field, n = None, frame_scale = None, center = (0.0, 0.0), exact = false, per_segment = 1000, square = 101, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn certify(
    field: &Field,
    n: Option<usize>,
    frame_scale: Option<f64>,
    center: (f64, f64),
    exact: bool,
    per_segment: usize,
    square: usize,
    tol: f64,
) -> PyResult<Certificate> {
    let frame = frame(&field.inner, n, frame_scale, center)?;
    let map = time_one(&field.inner, exact, tol)?;
    let framed = Framed { map: &map, frame: &frame };
    let inner = certify_pseudo_horseshoe(&framed, &frame, Density { per_segment, square }).map_err(numeric)?;
    Ok(Certificate { inner })
}

/// Realized words of length `depth`: `(realized, total, rate)`.
#[pyfunction]
#[pyo3(signature = (field, depth, n = None, frame_scale = None, center = (0.0, 0.0), exact = true, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn count_words(
    field: &Field,
    depth: usize,
    n: Option<usize>,
    frame_scale: Option<f64>,
    center: (f64, f64),
    exact: bool,
    tol: f64,
) -> PyResult<(u64, u64, f64)> {
    let frame = frame(&field.inner, n, frame_scale, center)?;
    let map = time_one(&field.inner, exact, tol)?;
    let framed = Framed { map: &map, frame: &frame };
    let rep = count_cylinders(&framed, &frame, depth, Refinement::default()).map_err(numeric)?;
    Ok((rep.realized, rep.total, rep.rate))
}

/// `(1/n) ln |S|` for a greedy `(n, eps)`-separated set sampled in
/// `region = (x_min, x_max, y_min, y_max)`.
#[pyfunction]
#[pyo3(signature = (field, region, n = 6, eps = 0.0078125, samples = 10000, exact = false, tol = 1e-9))]
fn bowen_estimate(
    field: &Field,
    region: (f64, f64, f64, f64),
    n: usize,
    eps: f64,
    samples: usize,
    exact: bool,
    tol: f64,
) -> PyResult<f64> {
    let region = Box2::new(region.0, region.1, region.2, region.3, false).map_err(invalid)?;
    let map = time_one(&field.inner, exact, tol)?;
    bowen_entropy_estimate(&map, &region, n, eps, samples).map_err(numeric)
}

#[pyfunction]
fn shift_entropy(n: usize) -> f64 {
    osgood::entropy::shift_entropy(n)
}

#[pyfunction]
fn entropy_of_iterate(h_of_iterate: f64, n: usize) -> PyResult<f64> {
    if n == 0 {
        return Err(invalid("iterate order must be positive"));
    }
    Ok(osgood::entropy::entropy_of_iterate(h_of_iterate, n))
}

/// Runs the perturbation pipeline on a JSON config. A base field given
/// as a path is resolved against `base_dir`. Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, base_dir = None))]
fn generic_perturb(py: Python<'_>, config_json: &str, base_dir: Option<&str>) -> PyResult<String> {
    let config: PipelineConfig = serde_json::from_str(config_json).map_err(invalid)?;
    config.validate().map_err(invalid)?;
    let base = config.load_base(base_dir.map(Path::new)).map_err(invalid)?;
    let report = py.detach(|| run_pipeline(&config, &base)).map_err(numeric)?;
    Ok(report.to_json())
}

#[pymodule(name = "osgood")]
fn osgood_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Field>()?;
    m.add_class::<Modulus>()?;
    m.add_class::<Certificate>()?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(time_one_grid, m)?)?;
    m.add_function(wrap_pyfunction!(find_periodic_point, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(count_words, m)?)?;
    m.add_function(wrap_pyfunction!(bowen_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(shift_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_of_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(generic_perturb, m)?)?;
    Ok(())
}
