//! Python bindings: cameras, poses, meshes, rendering, metrics, the filter
//! and the command-line driver.

use std::collections::BTreeMap;
use std::path::PathBuf;

use posefilter::filter::{self, ClassOutcome};
use posefilter::geometry::{self, Vec3};
use posefilter::synth::{self, PrimitiveKind};
use posefilter::{metrics, priors, renderer};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(posefilter, PosefilterError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    PosefilterError::new_err(e.to_string())
}

#[pyclass(name = "CameraIntrinsics", module = "posefilter", frozen, from_py_object)]
#[derive(Clone)]
struct PyCameraIntrinsics(geometry::CameraIntrinsics);

#[pymethods]
impl PyCameraIntrinsics {
    #[new]
    #[pyo3(signature = (fx, fy, cx, cy, width, height, z_near=None, z_far=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        z_near: Option<f64>,
        z_far: Option<f64>,
    ) -> PyResult<Self> {
        let k = geometry::CameraIntrinsics::new(fx, fy, cx, cy, width, height).map_err(err)?;
        let k = geometry::CameraIntrinsics::with_range(
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            z_near.unwrap_or(k.z_near),
            z_far.unwrap_or(k.z_far),
        )
        .map_err(err)?;
        Ok(Self(k))
    }

    /// Intrinsics used by generated scenes at `width`×`height`.
    #[staticmethod]
    fn default_for(width: usize, height: usize) -> PyResult<Self> {
        synth::default_intrinsics(width, height).map(Self).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.0.fx
    }

    #[getter]
    fn fy(&self) -> f64 {
        self.0.fy
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }

    /// Pixel coordinates of a camera-frame point, or None behind the camera.
    fn project(&self, point: [f64; 3]) -> Option<(f64, f64)> {
        self.0.project(&Vec3::from(point))
    }

    fn backproject(&self, u: f64, v: f64, depth: f64) -> PyResult<[f64; 3]> {
        self.0.backproject(u, v, depth).map(Into::into).map_err(err)
    }

    fn __repr__(&self) -> String {
        let k = &self.0;
        format!("CameraIntrinsics(fx={}, fy={}, cx={}, cy={}, width={}, height={})", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
    }
}

/// Rigid transform; rotation as a `[w, x, y, z]` quaternion.
#[pyclass(name = "Pose", module = "posefilter", frozen, from_py_object)]
#[derive(Clone)]
struct PyPose(geometry::Pose);

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (rotation=[1.0, 0.0, 0.0, 0.0], translation=[0.0, 0.0, 0.0]))]
    fn new(rotation: [f64; 4], translation: [f64; 3]) -> PyResult<Self> {
        let r = geometry::Rotation::try_from(rotation).map_err(err)?;
        Ok(Self(geometry::Pose::new(r, Vec3::from(translation))))
    }

    #[staticmethod]
    fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let r = geometry::Rotation::from_axis_angle(&Vec3::from(axis), angle);
        Self(geometry::Pose::new(r, Vec3::from(translation)))
    }

    #[getter]
    fn rotation(&self) -> [f64; 4] {
        self.0.rotation.wxyz()
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.0.translation.into()
    }

    /// Row-major 3×3 rotation matrix.
    fn matrix(&self) -> [[f64; 3]; 3] {
        let m = self.0.rotation.matrix();
        [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
    }

    fn transform_point(&self, point: [f64; 3]) -> [f64; 3] {
        self.0.transform_point(&Vec3::from(point)).into()
    }

    /// `self ∘ other`.
    fn compose(&self, other: &PyPose) -> Self {
        Self(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn __repr__(&self) -> String {
        format!("Pose(rotation={:?}, translation={:?})", self.rotation(), self.translation())
    }
}

#[pyclass(name = "TriangleMesh", module = "posefilter", frozen, from_py_object)]
#[derive(Clone)]
struct PyTriangleMesh(geometry::TriangleMesh);

#[pymethods]
impl PyTriangleMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        let v = vertices.into_iter().map(Vec3::from).collect();
        geometry::TriangleMesh::new(v, triangles).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load_obj(path: PathBuf) -> PyResult<Self> {
        geometry::TriangleMesh::load_obj(path).map(Self).map_err(err)
    }

    /// `kind` is "box" (`[x, y, z]`), "cylinder" (`[diameter, height]`) or
    /// "lshape" (`[arm_x, arm_y, arm_z, thickness]`).
    #[staticmethod]
    #[pyo3(signature = (kind, dims, tessellation=32))]
    fn primitive(kind: &str, dims: Vec<f64>, tessellation: usize) -> PyResult<Self> {
        let kind = match kind {
            "box" => PrimitiveKind::Box,
            "cylinder" => PrimitiveKind::Cylinder,
            "lshape" => PrimitiveKind::Lshape,
            other => return Err(err(format!("unknown primitive '{other}' (box|cylinder|lshape)"))),
        };
        synth::make_primitive(kind, &dims, tessellation).map(Self).map_err(err)
    }

    /// Mesh of a catalog class such as "tall_box" or "can".
    #[staticmethod]
    fn catalog(class: &str) -> PyResult<Self> {
        let (_, shape) = synth::catalog()
            .into_iter()
            .find(|(name, _)| *name == class)
            .ok_or_else(|| err(format!("unknown catalog class '{class}'")))?;
        shape.mesh().map(Self).map_err(err)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.0.vertices().iter().map(|v| (*v).into()).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.0.triangles().to_vec()
    }

    fn diameter(&self) -> f64 {
        self.0.diameter()
    }

    fn write_obj(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_obj(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.vertices().len()
    }
}

/// Filter settings. Every field of the JSON form can also be set with
/// `from_json`; the common ones have properties.
#[pyclass(name = "FilterConfig", module = "posefilter", from_py_object)]
#[derive(Clone, Default)]
struct PyFilterConfig(filter::FilterConfig);

#[pymethods]
impl PyFilterConfig {
    #[new]
    #[pyo3(signature = (num_samples=None, max_iterations=None, convergence_threshold=None, epsilon=None, seed=None, literal=false))]
    fn new(
        num_samples: Option<usize>,
        max_iterations: Option<usize>,
        convergence_threshold: Option<f64>,
        epsilon: Option<f64>,
        seed: Option<u64>,
        literal: bool,
    ) -> PyResult<Self> {
        let mut c = if literal { filter::FilterConfig::literal() } else { filter::FilterConfig::default() };
        if let Some(n) = num_samples {
            c.num_samples = n;
        }
        if let Some(n) = max_iterations {
            c.max_iterations = n;
        }
        if let Some(w) = convergence_threshold {
            c.convergence_threshold = w;
        }
        if let Some(e) = epsilon {
            c.likelihood.epsilon = e;
        }
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let c: filter::FilterConfig = serde_json::from_str(text).map_err(err)?;
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0).map_err(err)
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.0.num_samples
    }

    #[setter]
    fn set_num_samples(&mut self, n: usize) {
        self.0.num_samples = n;
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.0.max_iterations
    }

    #[setter]
    fn set_max_iterations(&mut self, n: usize) {
        self.0.max_iterations = n;
    }

    #[getter]
    fn convergence_threshold(&self) -> f64 {
        self.0.convergence_threshold
    }

    #[setter]
    fn set_convergence_threshold(&mut self, w: f64) {
        self.0.convergence_threshold = w;
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.likelihood.epsilon
    }

    #[setter]
    fn set_epsilon(&mut self, e: f64) {
        self.0.likelihood.epsilon = e;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, s: u64) {
        self.0.seed = s;
    }

    /// Likelihood coefficients `(alpha_box, alpha_b, alpha_r, alpha_e, alpha_p)`.
    #[getter]
    fn alphas(&self) -> [f64; 5] {
        self.0.likelihood.weights.as_array()
    }

    #[setter]
    fn set_alphas(&mut self, a: [f64; 5]) -> PyResult<()> {
        self.0.likelihood.weights = posefilter::LikelihoodWeights::new(a[0], a[1], a[2], a[3], a[4]).map_err(err)?;
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(err)
    }
}

#[pyclass(name = "EstimateReport", module = "posefilter", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimateReport(filter::EstimateReport);

#[pymethods]
impl PyEstimateReport {
    #[getter]
    fn object_class(&self) -> &str {
        &self.0.object_class
    }

    #[getter]
    fn best_pose(&self) -> PyPose {
        PyPose(self.0.best_pose)
    }

    /// `(u_min, v_min, u_max, v_max, confidence)`.
    #[getter]
    fn best_box(&self) -> (f64, f64, f64, f64, f64) {
        let b = &self.0.best_box;
        (b.u_min, b.v_min, b.u_max, b.v_max, b.confidence)
    }

    #[getter]
    fn best_weight(&self) -> f64 {
        self.0.best_weight
    }

    /// Weighted terms of the best hypothesis by name.
    #[getter]
    fn breakdown(&self) -> BTreeMap<&'static str, f64> {
        let b = &self.0.breakdown;
        BTreeMap::from([
            ("w_box", b.w_box),
            ("i_b", b.i_b),
            ("i_r", b.i_r),
            ("i_e", b.i_e),
            ("i_p", b.i_p),
            ("total", b.total),
        ])
    }

    #[getter]
    fn iterations_run(&self) -> usize {
        self.0.iterations_run
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn present(&self) -> bool {
        self.0.present
    }

    #[getter]
    fn weight_trace(&self) -> Vec<f64> {
        self.0.weight_trace.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimateReport(object_class={:?}, best_weight={:.4}, converged={}, iterations_run={})",
            self.0.object_class, self.0.best_weight, self.0.converged, self.0.iterations_run
        )
    }
}

/// A scene bundle directory written by `posefilter synth`.
#[pyclass(name = "Bundle", module = "posefilter", frozen)]
struct PyBundle(synth::Bundle);

#[pymethods]
impl PyBundle {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        synth::Bundle::load(path).map(Self).map_err(err)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.0.scene.classes()
    }

    #[getter]
    fn intrinsics(&self) -> PyCameraIntrinsics {
        PyCameraIntrinsics(self.0.scene.intrinsics)
    }

    fn pose(&self, class: &str) -> PyResult<PyPose> {
        self.record(class).map(|o| PyPose(o.pose))
    }

    fn symmetric(&self, class: &str) -> PyResult<bool> {
        self.record(class).map(|o| o.symmetric)
    }

    fn mesh(&self, class: &str) -> PyResult<PyTriangleMesh> {
        self.0.mesh(class).map(PyTriangleMesh).map_err(err)
    }

    /// Observed depth per pixel in row-major order; None where absent.
    fn depth(&self) -> PyResult<Vec<Option<f64>>> {
        Ok(self.0.observation().map_err(err)?.depths())
    }
}

impl PyBundle {
    fn record(&self, class: &str) -> PyResult<&synth::SceneObjectRecord> {
        self.0.scene.object(class).ok_or_else(|| err(format!("class '{class}' is not in the scene")))
    }
}

/// Annealing factor for a best weight.
#[pyfunction]
fn anneal_factor(best_weight: f64) -> f64 {
    filter::anneal_factor(best_weight)
}

/// Z-buffer depth of `mesh` at `pose`, row-major; None where uncovered.
#[pyfunction]
fn render_depth(mesh: &PyTriangleMesh, pose: &PyPose, intrinsics: &PyCameraIntrinsics) -> Vec<Option<f64>> {
    renderer::render_depth(&mesh.0, &pose.0, &intrinsics.0).depths().to_vec()
}

#[pyfunction]
fn add_error(mesh: &PyTriangleMesh, pose_gt: &PyPose, pose_est: &PyPose) -> f64 {
    metrics::add_error(&mesh.0, &pose_gt.0, &pose_est.0)
}

#[pyfunction]
fn adds_error(mesh: &PyTriangleMesh, pose_gt: &PyPose, pose_est: &PyPose) -> f64 {
    metrics::adds_error(&mesh.0, &pose_gt.0, &pose_est.0)
}

/// `(thresholds, accuracy, auc)` of the accuracy-threshold curve.
#[pyfunction]
#[pyo3(signature = (errors, t_max=metrics::DEFAULT_T_MAX, steps=401))]
fn accuracy_curve(errors: Vec<f64>, t_max: f64, steps: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let c = metrics::accuracy_curve(&errors, t_max, steps).map_err(err)?;
    Ok((c.thresholds, c.accuracy, c.auc))
}

/// Tight box `(u_min, v_min, u_max, v_max)` of the projected mesh.
#[pyfunction]
fn projected_box(mesh: &PyTriangleMesh, pose: &PyPose, intrinsics: &PyCameraIntrinsics) -> PyResult<(f64, f64, f64, f64)> {
    let b = priors::gt_box_from_pose(&mesh.0, &pose.0, &intrinsics.0).map_err(err)?;
    Ok((b.u_min, b.v_min, b.u_max, b.v_max))
}

/// Runs the filter on a bundle for `classes` (the scene's objects by
/// default). Returns a dict from class to its report, or to the error
/// message when that class could not be estimated.
#[pyfunction]
#[pyo3(signature = (bundle, prior=None, config=None, classes=None))]
fn estimate(
    py: Python<'_>,
    bundle: &PyBundle,
    prior: Option<PathBuf>,
    config: Option<PyFilterConfig>,
    classes: Option<Vec<String>>,
) -> PyResult<BTreeMap<String, Py<PyAny>>> {
    let b = &bundle.0;
    let config = config.unwrap_or_default().0;
    config.validate().map_err(err)?;
    let classes = classes.unwrap_or_else(|| b.scene.classes());
    let prior_path = prior.unwrap_or_else(|| b.dir.join(synth::PRIOR_FILE));
    let (prior, _) = priors::load_prior(&prior_path).map_err(err)?;
    let observation = b.observation().map_err(err)?;
    let mut meshes = BTreeMap::new();
    for class in &classes {
        let mesh = match b.scene.object(class) {
            Some(_) => b.mesh(class).map_err(err)?,
            None => PyTriangleMesh::catalog(class)?.0,
        };
        meshes.insert(class.clone(), mesh);
    }
    let outcomes = py
        .detach(|| filter::run_scene(&classes, &meshes, &prior, &observation, &config))
        .map_err(err)?;
    let mut out = BTreeMap::new();
    for o in outcomes {
        let class = o.object_class().to_string();
        let value = match o {
            ClassOutcome::Estimated(r) => Py::new(py, PyEstimateReport(r))?.into_any(),
            ClassOutcome::Failed { ref error, .. } => error.clone().into_pyobject(py)?.into_any().unbind(),
        };
        out.insert(class, value);
    }
    Ok(out)
}

/// Runs the command-line driver with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let mut full = vec!["posefilter".to_string()];
    full.extend(args);
    py.detach(|| posefilter_cli::main_with_args(full))
}

#[pymodule]
#[pyo3(name = "posefilter")]
fn posefilter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PosefilterError", m.py().get_type::<PosefilterError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCameraIntrinsics>()?;
    m.add_class::<PyPose>()?;
    m.add_class::<PyTriangleMesh>()?;
    m.add_class::<PyFilterConfig>()?;
    m.add_class::<PyEstimateReport>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(anneal_factor, m)?)?;
    m.add_function(wrap_pyfunction!(render_depth, m)?)?;
    m.add_function(wrap_pyfunction!(add_error, m)?)?;
    m.add_function(wrap_pyfunction!(adds_error, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_curve, m)?)?;
    m.add_function(wrap_pyfunction!(projected_box, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
