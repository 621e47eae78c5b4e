//! Python bindings for the blocks-world pipeline: scene generation and
//! projection, relation inference, program synthesis, and closed-loop
//! execution.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use blockprog_core::beliefmap::{self, BeliefMap, DEFAULT_BETA, MAP_SIZE};
use blockprog_core::executor::{self, ExecPolicy, FaultConfig, WorldState};
use blockprog_core::geometry::{
    self, BinaryRelations, CameraModel, Scene, SceneFile, SceneGenConfig, StructureKind, PALETTE,
};
use blockprog_core::program::{self, Program, Rel};
use blockprog_core::relationship;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Pairwise Above/Left relations over n objects.
#[pyclass(name = "Relations", from_py_object)]
#[derive(Clone)]
struct PyRelations {
    inner: BinaryRelations,
}

#[pymethods]
impl PyRelations {
    #[new]
    fn new(n: usize) -> Self {
        PyRelations { inner: BinaryRelations::empty(n) }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn above(&self, i: usize, j: usize) -> bool {
        self.inner.above[i][j]
    }

    fn left(&self, i: usize, j: usize) -> bool {
        self.inner.left[i][j]
    }

    fn set_above(&mut self, i: usize, j: usize, v: bool) {
        self.inner.above[i][j] = v;
    }

    fn set_left(&mut self, i: usize, j: usize, v: bool) {
        self.inner.left[i][j] = v;
    }

    /// Violations that make this goal unreachable, as strings (empty = valid).
    fn violations(&self) -> Vec<String> {
        program::validate_goal(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    /// Canonical completion of an ambiguous goal.
    fn completed(&self) -> PyRelations {
        PyRelations { inner: program::complete_ambiguous_goal(&self.inner) }
    }

    fn __repr__(&self) -> String {
        format!(
            "Relations(n={}, above={}, left={})",
            self.inner.n,
            self.inner.count_above(),
            self.inner.count_left()
        )
    }

    fn __eq__(&self, other: &PyRelations) -> bool {
        self.inner == other.inner
    }
}

/// A cuboid scene together with its camera.
#[pyclass(name = "Scene")]
struct PyScene {
    scene: Scene,
    camera: CameraModel,
}

#[pymethods]
impl PyScene {
    /// Deterministic random scene for a seed.
    ///
    /// `structure` is one of "flat", "stack", "pyramid", or "any".
    #[staticmethod]
    #[pyo3(signature = (seed, n=3, structure="any"))]
    fn random(seed: u64, n: usize, structure: &str) -> PyResult<Self> {
        let cfg = match structure {
            "flat" => SceneGenConfig::only(StructureKind::Flat, n),
            "stack" => SceneGenConfig::only(StructureKind::Stack, n),
            "pyramid" => SceneGenConfig::only(StructureKind::Pyramid, n),
            "any" => SceneGenConfig { n_min: n, n_max: n, ..Default::default() },
            other => return Err(PyValueError::new_err(format!("unknown structure {other:?}"))),
        };
        let (scene, camera) = geometry::randomize_scene(seed, &cfg).map_err(err)?;
        Ok(PyScene { scene, camera })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: SceneFile = serde_json::from_str(text).map_err(err)?;
        let (scene, camera) = file.into_scene();
        Ok(PyScene { scene, camera })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&SceneFile::from_scene(&self.scene, &self.camera)).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.scene.n()
    }

    /// Geometric ground-truth relations.
    fn relations(&self) -> PyRelations {
        PyRelations { inner: geometry::ground_truth_relations(&self.scene) }
    }

    /// Projected vertex pixel coordinates per cube (8 per cube).
    fn project(&self) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let projections = relationship::project_all(&self.scene, &self.camera)
            .ok_or_else(|| PyValueError::new_err("projection failed"))?;
        Ok(projections.iter().map(|p| p.vertices.to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Scene(n={})", self.scene.n())
    }
}

/// A pick-and-place program.
#[pyclass(name = "Program", from_py_object)]
#[derive(Clone)]
struct PyProgram {
    inner: Program,
}

#[pymethods]
impl PyProgram {
    /// Exact plan for a goal relation set.
    #[staticmethod]
    fn synthesize(goal: &PyRelations) -> PyResult<Self> {
        Ok(PyProgram { inner: program::synthesize_program(&goal.inner).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: program::ProgramFile = serde_json::from_str(text).map_err(err)?;
        Ok(PyProgram { inner: file.into_program().map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        let file = program::ProgramFile::from_program(&self.inner, &PALETTE);
        serde_json::to_string_pretty(&file).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Steps as (pick, place, "above"|"left") tuples.
    #[getter]
    fn steps(&self) -> Vec<(usize, usize, &'static str)> {
        self.inner
            .steps
            .iter()
            .map(|s| (s.pick, s.place, if s.rel == Rel::Above { "above" } else { "left" }))
            .collect()
    }

    /// Human-readable instruction text using the default color palette.
    fn render_text(&self) -> String {
        program::render_text(&self.inner, &PALETTE)
    }

    /// Relations produced by a faultless run from a flat table.
    fn goal_relations(&self) -> PyResult<PyRelations> {
        Ok(PyRelations { inner: executor::goal_relations(&self.inner).map_err(err)? })
    }

    /// Execute closed-loop from a flat table with the oracle policy.
    ///
    /// Returns a dict with `success` and the list of actions taken.
    #[pyo3(signature = (seed=0, action_failure_prob=0.0, max_steps=None))]
    fn execute(
        &self,
        py: Python<'_>,
        seed: u64,
        action_failure_prob: f64,
        max_steps: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let mut world = WorldState::flat(self.inner.n);
        let faults = FaultConfig { action_failure_prob, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = executor::run_closed_loop(
            &self.inner,
            &mut world,
            &ExecPolicy::Oracle,
            &faults,
            &mut rng,
            max_steps,
        )
        .map_err(err)?;
        let actions: Vec<String> =
            out.trace.iter().map(|t| serde_json::to_string(&t.action).unwrap()).collect();
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("success", out.success)?;
        dict.set_item("actions", actions)?;
        Ok(dict.into())
    }

    fn __repr__(&self) -> String {
        format!("Program(n={}, steps={})", self.inner.n, self.inner.steps.len())
    }

    fn __eq__(&self, other: &PyProgram) -> bool {
        self.inner == other.inner
    }
}

/// Number of distinct valid goals over n objects.
#[pyfunction]
#[pyo3(signature = (n, include_pyramids=false))]
fn count_goals(n: usize, include_pyramids: bool) -> PyResult<usize> {
    Ok(program::enumerate_goals(n, include_pyramids).map_err(err)?.len())
}

/// Sub-cell peak location of a 50x50 belief map, in image pixels.
#[pyfunction]
#[pyo3(signature = (cells, beta=DEFAULT_BETA))]
fn soft_argmax(cells: Vec<Vec<f64>>, beta: f64) -> PyResult<(f64, f64)> {
    if cells.len() != MAP_SIZE || cells.iter().any(|r| r.len() != MAP_SIZE) {
        return Err(PyValueError::new_err(format!("expected a {MAP_SIZE}x{MAP_SIZE} grid")));
    }
    let mut map = BeliefMap::zero();
    for (a, row) in cells.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            map.set(a, b, v);
        }
    }
    beliefmap::soft_argmax(&map, beta).map_err(err)
}

#[pymodule]
fn blockprog(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyRelations>()?;
    m.add_class::<PyProgram>()?;
    m.add_function(wrap_pyfunction!(count_goals, m)?)?;
    m.add_function(wrap_pyfunction!(soft_argmax, m)?)?;
    m.add("PALETTE", PALETTE.to_vec())?;
    Ok(())
}
