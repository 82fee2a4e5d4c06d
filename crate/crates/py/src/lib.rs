//! Python bindings for the shape-correspondence pipeline.
//!
//! Exposes the main types (Mesh, SpectralBasis, DescriptorSet, Matching,
//! Report) and the operations connecting them: solve_spectrum,
//! compute_descriptors, match_descriptors, evaluate_matching, plus the
//! scalar amplification factor amp() for stability exploration. Errors map
//! to ValueError (bad input), ArithmeticError (numerical failure), and
//! IOError (file problems).

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use shapecorr::config::{ModelKind, SchemeKind};
use shapecorr::integrators::{ModelSpec, SchemeSpec, TimeGrid};
use shapecorr::laplacian::OperatorPair;
use shapecorr::mesh::TriangleMesh;

fn to_py_err(err: shapecorr::Error) -> PyErr {
    use shapecorr::Error as E;
    let text = err.to_string();
    match err {
        E::Parse { .. } | E::InvalidMesh(_) | E::Mismatch(_) | E::Config(_) => {
            PyValueError::new_err(text)
        }
        E::Numerical(_) => PyArithmeticError::new_err(text),
        E::Io { .. } | E::Format(_) => PyIOError::new_err(text),
    }
}

fn parse_model(model: &str, psi: f64) -> PyResult<ModelSpec> {
    let kind: ModelKind = model.parse().map_err(to_py_err)?;
    match kind {
        ModelKind::Heat => Ok(ModelSpec::heat()),
        ModelKind::Wave => Ok(ModelSpec::wave()),
        ModelKind::DampedWave => ModelSpec::damped_wave(psi).map_err(to_py_err),
    }
}

fn parse_scheme(scheme: &str, epsilon: f64) -> PyResult<SchemeSpec> {
    let kind: SchemeKind = scheme.parse().map_err(to_py_err)?;
    match kind {
        SchemeKind::ExplicitEuler => Ok(SchemeSpec::explicit_euler()),
        SchemeKind::CrankNicolson => Ok(SchemeSpec::crank_nicolson()),
        SchemeKind::ImplicitEuler => Ok(SchemeSpec::implicit_euler()),
        SchemeKind::Twizell => SchemeSpec::twizell(epsilon).map_err(to_py_err),
    }
}

/// Triangle mesh with vertex positions and triangle indices.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: TriangleMesh,
}

#[pymethods]
impl PyMesh {
    /// Build a mesh from (x, y, z) vertex tuples and index triples.
    #[new]
    #[pyo3(signature = (vertices, triangles, name = "mesh"))]
    fn new(
        vertices: Vec<(f64, f64, f64)>,
        triangles: Vec<(usize, usize, usize)>,
        name: &str,
    ) -> PyResult<Self> {
        let vertices = vertices
            .into_iter()
            .map(|(x, y, z)| nalgebra::Vector3::new(x, y, z))
            .collect();
        let triangles = triangles.into_iter().map(|(a, b, c)| [a, b, c]).collect();
        let inner = TriangleMesh::from_parts(vertices, triangles, name.to_string())
            .map_err(to_py_err)?;
        Ok(PyMesh { inner })
    }

    /// Load a .off mesh or a TOSCA .vert (with sibling .tri).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = shapecorr::cli::load_mesh(&path).map_err(to_py_err)?;
        Ok(PyMesh { inner })
    }

    fn save_off(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_off(&path).map_err(to_py_err)
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_triangles(&self) -> usize {
        self.inner.num_triangles()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    fn total_area(&self) -> PyResult<f64> {
        Ok(self.inner.compute_areas().map_err(to_py_err)?.total_area)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(name='{}', vertices={}, triangles={})",
            self.inner.name,
            self.inner.num_vertices(),
            self.inner.num_triangles()
        )
    }
}

/// Truncated eigenbasis of the Laplace operator on a mesh.
#[pyclass(name = "SpectralBasis")]
struct PyBasis {
    inner: shapecorr::spectrum::SpectralBasis,
}

#[pymethods]
impl PyBasis {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn lambda_max_abs(&self) -> f64 {
        self.inner.lambda_max_abs
    }

    /// D-orthonormal eigenvector row of one vertex (its modal weights).
    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n {
            return Err(PyValueError::new_err(format!(
                "vertex index {i} out of range for N = {}",
                self.inner.n
            )));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_cache(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner =
            shapecorr::spectrum::SpectralBasis::load_cache(&path).map_err(to_py_err)?;
        Ok(PyBasis { inner })
    }

    fn __repr__(&self) -> String {
        format!("SpectralBasis(n={}, r={})", self.inner.n, self.inner.r)
    }
}

/// Per-vertex descriptor samples on a shared time grid.
#[pyclass(name = "DescriptorSet")]
struct PySet {
    inner: shapecorr::descriptor::DescriptorSet,
}

#[pymethods]
impl PySet {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Number of time steps M; every descriptor has M + 1 samples.
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn shape(&self) -> &str {
        &self.inner.shape
    }

    /// Samples (f(t_0), ..., f(t_M)) of one vertex.
    fn samples_of(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n {
            return Err(PyValueError::new_err(format!(
                "vertex index {i} out of range for N = {}",
                self.inner.n
            )));
        }
        Ok(self.inner.samples_of(i).to_vec())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = shapecorr::descriptor::DescriptorSet::load(&path).map_err(to_py_err)?;
        Ok(PySet { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "DescriptorSet(shape='{}', n={}, m={}, tau={})",
            self.inner.shape, self.inner.n, self.inner.m, self.inner.tau
        )
    }
}

/// Nearest-descriptor matching of a query shape into a target shape.
#[pyclass(name = "Matching")]
struct PyMatching {
    inner: shapecorr::correspondence::Matching,
}

#[pymethods]
impl PyMatching {
    /// matches[i] is the target vertex assigned to query vertex i.
    #[getter]
    fn matches(&self) -> Vec<usize> {
        self.inner.matches.clone()
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.inner.distances.clone()
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path, &[]).map_err(to_py_err)
    }

    #[staticmethod]
    fn load_csv(path: PathBuf) -> PyResult<Self> {
        let inner =
            shapecorr::correspondence::Matching::load_csv(&path).map_err(to_py_err)?;
        Ok(PyMatching { inner })
    }

    fn __repr__(&self) -> String {
        format!("Matching(n={})", self.inner.matches.len())
    }
}

/// Princeton-protocol evaluation report.
#[pyclass(name = "Report")]
struct PyReport {
    inner: shapecorr::evaluation::EvaluationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn hit_rate_percent(&self) -> f64 {
        self.inner.hit_rate_percent
    }

    /// Normalized geodesic error of every query vertex.
    #[getter]
    fn errors(&self) -> Vec<f64> {
        self.inner.errors.clone()
    }

    /// (threshold, fraction) pairs of the cumulative error curve.
    #[getter]
    fn curve(&self) -> Vec<(f64, f64)> {
        self.inner.curve.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    fn mean_error(&self) -> f64 {
        self.inner.mean_error()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(hit_rate_percent={}, threshold={})",
            self.inner.hit_rate_percent, self.inner.threshold
        )
    }
}

/// Solve the r smallest-|lambda| eigenpairs of the mesh Laplacian pencil.
#[pyfunction]
fn solve_spectrum(mesh: &PyMesh, r: usize) -> PyResult<PyBasis> {
    let areas = mesh.inner.compute_areas().map_err(to_py_err)?;
    let op = OperatorPair::assemble(&mesh.inner, &areas).map_err(to_py_err)?;
    let inner = shapecorr::spectrum::solve_reduced(&op, r).map_err(to_py_err)?;
    Ok(PyBasis { inner })
}

/// Compute descriptors for every vertex under one model/scheme/grid choice.
#[pyfunction]
#[pyo3(signature = (
    basis,
    model = "heat",
    scheme = "implicit-euler",
    c = 1.0,
    m0 = 100,
    t_m = 1.0,
    psi = 0.0,
    epsilon = 1e-6,
    shape = "shape"
))]
#[allow(clippy::too_many_arguments)]
fn compute_descriptors(
    basis: &PyBasis,
    model: &str,
    scheme: &str,
    c: f64,
    m0: usize,
    t_m: f64,
    psi: f64,
    epsilon: f64,
    shape: &str,
) -> PyResult<PySet> {
    let model = parse_model(model, psi)?;
    let scheme = parse_scheme(scheme, epsilon)?;
    let grid = TimeGrid::from_horizon(
        &model,
        t_m,
        basis.inner.lambda_max_abs,
        basis.inner.lambda_r_abs(),
        m0,
        c,
    )
    .map_err(to_py_err)?;
    let inner = shapecorr::descriptor::compute_all(&basis.inner, shape, &model, &grid, &scheme)
        .map_err(to_py_err)?;
    Ok(PySet { inner })
}

/// Match every query descriptor to its L1-nearest target descriptor.
#[pyfunction]
fn match_descriptors(query: &PySet, target: &PySet) -> PyResult<PyMatching> {
    let inner = shapecorr::correspondence::match_sets(&query.inner, &target.inner)
        .map_err(to_py_err)?;
    Ok(PyMatching { inner })
}

/// Score a matching on the target mesh; truth=None means identity.
#[pyfunction]
#[pyo3(signature = (matching, target_mesh, truth = None, threshold = 0.25))]
fn evaluate_matching(
    matching: &PyMatching,
    target_mesh: &PyMesh,
    truth: Option<Vec<usize>>,
    threshold: f64,
) -> PyResult<PyReport> {
    let truth = truth.unwrap_or_else(|| (0..matching.inner.matches.len()).collect());
    let areas = target_mesh.inner.compute_areas().map_err(to_py_err)?;
    let inner = shapecorr::evaluation::evaluate(
        &matching.inner,
        &truth,
        &target_mesh.inner,
        &areas,
        threshold,
    )
    .map_err(to_py_err)?;
    Ok(PyReport { inner })
}

/// Single-source geodesic distances on the mesh edge graph.
#[pyfunction]
fn geodesic_distances(mesh: &PyMesh, source: usize) -> PyResult<Vec<f64>> {
    shapecorr::evaluation::geodesic_distances(&mesh.inner, source).map_err(to_py_err)
}

/// Scalar amplification factor R(z) of a scheme.
#[pyfunction]
#[pyo3(signature = (scheme, z, epsilon = 1e-6))]
fn amp(scheme: &str, z: f64, epsilon: f64) -> PyResult<f64> {
    Ok(parse_scheme(scheme, epsilon)?.amp(z))
}

#[pymodule]
fn shapecorr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PySet>()?;
    m.add_class::<PyMatching>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(solve_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(compute_descriptors, m)?)?;
    m.add_function(wrap_pyfunction!(match_descriptors, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_matching, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_distances, m)?)?;
    m.add_function(wrap_pyfunction!(amp, m)?)?;
    Ok(())
}
