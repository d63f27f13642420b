//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use grassfm::bench::{self, AlignOptions, Dataset, SynthConfig};
use grassfm::model::{MeasurementMatrix, RotationStack, ShapeMatrix};
use grassfm::solver::{self, Solution, SolverParams};
use grassfm::Error;
use nalgebra::{DMatrix, Matrix2x3};
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingFile(p) => PyFileNotFoundError::new_err(format!("missing file: {}", p.display())),
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> grassfm::Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInput("rows have different lengths".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn rotations_from_rows(rows: &[Vec<f64>]) -> grassfm::Result<RotationStack> {
    let m = from_rows(rows)?;
    if m.ncols() != 3 || m.nrows() % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "rotations must be 2F×3, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let blocks = (0..m.nrows() / 2)
        .map(|f| Matrix2x3::from_fn(|i, j| m[(2 * f + i, j)]))
        .collect();
    RotationStack::new(blocks)
}

fn params_from(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<SolverParams> {
    let mut p = SolverParams::default();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let value = if v.is_none() {
                "auto".to_string()
            } else if let Ok(b) = v.extract::<bool>() {
                b.to_string()
            } else {
                v.str()?.to_string()
            };
            p.set(&key, &value).map_err(py_err)?;
        }
    }
    p.validate().map_err(py_err)?;
    Ok(p)
}

/// Tracks, optional cameras and optional ground truth.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.w.frames()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.w.points()
    }

    #[getter]
    fn tracks(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.w.data())
    }

    #[getter]
    fn rotations(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.r.as_ref().map(|r| to_rows(&r.stacked()))
    }

    #[getter]
    fn shape_gt(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.s_gt.as_ref().map(|s| to_rows(s.data()))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        bench::save_dataset(&self.inner, &dir).map_err(py_err)
    }

    /// Solves with keyword parameters and returns `(solution, e3d, runtime_seconds)`.
    #[pyo3(signature = (**params))]
    fn evaluate(&self, params: Option<&Bound<'_, PyDict>>) -> PyResult<(PySolution, f64, f64)> {
        let p = params_from(params)?;
        let (solution, report) = bench::evaluate(&self.inner, &p, None).map_err(py_err)?;
        Ok((PySolution { inner: solution }, report.e3d, report.runtime_seconds))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, frames={}, points={})",
            self.inner.name,
            self.inner.w.frames(),
            self.inner.w.points()
        )
    }
}

/// Result of a solve.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: Solution,
}

#[pymethods]
impl PySolution {
    /// `3F × P` shapes in the input's units.
    #[getter]
    fn shape(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.s_s.data())
    }

    #[getter]
    fn shape_sharp(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.s_sharp.data())
    }

    #[getter]
    fn c_s(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.c_s)
    }

    #[getter]
    fn c_t(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.c_t)
    }

    #[getter]
    fn groups_s(&self) -> Vec<usize> {
        self.inner.grouping_s.assignments().to_vec()
    }

    #[getter]
    fn groups_t(&self) -> Vec<usize> {
        self.inner.grouping_t.assignments().to_vec()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations_run
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn final_maxgap(&self) -> f64 {
        self.inner.final_maxgap
    }

    #[getter]
    fn final_beta(&self) -> f64 {
        self.inner.final_beta
    }

    /// `(iter, maxgap, beta, total objective)` per iteration.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|h| (h.iter, h.maxgap, h.beta, h.objective.total))
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (frames=30, points=600, subspaces=3, rank=2, deform_scale=0.5, seed=7))]
fn synth_generate(
    frames: usize,
    points: usize,
    subspaces: usize,
    rank: usize,
    deform_scale: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let inner = bench::synth_generate(&SynthConfig {
        frames,
        points,
        subspaces,
        rank,
        deform_scale,
        seed,
    })
    .map_err(py_err)?;
    Ok(PyDataset { inner })
}

#[pyfunction]
fn load_dataset(dir: PathBuf) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: bench::load_dataset(&dir).map_err(py_err)?,
    })
}

/// Default solver parameters as a `{name: text}` dict.
#[pyfunction]
fn default_params() -> Vec<(String, String)> {
    SolverParams::default()
        .to_pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Reconstructs shapes from `2F × P` tracks and `2F × 3` stacked cameras.
#[pyfunction]
#[pyo3(signature = (tracks, rotations, **params))]
fn solve(
    tracks: Vec<Vec<f64>>,
    rotations: Vec<Vec<f64>>,
    params: Option<&Bound<'_, PyDict>>,
) -> PyResult<PySolution> {
    let p = params_from(params)?;
    let w = from_rows(&tracks).and_then(MeasurementMatrix::new).map_err(py_err)?;
    let r = rotations_from_rows(&rotations).map_err(py_err)?;
    let inner = solver::solve(&w, &r, &p).map_err(py_err)?;
    Ok(PySolution { inner })
}

/// Mean per-frame normalised error after similarity alignment, and the per-frame list.
#[pyfunction]
#[pyo3(signature = (estimate, ground_truth, scale=true))]
fn e3d(estimate: Vec<Vec<f64>>, ground_truth: Vec<Vec<f64>>, scale: bool) -> PyResult<(f64, Vec<f64>)> {
    let est = from_rows(&estimate).and_then(ShapeMatrix::new).map_err(py_err)?;
    let gt = from_rows(&ground_truth).and_then(ShapeMatrix::new).map_err(py_err)?;
    let out = bench::e3d(&est, &gt, AlignOptions { scale }).map_err(py_err)?;
    Ok((out.e3d, out.per_frame))
}

#[pyfunction]
#[pyo3(signature = (estimate, target, scale=true))]
fn procrustes_align(estimate: Vec<Vec<f64>>, target: Vec<Vec<f64>>, scale: bool) -> PyResult<Vec<Vec<f64>>> {
    let a = from_rows(&estimate).map_err(py_err)?;
    let b = from_rows(&target).map_err(py_err)?;
    let out = bench::procrustes_align(&a, &b, AlignOptions { scale }).map_err(py_err)?;
    Ok(to_rows(&out))
}

/// Singular value thresholding.
#[pyfunction]
fn svt(m: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = from_rows(&m).map_err(py_err)?;
    Ok(to_rows(&solver::svt(&m, tau).map_err(py_err)?))
}

#[pyfunction]
fn add_noise(tracks: Vec<Vec<f64>>, ratio: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let w = from_rows(&tracks).and_then(MeasurementMatrix::new).map_err(py_err)?;
    Ok(to_rows(bench::add_noise(&w, ratio, seed).map_err(py_err)?.data()))
}

/// Cameras of a rigid scene as a `2F × 3` stack, frame 0 fixed to `[I 0]`.
#[pyfunction]
fn estimate_rigid(tracks: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let w = from_rows(&tracks).and_then(MeasurementMatrix::new).map_err(py_err)?;
    let r = grassfm::rotation::estimate_rigid(&w).map_err(py_err)?;
    Ok(to_rows(&r.stacked()))
}

#[pymodule]
fn pygrassfm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(default_params, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(e3d, m)?)?;
    m.add_function(wrap_pyfunction!(procrustes_align, m)?)?;
    m.add_function(wrap_pyfunction!(svt, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rigid, m)?)?;
    Ok(())
}
