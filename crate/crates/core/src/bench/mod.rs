//! Experiment plumbing: datasets, synthetic scenes, noise, evaluation.

mod eval;
pub mod io;
mod synth;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use eval::{e3d, procrustes_align, AlignOptions, ErrorSummary};
pub use io::{export_ply, load_dataset, save_dataset, save_solution};
pub use synth::{random_camera, synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::model::{MeasurementMatrix, RotationStack, ShapeMatrix};
use crate::solver::{solve, Mode, Solution, SolverParams};

/// Inputs of one experiment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub w: MeasurementMatrix,
    pub r: Option<RotationStack>,
    pub s_gt: Option<ShapeMatrix>,
}

impl Dataset {
    /// Checks that the optional parts agree with `w` in size.
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = &self.r {
            if r.frames() != self.w.frames() {
                return Err(Error::ShapeMismatch(format!(
                    "{} rotations for {} frames",
                    r.frames(),
                    self.w.frames()
                )));
            }
        }
        if let Some(s) = &self.s_gt {
            if s.frames() != self.w.frames() || s.points() != self.w.points() {
                return Err(Error::ShapeMismatch(format!(
                    "ground truth is {}×{}, tracks are {}×{}",
                    s.frames(),
                    s.points(),
                    self.w.frames(),
                    self.w.points()
                )));
            }
        }
        Ok(())
    }
}

/// Accuracy and cost of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub e3d: f64,
    pub per_frame_errors: Vec<f64>,
    pub runtime_seconds: f64,
    pub params_used: SolverParams,
    pub noise_ratio: Option<f64>,
}

/// Adds i.i.d. Gaussian noise with standard deviation `r · max|W|`.
pub fn add_noise(w: &MeasurementMatrix, r: f64, seed: u64) -> Result<MeasurementMatrix> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("noise ratio must be >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(w.clone());
    }
    let sigma = r * max_abs(w.data());
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = w.data().map(|v| v + normal.sample(&mut rng));
    MeasurementMatrix::with_column_ids(noisy, w.column_ids().to_vec())
}

/// Solves with wall-clock timing of the solve alone.
pub fn timed_solve(
    w: &MeasurementMatrix,
    r: &RotationStack,
    params: &SolverParams,
) -> Result<(Solution, f64)> {
    let start = Instant::now();
    let solution = solve(w, r, params)?;
    Ok((solution, start.elapsed().as_secs_f64()))
}

fn require_rotations(ds: &Dataset) -> Result<&RotationStack> {
    ds.r.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!(
            "dataset `{}` has no rotations; estimate them first",
            ds.name
        ))
    })
}

fn require_gt(ds: &Dataset) -> Result<&ShapeMatrix> {
    ds.s_gt
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("dataset `{}` has no ground truth", ds.name)))
}

/// Solves `ds` (optionally with noise added) and scores it against its ground truth.
pub fn evaluate(
    ds: &Dataset,
    params: &SolverParams,
    noise: Option<(f64, u64)>,
) -> Result<(Solution, EvalReport)> {
    ds.validate()?;
    let r = require_rotations(ds)?;
    let gt = require_gt(ds)?;
    let w = match noise {
        Some((ratio, seed)) => add_noise(&ds.w, ratio, seed)?,
        None => ds.w.clone(),
    };
    let (solution, runtime_seconds) = timed_solve(&w, r, params)?;
    let err = e3d(&solution.s_s, gt, AlignOptions::default())?;
    let report = EvalReport {
        e3d: err.e3d,
        per_frame_errors: err.per_frame,
        runtime_seconds,
        params_used: params.clone(),
        noise_ratio: noise.map(|(ratio, _)| ratio),
    };
    Ok((solution, report))
}

/// One row of a noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub ratio: f64,
    pub trials: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Noise levels used when none are given.
pub const DEFAULT_NOISE_RATIOS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

/// Trial seed for level index `level` and trial `t`.
pub fn trial_seed(base: u64, level: usize, t: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9).wrapping_add((level as u64) << 32 | t as u64)
}

/// Repeats noisy solves over `ratios` with `trials` independent noise draws each.
pub fn noise_sweep(
    ds: &Dataset,
    params: &SolverParams,
    ratios: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<NoiseRow>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let mut rows = Vec::with_capacity(ratios.len());
    for (level, &ratio) in ratios.iter().enumerate() {
        let mut errs = Vec::with_capacity(trials);
        for t in 0..trials {
            let (_, report) = evaluate(ds, params, Some((ratio, trial_seed(seed, level, t))))?;
            errs.push(report.e3d);
        }
        let mean = errs.iter().sum::<f64>() / trials as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / trials as f64;
        rows.push(NoiseRow {
            ratio,
            trials: errs,
            mean,
            std: var.sqrt(),
        });
    }
    Ok(rows)
}

/// Runs all four ablation modes with otherwise identical parameters.
pub fn ablate(ds: &Dataset, params: &SolverParams) -> Result<Vec<(Mode, EvalReport)>> {
    Mode::ALL
        .iter()
        .map(|&mode| {
            let (_, report) = evaluate(ds, &params.clone().with_mode(mode), None)?;
            Ok((mode, report))
        })
        .collect()
}
