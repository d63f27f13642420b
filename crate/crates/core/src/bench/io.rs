//! Dataset and solution directories.
//!
//! Matrices are stored as two little-endian `u64` dimensions (rows, cols)
//! followed by row-major little-endian `f64` entries.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix2x3};

use crate::bench::{Dataset, EvalReport};
use crate::error::{Error, Result};
use crate::model::{MeasurementMatrix, RotationStack, ShapeMatrix};
use crate::solver::{ObjectiveTerms, Solution};

pub const TRACKS: &str = "tracks";
pub const ROTATIONS: &str = "rotations";
pub const SHAPE_GT: &str = "shape_gt";
pub const META: &str = "meta";

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::ParseError {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < 16 {
        return Err(parse_err(path, "file shorter than its 16-byte header"));
    }
    let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (dim(0), dim(8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| parse_err(path, format!("dimensions {rows}×{cols} overflow")))?;
    if bytes.len() as u64 != expected {
        return Err(parse_err(
            path,
            format!("{rows}×{cols} matrix needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let body = &bytes[16..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(body[at..at + 8].try_into().expect("8 bytes"))
    }))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_matrix(&fs::read(path)?, path)
}

fn check_finite(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} contains non-finite values", path.display())))
    }
}

/// Parsed `meta` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    pub frames: Option<usize>,
    pub points: Option<usize>,
    pub name: Option<String>,
}

pub fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path)?;
    let mut meta = Meta::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, format!("expected key=value, got `{line}`")))?;
        let count = || {
            value
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(path, format!("{key}: {e}")))
        };
        match key.trim() {
            "F" => meta.frames = Some(count()?),
            "P" => meta.points = Some(count()?),
            "name" => meta.name = Some(value.trim().to_string()),
            _ => {}
        }
    }
    Ok(meta)
}

fn expect_shape(m: &DMatrix<f64>, rows: usize, cols: usize, path: &Path) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} is {}×{}, expected {rows}×{cols}",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Reads a dataset directory: `tracks` is required, `rotations`, `shape_gt`
/// and `meta` are optional.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let tracks_path = dir.join(TRACKS);
    let tracks = read_matrix(&tracks_path)?;
    check_finite(&tracks, &tracks_path)?;
    let meta_path = dir.join(META);
    let meta = if meta_path.is_file() {
        read_meta(&meta_path)?
    } else {
        Meta::default()
    };
    if tracks.nrows() % 2 != 0 || tracks.nrows() == 0 || tracks.ncols() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} is {}×{}, expected 2F×P",
            tracks_path.display(),
            tracks.nrows(),
            tracks.ncols()
        )));
    }
    let frames = tracks.nrows() / 2;
    let points = tracks.ncols();
    if let Some(f) = meta.frames {
        if f != frames {
            return Err(Error::ShapeMismatch(format!(
                "meta declares F={f} but tracks hold {frames} frames"
            )));
        }
    }
    if let Some(p) = meta.points {
        if p != points {
            return Err(Error::ShapeMismatch(format!(
                "meta declares P={p} but tracks hold {points} points"
            )));
        }
    }

    let rot_path = dir.join(ROTATIONS);
    let r = if rot_path.is_file() {
        let m = read_matrix(&rot_path)?;
        check_finite(&m, &rot_path)?;
        expect_shape(&m, 2 * frames, 3, &rot_path)?;
        let blocks = (0..frames)
            .map(|f| Matrix2x3::from_fn(|i, j| m[(2 * f + i, j)]))
            .collect();
        Some(RotationStack::new(blocks)?)
    } else {
        None
    };
    let gt_path = dir.join(SHAPE_GT);
    let s_gt = if gt_path.is_file() {
        let m = read_matrix(&gt_path)?;
        check_finite(&m, &gt_path)?;
        expect_shape(&m, 3 * frames, points, &gt_path)?;
        Some(ShapeMatrix::new(m)?)
    } else {
        None
    };
    let name = meta.name.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(Dataset {
        name,
        w: MeasurementMatrix::new(tracks)?,
        r,
        s_gt,
    })
}

/// Writes `dataset` into `dir` (created if needed).
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let w = dataset.w.clone().in_original_order();
    write_matrix(&dir.join(TRACKS), w.data())?;
    if let Some(r) = &dataset.r {
        write_matrix(&dir.join(ROTATIONS), &r.stacked())?;
    }
    if let Some(s) = &dataset.s_gt {
        write_matrix(&dir.join(SHAPE_GT), s.clone().in_original_order().data())?;
    }
    fs::write(
        dir.join(META),
        format!("F={}\nP={}\nname={}\n", w.frames(), w.points(), dataset.name),
    )?;
    Ok(())
}

/// Iteration log as comma-separated text with a header row.
pub fn history_csv(solution: &Solution) -> String {
    let mut out = String::from("iter,maxgap,beta,k_s,k_t");
    for name in ObjectiveTerms::NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for rec in &solution.history {
        let _ = write!(out, "{},{:e},{:e},{},{}", rec.iter, rec.maxgap, rec.beta, rec.k_s, rec.k_t);
        for v in rec.objective.values() {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

/// `key=value` lines describing a finished solve.
pub fn report_text(solution: &Solution, eval: Option<&EvalReport>, runtime_seconds: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "converged={}", solution.converged);
    let _ = writeln!(out, "iterations={}", solution.iterations_run);
    let _ = writeln!(out, "final_maxgap={:e}", solution.final_maxgap);
    let _ = writeln!(out, "final_beta={:e}", solution.final_beta);
    let _ = writeln!(out, "k_s={}", solution.grouping_s.k());
    let _ = writeln!(out, "k_t={}", solution.grouping_t.k());
    let _ = writeln!(out, "runtime_seconds={runtime_seconds}");
    if let Some(e) = eval {
        let _ = writeln!(out, "e3d={:e}", e.e3d);
        if let Some(r) = e.noise_ratio {
            let _ = writeln!(out, "noise_ratio={r}");
        }
        let frames: Vec<String> = e.per_frame_errors.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "per_frame_errors={}", frames.join(","));
        for (k, v) in e.params_used.to_pairs() {
            let _ = writeln!(out, "param.{k}={v}");
        }
    }
    out
}

/// Writes `shape`, `shape_sharp`, `C_s`, `C_t`, `history` and `report` into `dir`.
pub fn save_solution(
    solution: &Solution,
    eval: Option<&EvalReport>,
    runtime_seconds: f64,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("shape"), solution.s_s.data())?;
    write_matrix(&dir.join("shape_sharp"), solution.s_sharp.data())?;
    write_matrix(&dir.join("C_s"), &solution.c_s)?;
    write_matrix(&dir.join("C_t"), &solution.c_t)?;
    fs::write(dir.join("history"), history_csv(solution))?;
    fs::write(dir.join("report"), report_text(solution, eval, runtime_seconds))?;
    Ok(())
}

/// Parses a `key=value` report back into pairs.
pub fn read_report(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(path, format!("expected key=value, got `{l}`")))
        })
        .collect()
}

/// One ASCII PLY file per frame, named `frame_0000.ply` and so on.
pub fn export_ply(shape: &ShapeMatrix, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let shape = shape.clone().in_original_order();
    let mut written = Vec::with_capacity(shape.frames());
    for f in 0..shape.frames() {
        let path = dir.join(format!("frame_{f:04}.ply"));
        let mut out = BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "ply")?;
        writeln!(out, "format ascii 1.0")?;
        writeln!(out, "element vertex {}", shape.points())?;
        writeln!(out, "property double x")?;
        writeln!(out, "property double y")?;
        writeln!(out, "property double z")?;
        writeln!(out, "end_header")?;
        let slab = shape.frame(f);
        for p in 0..shape.points() {
            writeln!(out, "{:?} {:?} {:?}", slab[(0, p)], slab[(1, p)], slab[(2, p)])?;
        }
        out.flush()?;
        written.push(path);
    }
    Ok(written)
}
