//! Per-frame orthographic cameras: loading, cleaning and rigid estimation.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, RowVector3, SymmetricEigen, Vector3};

use crate::bench::io::{decode_matrix, read_matrix};
use crate::error::{Error, Result};
use crate::linalg::{nearest_orthonormal_rows, ThinSvd};
use crate::model::{MeasurementMatrix, RotationStack, ROTATION_TOLERANCE};

/// Corrections above this are reported as warnings.
pub const CORRECTION_WARNING: f64 = 1e-2;

/// Ratio `σ₄ / σ₃` of centred measurements above which a scene is not rigid.
pub const RIGIDITY_RATIO: f64 = 0.01;

/// Rotations read from disk plus what had to be done to them.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRotations {
    pub stack: RotationStack,
    /// Frobenius size of the change applied to each block (0 when untouched).
    pub corrections: Vec<f64>,
    pub warnings: Vec<String>,
}

impl LoadedRotations {
    pub fn max_correction(&self) -> f64 {
        self.corrections.iter().copied().fold(0.0, f64::max)
    }
}

/// Projects every block onto the nearest matrix with orthonormal rows when its rows
/// are off by more than [`ROTATION_TOLERANCE`].
pub fn orthonormalize_blocks(blocks: &[Matrix2x3<f64>]) -> LoadedRotations {
    let mut fixed = Vec::with_capacity(blocks.len());
    let mut corrections = Vec::with_capacity(blocks.len());
    let mut warnings = Vec::new();
    for (f, b) in blocks.iter().enumerate() {
        let off = (b * b.transpose() - nalgebra::Matrix2::identity()).abs().max();
        if off > ROTATION_TOLERANCE {
            let polar = nearest_orthonormal_rows(b);
            let change = (polar - b).norm();
            if change > CORRECTION_WARNING {
                warnings.push(format!("frame {f}: rotation corrected by {change:.3e}"));
            }
            corrections.push(change);
            fixed.push(polar);
        } else {
            corrections.push(0.0);
            fixed.push(*b);
        }
    }
    LoadedRotations {
        stack: RotationStack::new(fixed).expect("polar factors have orthonormal rows"),
        corrections,
        warnings,
    }
}

fn blocks_from_stacked(m: &DMatrix<f64>, path: &Path) -> Result<Vec<Matrix2x3<f64>>> {
    let parse = |msg: String| Error::ParseError {
        path: path.to_path_buf(),
        msg,
    };
    if m.ncols() != 3 || m.nrows() % 2 != 0 || m.nrows() == 0 {
        return Err(parse(format!("expected a 2F×3 stack, got {}×{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(parse("non-finite rotation entry".into()));
    }
    Ok((0..m.nrows() / 2)
        .map(|f| Matrix2x3::from_fn(|i, j| m[(2 * f + i, j)]))
        .collect())
}

/// Reads a stacked `2F × 3` rotation file and orthonormalizes its blocks.
pub fn load_rotations(path: &Path) -> Result<LoadedRotations> {
    let m = read_matrix(path)?;
    Ok(orthonormalize_blocks(&blocks_from_stacked(&m, path)?))
}

/// Same as [`load_rotations`] for an in-memory file image.
pub fn parse_rotations(bytes: &[u8], path: &Path) -> Result<LoadedRotations> {
    let m = decode_matrix(bytes, path)?;
    Ok(orthonormalize_blocks(&blocks_from_stacked(&m, path)?))
}

/// Rigid orthographic factorization.
///
/// Centres `W`, takes its rank-3 factor `M̂`, solves for the symmetric `G = QQᵀ`
/// that makes every `M̂_f G M̂_fᵀ` the identity, orthonormalizes the blocks of
/// `M̂Q` and rotates the result so that frame 0 is `[I₂ 0]`.
pub fn estimate_rigid(w: &MeasurementMatrix) -> Result<RotationStack> {
    let frames = w.frames();
    if frames == 1 {
        return Ok(RotationStack::identity(1));
    }
    let data = w.data();
    let mut centred = data.clone();
    for (i, mut row) in centred.row_iter_mut().enumerate() {
        let mean = data.row(i).mean();
        row.add_scalar_mut(-mean);
    }
    let svd = ThinSvd::new(&centred);
    let s = &svd.s;
    let s3 = s.get(2).copied().unwrap_or(0.0);
    let s4 = s.get(3).copied().unwrap_or(0.0);
    if s3 <= 0.0 {
        return Err(Error::DegenerateShape("measurements have rank below 3".into()));
    }
    if s4 > RIGIDITY_RATIO * s3 {
        return Err(Error::NotRigid { ratio: s4 / s3 });
    }
    let mut motion = svd.u.columns(0, 3).into_owned();
    for j in 0..3 {
        motion.column_mut(j).scale_mut(s[j].sqrt());
    }

    // a ᵀ G b for symmetric G, in terms of its six upper entries
    let coeffs = |a: RowVector3<f64>, b: RowVector3<f64>| {
        [
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[2] * b[0],
            a[1] * b[1],
            a[1] * b[2] + a[2] * b[1],
            a[2] * b[2],
        ]
    };
    let mut lhs = DMatrix::zeros(3 * frames, 6);
    let mut rhs = DVector::zeros(3 * frames);
    for f in 0..frames {
        let a = motion.fixed_view::<1, 3>(2 * f, 0).into_owned();
        let b = motion.fixed_view::<1, 3>(2 * f + 1, 0).into_owned();
        for (row, (x, y, target)) in [(a, a, 1.0), (b, b, 1.0), (a, b, 0.0)].into_iter().enumerate() {
            let c = coeffs(x, y);
            for (k, v) in c.into_iter().enumerate() {
                lhs[(3 * f + row, k)] = v;
            }
            rhs[3 * f + row] = target;
        }
    }
    let g = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::DegenerateShape(format!("metric constraints unsolvable: {e}")))?;
    let gram = Matrix3::new(g[0], g[1], g[2], g[1], g[3], g[4], g[2], g[4], g[5]);
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::DegenerateShape(
            "metric upgrade is not positive definite".into(),
        ));
    }
    let corrective = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt));

    let blocks: Vec<Matrix2x3<f64>> = (0..frames)
        .map(|f| {
            let raw: Matrix2x3<f64> = motion.fixed_view::<2, 3>(2 * f, 0) * corrective;
            nearest_orthonormal_rows(&raw)
        })
        .collect();
    let r1: Vector3<f64> = blocks[0].row(0).transpose();
    let r2: Vector3<f64> = blocks[0].row(1).transpose();
    let first = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r1.cross(&r2).transpose()]);
    let aligned = blocks
        .iter()
        .map(|b| nearest_orthonormal_rows(&(b * first.transpose())))
        .collect();
    RotationStack::new(aligned)
}

/// Best orthogonal `O` (reflections allowed) with `est · O ≈ gt` on stacked `2F × 3`
/// cameras, and the remaining Frobenius error.
pub fn gauge_error(est: &RotationStack, gt: &RotationStack) -> Result<f64> {
    if est.frames() != gt.frames() {
        return Err(Error::ShapeMismatch(format!(
            "{} and {} frames",
            est.frames(),
            gt.frames()
        )));
    }
    let a = est.stacked();
    let b = gt.stacked();
    let cross = a.tr_mul(&b);
    let svd = ThinSvd::new(&cross);
    let o = &svd.u * svd.v.transpose();
    Ok((a * o - b).norm())
}
