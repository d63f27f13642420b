use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::ShapeMatrix;

/// Alignment options for [`procrustes_align`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignOptions {
    /// Include a uniform scale in the similarity.
    pub scale: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { scale: true }
    }
}

fn centroid(m: &DMatrix<f64>) -> Vector3<f64> {
    let n = m.ncols() as f64;
    Vector3::new(m.row(0).sum() / n, m.row(1).sum() / n, m.row(2).sum() / n)
}

fn centred(m: &DMatrix<f64>, c: &Vector3<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= c;
    }
    out
}

/// Similarity (rotation, translation, optional uniform scale) of `est` onto `gt`
/// minimising the Frobenius error. Both are `3 × P`.
pub fn procrustes_align(est: &DMatrix<f64>, gt: &DMatrix<f64>, opts: AlignOptions) -> Result<DMatrix<f64>> {
    if est.shape() != gt.shape() || est.nrows() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "procrustes needs two 3×P slabs, got {}×{} and {}×{}",
            est.nrows(),
            est.ncols(),
            gt.nrows(),
            gt.ncols()
        )));
    }
    if est.ncols() == 0 {
        return Err(Error::DegenerateShape("no points".into()));
    }
    let ce = centroid(est);
    let cg = centroid(gt);
    let a = centred(est, &ce);
    let b = centred(gt, &cg);
    let norm_a = a.norm_squared();
    if norm_a == 0.0 {
        return Err(Error::DegenerateShape("all estimated points coincide".into()));
    }
    let cross: Matrix3<f64> = (&b * a.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = u * fix * v_t;
    let s = if opts.scale {
        (svd.singular_values[0] + svd.singular_values[1] + d * svd.singular_values[2]) / norm_a
    } else {
        1.0
    };
    let rot = DMatrix::from_column_slice(3, 3, rot.as_slice());
    let mut out = (rot * a) * s;
    for mut col in out.column_iter_mut() {
        col += cg;
    }
    Ok(out)
}

/// Per-frame normalised errors and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub e3d: f64,
    pub per_frame: Vec<f64>,
}

/// Mean over frames of `‖align(S_est^f) − S_gt^f‖_F / ‖S_gt^f‖_F`.
pub fn e3d(est: &ShapeMatrix, gt: &ShapeMatrix, opts: AlignOptions) -> Result<ErrorSummary> {
    if est.frames() != gt.frames() || est.points() != gt.points() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {}×{}, ground truth {}×{}",
            est.frames(),
            est.points(),
            gt.frames(),
            gt.points()
        )));
    }
    let est = est.in_original_order();
    let gt = gt.in_original_order();
    let mut per_frame = Vec::with_capacity(gt.frames());
    for f in 0..gt.frames() {
        let g = gt.frame(f);
        let denom = g.norm();
        if denom == 0.0 {
            return Err(Error::DegenerateShape(format!("ground-truth frame {f} is zero")));
        }
        let aligned = procrustes_align(&est.frame(f), &g, opts)?;
        per_frame.push((aligned - g).norm() / denom);
    }
    let e3d = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(ErrorSummary { e3d, per_frame })
}
