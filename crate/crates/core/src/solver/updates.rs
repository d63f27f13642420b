//! Closed-form block updates of the ADMM iteration.

use nalgebra::{Cholesky, DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::grassmann::KernelMatrix;
use crate::linalg::all_finite;
use crate::model::{sharp_of, RotationStack};
use crate::solver::params::CUpdateForm;
use crate::solver::prox::svt_tall;

/// Shape update: solves `(RᵀR + βI) S = RᵀW + β·T⁻¹(S♯) + T⁻¹(Y₁)` frame by frame.
///
/// `s_sharp` and `y1` are `3P × F`; `w` is `2F × P`. Returns the `3F × P` shape.
pub fn update_shape(
    s_sharp: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    beta: f64,
    w: &DMatrix<f64>,
    r: &RotationStack,
) -> Result<DMatrix<f64>> {
    let frames = r.frames();
    let points = w.ncols();
    if w.nrows() != 2 * frames
        || s_sharp.shape() != (3 * points, frames)
        || y1.shape() != s_sharp.shape()
    {
        return Err(Error::ShapeMismatch(format!(
            "W {}×{}, S♯ {}×{}, Y1 {}×{} for {frames} rotations",
            w.nrows(),
            w.ncols(),
            s_sharp.nrows(),
            s_sharp.ncols(),
            y1.nrows(),
            y1.ncols()
        )));
    }
    assert!(beta > 0.0, "penalty must be positive");
    let mut s = DMatrix::zeros(3 * frames, points);
    for (f, rf) in r.blocks().iter().enumerate() {
        let system: Matrix3<f64> = rf.transpose() * rf + Matrix3::identity() * beta;
        let chol = Cholesky::new(system).expect("RᵀR + βI is SPD for β > 0");
        let proj = rf.transpose() * w.rows(2 * f, 2);
        let sharp_col = s_sharp.column(f);
        let y_col = y1.column(f);
        for p in 0..points {
            let mut rhs = proj.fixed_view::<3, 1>(0, p).into_owned();
            for c in 0..3 {
                rhs[c] += beta * sharp_col[3 * p + c] + y_col[3 * p + c];
            }
            let x = chol.solve(&rhs);
            s.fixed_view_mut::<3, 1>(3 * f, p).copy_from(&x);
        }
    }
    Ok(s)
}

/// Coefficient update for one self-expression block.
///
/// With `Ω' = L Lᵀ` from `kernel`, returns the solution of
/// `(2λΩ' + βI) C = 2λΩ' + βJ − Y` (or its right-inverse counterpart).
pub fn update_c(
    kernel: &KernelMatrix,
    j: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    beta: f64,
    form: CUpdateForm,
) -> Result<DMatrix<f64>> {
    let k = kernel.size();
    if j.shape() != (k, k) || y.shape() != (k, k) {
        return Err(Error::ShapeMismatch(format!(
            "kernel is {k}×{k} but J is {}×{} and Y is {}×{}",
            j.nrows(),
            j.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if !all_finite(j) || !all_finite(y) || !lambda.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidInput("non-finite coefficient update input".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("penalty must be positive, got {beta}")));
    }
    let weighted = kernel.regularized() * (2.0 * lambda);
    let mut system = weighted.clone();
    for i in 0..k {
        system[(i, i)] += beta;
    }
    let rhs = weighted + j * beta - y;
    let chol = Cholesky::new(system)
        .ok_or_else(|| Error::InvalidInput("coefficient system is not positive definite".into()))?;
    Ok(match form {
        CUpdateForm::Left => chol.solve(&rhs),
        CUpdateForm::RightInverse => chol.solve(&rhs.transpose()).transpose(),
    })
}

/// Rearranged-shape update `S♯ ← svt(T(S) − Y₁/β, γ/β)`.
pub fn update_shape_sharp(
    s: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    gamma: f64,
    beta: f64,
) -> Result<DMatrix<f64>> {
    let target = sharp_of(s) - y1 / beta;
    svt_tall(&target, gamma / beta)
}
