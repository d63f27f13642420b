use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, sym_eigen_ascending, ThinSvd};

/// Singular value thresholding: the proximal operator of `tau · ‖·‖_*`.
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !all_finite(m) {
        return Err(Error::InvalidInput("SVT input has non-finite entries".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("SVT threshold must be >= 0, got {tau}")));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = ThinSvd::new(m);
    let keep = svd.s.iter().take_while(|&&s| s > tau).count();
    Ok(svd.recompose_with(keep, |s| s - tau))
}

/// SVT for matrices with many more rows than columns, routed through the small
/// `cols × cols` Gram matrix: `M · V · diag(max(1 − τ/σ, 0)) · Vᵀ`.
///
/// Accurate to roughly `√ε · σ_max` in the discarded directions, which is ample for
/// the ADMM iterates; [`svt`] is the exact reference.
pub fn svt_tall(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !all_finite(m) {
        return Err(Error::InvalidInput("SVT input has non-finite entries".into()));
    }
    if m.nrows() < m.ncols() {
        return Ok(svt_tall(&m.transpose(), tau)?.transpose());
    }
    let gram = m.tr_mul(m);
    let (vals, vecs) = sym_eigen_ascending(&gram);
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let sigma = vals[j].max(0.0).sqrt();
        let factor = if sigma > tau { 1.0 - tau / sigma } else { 0.0 };
        col *= factor;
    }
    Ok(m * (scaled * vecs.transpose()))
}

/// `J ← svt(C + Y/β, λ/β)`.
pub fn update_j(c: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64, beta: f64) -> Result<DMatrix<f64>> {
    if c.shape() != y.shape() {
        return Err(Error::ShapeMismatch("C and its multiplier differ in shape".into()));
    }
    svt(&(c + y / beta), lambda / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinks_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let out = svt(&m, 2.0).unwrap();
        assert!((out - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn zero_threshold_is_identity() {
        let m = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        assert!((svt(&m, 0.0).unwrap() - &m).norm() < 1e-10);
        assert!((svt_tall(&m, 0.0).unwrap() - &m).norm() < 1e-10);
    }

    #[test]
    fn tall_route_matches_exact() {
        let m = DMatrix::from_fn(40, 6, |i, j| ((i * 31 + j * 17) % 13) as f64 / 3.0 - 2.0);
        for tau in [0.5, 2.0, 10.0] {
            let a = svt(&m, tau).unwrap();
            let b = svt_tall(&m, tau).unwrap();
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn update_j_cases() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let y = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.3]);
        let j = update_j(&c, &y, 0.0, 0.5).unwrap();
        assert!((j - (&c + &y / 0.5)).norm() < 1e-12);
        let z = update_j(&c, &(-&c * 0.5), 1.0, 0.5).unwrap();
        assert!(z.norm() < 1e-15);
    }

    #[test]
    fn rejects_nan() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = f64::NAN;
        assert!(matches!(svt(&m, 1.0), Err(Error::InvalidInput(_))));
    }
}
