//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, Matrix2x3, SymmetricEigen, SVD};

/// Economy SVD `m = u * diag(s) * vᵀ` with singular values sorted descending.
///
/// `u` is `rows × k`, `v` is `cols × k` with `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Self {
                u: DMatrix::zeros(rows, 0),
                s: Vec::new(),
                v: DMatrix::zeros(cols, 0),
            };
        }
        let svd = SVD::new(m.clone(), true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut su = DMatrix::zeros(rows, k);
        let mut sv = DMatrix::zeros(cols, k);
        let mut s = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            su.set_column(dst, &u.column(src));
            sv.set_column(dst, &v_t.row(src).transpose());
            s.push(svd.singular_values[src].max(0.0));
        }
        Self { u: su, s, v: sv }
    }

    /// `u[:, ..m] * diag(scale(s)[..m]) * v[:, ..m]ᵀ`.
    pub fn recompose_with(&self, m: usize, scale: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let m = m.min(self.s.len());
        let mut left = self.u.columns(0, m).into_owned();
        for (j, mut col) in left.column_iter_mut().enumerate() {
            col *= scale(self.s[j]);
        }
        left * self.v.columns(0, m).transpose()
    }
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending.
pub fn sym_eigen_ascending(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
        vals.push(eig.eigenvalues[src]);
    }
    (vals, vecs)
}

/// Nuclear norm from the singular values of the triangular QR factor of the
/// taller orientation.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let tall = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let r = tall.qr().r();
    r.svd(false, false).singular_values.sum()
}

/// Frobenius inner product `<a, b>`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Nearest 2×3 matrix with orthonormal rows (polar factor `u vᵀ`).
pub fn nearest_orthonormal_rows(block: &Matrix2x3<f64>) -> Matrix2x3<f64> {
    let svd = block.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    u * v_t
}
