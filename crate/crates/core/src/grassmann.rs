//! Local subspaces as points on the Grassmann manifold.
//!
//! A group of columns of a shape matrix is summarised by the orthonormal basis of its
//! dominant column space. Points are compared through the projection embedding
//! `X ↦ X Xᵀ`; the Gram matrix of that embedding (the kernel `Ω`) is all the solver
//! needs, so the `n × n` embedded matrices are never formed.

use nalgebra::{Cholesky, DMatrix};

use crate::clustering::Grouping;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, ThinSvd};

/// Which matrix a set of subspaces was sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    /// Column groups of the `3F × P` shape (trajectory space).
    Spatial,
    /// Contiguous frame groups of the `3P × F` rearranged shape (shape space).
    Temporal,
}

/// One local subspace with the SVD factors of the block it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    /// `n × r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// `r` singular values, descending.
    pub sigma: Vec<f64>,
    /// `p × r` right factor.
    pub v: DMatrix<f64>,
    /// Source-matrix columns belonging to this group, in the order of `v`'s rows.
    pub member_cols: Vec<usize>,
}

impl GrassmannPoint {
    /// Rank-`r` thin SVD of an `n × p` block. `member_cols` defaults to `0..p`.
    pub fn from_block(m: &DMatrix<f64>, r: usize) -> Result<Self> {
        let (n, p) = m.shape();
        let max = n.min(p);
        if r == 0 || r > max {
            return Err(Error::RankTooLarge { rank: r, max });
        }
        if !all_finite(m) {
            return Err(Error::InvalidInput("block has non-finite entries".into()));
        }
        let svd = ThinSvd::new(m);
        Ok(Self {
            basis: svd.u.columns(0, r).into_owned(),
            sigma: svd.s[..r].to_vec(),
            v: svd.v.columns(0, r).into_owned(),
            member_cols: (0..p).collect(),
        })
    }

    pub fn with_members(mut self, member_cols: Vec<usize>) -> Self {
        debug_assert_eq!(member_cols.len(), self.v.nrows());
        self.member_cols = member_cols;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `basis[:, ..m] · diag(sigma[..m]) · v[:, ..m]ᵀ` with `m = min(top, r)`.
    pub fn reconstruct(&self, top: usize) -> DMatrix<f64> {
        let m = top.min(self.rank());
        let mut left = self.basis.columns(0, m).into_owned();
        for (j, mut col) in left.column_iter_mut().enumerate() {
            col *= self.sigma[j];
        }
        left * self.v.columns(0, m).transpose()
    }
}

/// Equivalent to [`GrassmannPoint::from_block`].
pub fn point_from_block(m: &DMatrix<f64>, r: usize) -> Result<GrassmannPoint> {
    GrassmannPoint::from_block(m, r)
}

/// An ordered set of subspaces sampled from one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannSet {
    pub points: Vec<GrassmannPoint>,
    pub ambient_dim: usize,
    pub source: GroupKind,
}

impl GrassmannSet {
    /// Builds one point per group of `grouping` from the columns of `m`.
    ///
    /// Each point keeps rank `min(rank, n, group width)`; the kernel compares the
    /// leading [`kernel_rank`](Self::kernel_rank) directions of every point.
    pub fn from_grouping(m: &DMatrix<f64>, grouping: &Grouping, rank: usize) -> Result<Self> {
        if grouping.len() != m.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "grouping covers {} columns, matrix has {}",
                grouping.len(),
                m.ncols()
            )));
        }
        if rank == 0 || m.nrows() == 0 {
            return Err(Error::RankTooLarge { rank, max: 0 });
        }
        let points = grouping
            .members()
            .into_iter()
            .map(|cols| {
                let r = rank.min(m.nrows()).min(cols.len());
                let block = m.select_columns(cols.iter());
                GrassmannPoint::from_block(&block, r).map(|pt| pt.with_members(cols))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            points,
            ambient_dim: m.nrows(),
            source: grouping.kind,
        })
    }

    /// Common subspace dimension used by the kernel: the smallest point rank.
    pub fn kernel_rank(&self) -> usize {
        self.points.iter().map(GrassmannPoint::rank).min().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total number of source columns covered by the set.
    pub fn source_cols(&self) -> usize {
        self.points.iter().map(|p| p.member_cols.len()).sum()
    }
}

/// Projection-metric distance `‖A Aᵀ − B Bᵀ‖_F / √2`.
///
/// Uses `‖AAᵀ − BBᵀ‖² = r_A + r_B − 2‖AᵀB‖²` so nothing `n × n` is formed.
pub fn projection_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() || a.rank() != b.rank() {
        return Err(Error::ShapeMismatch(format!(
            "points live in G({}, {}) and G({}, {})",
            a.ambient_dim(),
            a.rank(),
            b.ambient_dim(),
            b.rank()
        )));
    }
    let cross = kernel_entry(a, b)?;
    let sq = a.rank() as f64 + b.rank() as f64 - 2.0 * cross;
    Ok((0.5 * sq.max(0.0)).sqrt())
}

/// Embedding inner product `⟨A Aᵀ, B Bᵀ⟩ = ‖Aᵀ B‖_F²`.
pub fn kernel_entry(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::ShapeMismatch(format!(
            "ambient dimensions {} and {} differ",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    Ok(a.basis.tr_mul(&b.basis).norm_squared())
}

/// The kernel `Ω` of a set together with a Cholesky factor of `Ω + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub omega: DMatrix<f64>,
    /// Lower-triangular `L` with `L Lᵀ = Ω + jitter·I`.
    pub chol: DMatrix<f64>,
    pub jitter: f64,
}

impl KernelMatrix {
    /// Factorizes a symmetric PSD `omega`, adding a doubling diagonal jitter starting
    /// at `delta` whenever plain Cholesky fails or `omega` is zero.
    ///
    /// `delta <= 0` selects the automatic start `1e-10 · trace(Ω) / K`.
    pub fn from_omega(omega: DMatrix<f64>, delta: f64) -> Result<Self> {
        let k = omega.nrows();
        if k == 0 || omega.ncols() != k {
            return Err(Error::ShapeMismatch("kernel must be square and nonempty".into()));
        }
        if !all_finite(&omega) {
            return Err(Error::InvalidInput("kernel has non-finite entries".into()));
        }
        let is_zero = omega.iter().all(|&x| x == 0.0);
        if !is_zero {
            if let Some(l) = try_cholesky(&omega) {
                return Ok(Self {
                    omega,
                    chol: l,
                    jitter: 0.0,
                });
            }
        }
        let mut jitter = if delta > 0.0 {
            delta
        } else {
            let auto = 1e-10 * omega.trace() / k as f64;
            if auto > 0.0 {
                auto
            } else {
                f64::EPSILON
            }
        };
        for _ in 0..2048 {
            let mut shifted = omega.clone();
            for i in 0..k {
                shifted[(i, i)] += jitter;
            }
            if let Some(l) = try_cholesky(&shifted) {
                return Ok(Self {
                    omega,
                    chol: l,
                    jitter,
                });
            }
            jitter *= 2.0;
        }
        Err(Error::InvalidInput("kernel could not be made positive definite".into()))
    }

    pub fn size(&self) -> usize {
        self.omega.nrows()
    }

    /// `L Lᵀ`, i.e. `Ω + jitter·I`.
    pub fn regularized(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Self-expression residual `trace((I − C)ᵀ Ω (I − C)) = ‖𝒯 − 𝒯C‖_F²`.
    pub fn self_expression_residual(&self, c: &DMatrix<f64>) -> f64 {
        let k = self.size();
        let d = DMatrix::identity(k, k) - c;
        (d.transpose() * &self.omega * &d).trace()
    }
}

fn try_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(m.clone())?.unpack();
    if all_finite(&l) && (0..l.nrows()).all(|i| l[(i, i)] > 0.0) {
        Some(l)
    } else {
        None
    }
}

/// `Ω_ij = ‖Ψ_iᵀ Ψ_j‖_F²` over the leading `kernel_rank` basis vectors of each point,
/// and its (possibly jittered) Cholesky factor.
pub fn kernel_matrix(set: &GrassmannSet, delta: f64) -> Result<KernelMatrix> {
    let k = set.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty Grassmann set".into()));
    }
    if set.points.iter().any(|p| p.ambient_dim() != set.ambient_dim) {
        return Err(Error::ShapeMismatch("point ambient dimension differs from set".into()));
    }
    let r = set.kernel_rank();
    let bases: Vec<_> = set.points.iter().map(|p| p.basis.columns(0, r)).collect();
    let mut omega = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = bases[i].tr_mul(&bases[j]).norm_squared();
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    KernelMatrix::from_omega(omega, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn point(cols: &[&[f64]]) -> GrassmannPoint {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        GrassmannPoint::from_block(&m, cols.len()).unwrap()
    }

    #[test]
    fn rank_one_block() {
        let m = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let p = GrassmannPoint::from_block(&m, 1).unwrap();
        assert!((p.basis[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(p.basis[(1, 0)].abs() < 1e-12 && p.basis[(2, 0)].abs() < 1e-12);
        assert!((p.sigma[0] - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_give_their_norms() {
        let m = DMatrix::from_column_slice(3, 2, &[0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let p = GrassmannPoint::from_block(&m, 2).unwrap();
        assert!((p.sigma[0] - 3.0).abs() < 1e-12);
        assert!((p.sigma[1] - 2.0).abs() < 1e-12);
        // basis spans e2, e3
        assert!(p.basis.row(0).norm() < 1e-12);
    }

    #[test]
    fn rank_too_large_and_non_finite() {
        let m = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(
            GrassmannPoint::from_block(&m, 3),
            Err(Error::RankTooLarge { rank: 3, max: 2 })
        ));
        let mut bad = m.clone();
        bad[(1, 1)] = f64::INFINITY;
        assert!(matches!(GrassmannPoint::from_block(&bad, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn distance_between_axes_is_one() {
        let a = point(&[&[1.0, 0.0]]);
        let b = point(&[&[0.0, 1.0]]);
        assert!((projection_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(projection_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn distance_rejects_rank_mismatch() {
        let a = point(&[&[1.0, 0.0, 0.0]]);
        let b = point(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(projection_distance(&a, &b), Err(Error::ShapeMismatch(_))));
        let c = point(&[&[1.0, 0.0]]);
        assert!(matches!(kernel_entry(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn kernel_self_and_orthogonal() {
        let a = point(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let b = point(&[&[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
        assert!((kernel_entry(&a, &a).unwrap() - 2.0).abs() < 1e-12);
        assert!(kernel_entry(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_point_kernel() {
        let a = point(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let set = GrassmannSet {
            points: vec![a],
            ambient_dim: 3,
            source: GroupKind::Spatial,
        };
        let k = kernel_matrix(&set, 0.0).unwrap();
        assert!((k.omega[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((k.chol[(0, 0)] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(k.jitter, 0.0);
    }

    #[test]
    fn orthogonal_set_gives_scaled_identity() {
        let pts = (0..3)
            .map(|i| {
                let mut e = vec![0.0; 3];
                e[i] = 1.0;
                GrassmannPoint::from_block(&DMatrix::from_column_slice(3, 1, &e), 1).unwrap()
            })
            .collect();
        let set = GrassmannSet {
            points: pts,
            ambient_dim: 3,
            source: GroupKind::Spatial,
        };
        let k = kernel_matrix(&set, 0.0).unwrap();
        assert!((k.omega.clone() - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn zero_kernel_gets_jitter() {
        let k = KernelMatrix::from_omega(DMatrix::zeros(2, 2), 1e-6).unwrap();
        assert_eq!(k.jitter, 1e-6);
        assert!((k.regularized() - DMatrix::identity(2, 2) * 1e-6).norm() < 1e-18);
    }

    #[test]
    fn singular_kernel_gets_doubling_jitter() {
        // two identical subspaces: rank-one kernel
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let omega = &v * v.transpose();
        let k = KernelMatrix::from_omega(omega.clone(), 0.0).unwrap();
        assert!(k.jitter > 0.0);
        let rel = (k.regularized() - (omega + DMatrix::identity(2, 2) * k.jitter)).norm() / 2.0;
        assert!(rel < 1e-8);
    }
}
