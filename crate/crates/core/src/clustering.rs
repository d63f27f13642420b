//! Group initialisation and refinement of the local subspaces.
//!
//! Spatial groups partition the trajectory columns of the shape matrix and are seeded
//! with k-means++. Temporal groups are contiguous runs of frames. Refinement works at
//! group level: the `K × K` self-expression coefficients are turned into an affinity,
//! groups are spectrally clustered, and groups that land in the same cluster merge.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grassmann::{GrassmannSet, GroupKind};
use crate::linalg::{all_finite, sym_eigen_ascending, ThinSvd};
use crate::model::ShapeMatrix;

/// Lloyd iteration cap used by [`init_spatial`].
pub const KMEANS_MAX_ITERS: usize = 100;

/// Assignment of columns (spatial) or frames (temporal) to groups `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    assignments: Vec<usize>,
    pub kind: GroupKind,
    k: usize,
}

impl Grouping {
    pub fn new(assignments: Vec<usize>, kind: GroupKind) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidInput("empty grouping".into()));
        }
        let k = assignments.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; k];
        for &g in &assignments {
            counts[g] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("group {empty} is empty")));
        }
        if kind == GroupKind::Temporal && !is_contiguous(&assignments) {
            return Err(Error::InvalidInput(
                "temporal groups must be ordered contiguous frame ranges".into(),
            ));
        }
        Ok(Self {
            assignments,
            kind,
            k,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of grouped items (columns or frames).
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Member indices of every group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &g) in self.assignments.iter().enumerate() {
            out[g].push(i);
        }
        out
    }
}

/// True when group ids appear as runs `0, 0, .., 1, 1, .., k-1`.
pub fn is_contiguous(assignments: &[usize]) -> bool {
    let mut expected = 0;
    for (i, &g) in assignments.iter().enumerate() {
        if i == 0 {
            if g != 0 {
                return false;
            }
        } else if g != assignments[i - 1] {
            expected += 1;
            if g != expected {
                return false;
            }
        }
    }
    true
}

/// Renumbers labels in order of first appearance.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Result of a k-means run over the columns of a matrix.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub labels: Vec<usize>,
    /// `dim × k` centroids.
    pub centers: DMatrix<f64>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist_col(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    data.column(i)
        .iter()
        .zip(centers.column(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// k-means++ seeding followed by Lloyd iterations on the columns of `data`.
///
/// Every returned cluster is nonempty: a cluster that empties out takes over the point
/// farthest from its current centroid.
pub fn kmeans_pp<R: Rng>(data: &DMatrix<f64>, k: usize, max_iters: usize, rng: &mut R) -> KMeans {
    let (dim, n) = data.shape();
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n");

    // D² seeding
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            data.column(i)
                .iter()
                .zip(data.column(chosen[0]).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if d2[pick] == 0.0 {
                // fell off the end through rounding
                pick = d2
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, &w)| w > 0.0)
                    .map(|(i, _)| i)
                    .unwrap_or(pick);
            }
            pick
        } else {
            // every point coincides with a centre: take an unused index
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd: f64 = data
                .column(i)
                .iter()
                .zip(data.column(next).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut centers = DMatrix::zeros(dim, k);
    for (c, &i) in chosen.iter().enumerate() {
        centers.set_column(c, &data.column(i));
    }

    let data_sq: Vec<f64> = data.column_iter().map(|c| c.norm_squared()).collect();
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        // ‖x − c‖² = ‖x‖² + ‖c‖² − 2cᵀx, with the cross terms from one product
        let cross = centers.tr_mul(data);
        let center_sq: Vec<f64> = centers.column_iter().map(|c| c.norm_squared()).collect();
        let mut new_labels = vec![0usize; n];
        for i in 0..n {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = (data_sq[i] + center_sq[c] - 2.0 * cross[(c, i)]).max(0.0);
                if d < best.1 {
                    best = (c, d);
                }
            }
            new_labels[i] = best.0;
            dist[i] = best.1;
        }
        fill_empty_clusters(&mut new_labels, &mut dist, k);
        let changed = new_labels != labels;
        labels = new_labels;
        centers = centroids(data, &labels, k);
        if !changed {
            break;
        }
    }
    let inertia = (0..n).map(|i| sq_dist_col(data, i, &centers, labels[i])).sum();
    KMeans {
        labels,
        centers,
        inertia,
        iterations,
    }
}

fn fill_empty_clusters(labels: &mut [usize], dist: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("k <= n guarantees a donor");
        counts[labels[donor]] -= 1;
        labels[donor] = c;
        dist[donor] = 0.0;
        counts[c] = 1;
    }
}

fn centroids(data: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut centers = DMatrix::zeros(data.nrows(), k);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut col = centers.column_mut(l);
        col += data.column(i);
        counts[l] += 1;
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            let mut col = centers.column_mut(c);
            col /= cnt as f64;
        }
    }
    centers
}

/// Spatial groups from k-means++ on the trajectory columns of `s`.
pub fn init_spatial(s: &ShapeMatrix, k_s: usize, seed: u64) -> Result<Grouping> {
    init_spatial_columns(s.data(), k_s, seed)
}

pub(crate) fn init_spatial_columns(data: &DMatrix<f64>, k_s: usize, seed: u64) -> Result<Grouping> {
    let p = data.ncols();
    if k_s == 0 || k_s > p {
        return Err(Error::TooManyGroups {
            groups: k_s,
            items: p,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmeans_pp(data, k_s, KMEANS_MAX_ITERS, &mut rng);
    Grouping::new(canonical_labels(&km.labels), GroupKind::Spatial)
}

/// Contiguous, balanced frame intervals; the first `F mod K` intervals are one longer.
pub fn init_temporal(frames: usize, k_t: usize) -> Result<Grouping> {
    if k_t == 0 || k_t > frames {
        return Err(Error::TooManyGroups {
            groups: k_t,
            items: frames,
        });
    }
    let base = frames / k_t;
    let extra = frames % k_t;
    let mut assignments = Vec::with_capacity(frames);
    for g in 0..k_t {
        let size = base + usize::from(g < extra);
        assignments.extend(std::iter::repeat_n(g, size));
    }
    Grouping::new(assignments, GroupKind::Temporal)
}

/// Nonnegative symmetric affinity between groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub a: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::ShapeMismatch("affinity must be square".into()));
        }
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                let x = a[(i, j)];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidInput(format!("affinity entry ({i},{j}) = {x}")));
                }
                if (x - a[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("affinity is not symmetric".into()));
                }
            }
        }
        Ok(Self { a })
    }
}

/// Affinity `A_ij = |[X Xᵀ]_ij|^σε` with `X = U Σ^½` row-normalised, from `C = U Σ Vᵀ`.
///
/// Returns the affinity and the number of all-zero rows of `X` (left at zero).
pub fn coefficient_affinity(c: &DMatrix<f64>, sigma_eps: f64) -> Result<(AffinityMatrix, usize)> {
    if c.nrows() != c.ncols() || c.is_empty() {
        return Err(Error::ShapeMismatch("coefficient matrix must be square".into()));
    }
    if !all_finite(c) || !sigma_eps.is_finite() {
        return Err(Error::InvalidInput("non-finite coefficients".into()));
    }
    let svd = ThinSvd::new(c);
    let mut x = svd.u.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= svd.s[j].sqrt();
    }
    let mut zero_rows = 0;
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero_rows += 1;
        }
    }
    let k = c.nrows();
    let xx = &x * x.transpose();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = xx[(i, j)].abs().powf(sigma_eps);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok((AffinityMatrix { a }, zero_rows))
}

/// Normalised spectral clustering (symmetric Laplacian, row-normalised embedding,
/// k-means++ on the embedding).
pub fn spectral_cluster(a: &AffinityMatrix, n_clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let n = a.a.nrows();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::TooManyGroups {
            groups: n_clusters,
            items: n,
        });
    }
    let inv_sqrt_deg: Vec<f64> = a
        .a
        .row_iter()
        .map(|r| {
            let d: f64 = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt_deg[i] * a.a[(i, j)] * inv_sqrt_deg[j]
    });
    let (_, vecs) = sym_eigen_ascending(&laplacian);
    // rows of the embedding become the k-means samples (stored as columns)
    let mut embed = vecs.columns(0, n_clusters).transpose();
    for mut col in embed.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmeans_pp(&embed, n_clusters, KMEANS_MAX_ITERS, &mut rng);
    Ok(canonical_labels(&km.labels))
}

/// Outcome of one ξ refinement.
#[derive(Debug, Clone)]
pub struct XiOutcome {
    pub set: GrassmannSet,
    pub grouping: Grouping,
    pub affinity: AffinityMatrix,
    /// Cluster label of each previous group.
    pub group_labels: Vec<usize>,
    /// `K_before − K_after`.
    pub dropped: usize,
    /// Rows of the spectral embedding `X` that were zero and left unnormalised.
    pub zero_rows: usize,
}

/// Knobs for [`xi_refine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XiOptions {
    /// Subspace dimension of the rebuilt Grassmann points.
    pub rank: usize,
    /// Spectral cluster count; `None` keeps the current group count.
    pub clusters: Option<usize>,
    pub seed: u64,
}

/// ξ: regroups the current groups from their coefficient matrix and rebuilds the
/// Grassmann points of the new groups from the columns of `m`.
///
/// Whole groups move: every column (or frame) takes the cluster label of its group.
/// Temporal relabelings are cut back into contiguous frame intervals. Clusters left
/// without members disappear and are counted in [`XiOutcome::dropped`].
pub fn xi_refine(
    c: &DMatrix<f64>,
    m: &DMatrix<f64>,
    sigma_eps: f64,
    current: &Grouping,
    opts: &XiOptions,
) -> Result<XiOutcome> {
    let k = current.k();
    if c.nrows() != k || c.ncols() != k {
        return Err(Error::ShapeMismatch(format!(
            "coefficients are {}×{} for {k} groups",
            c.nrows(),
            c.ncols()
        )));
    }
    if current.len() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "grouping covers {} columns, matrix has {}",
            current.len(),
            m.ncols()
        )));
    }
    let (affinity, zero_rows) = coefficient_affinity(c, sigma_eps)?;
    let group_labels = spectral_cluster(&affinity, opts.clusters.unwrap_or(k), opts.seed)?;
    let per_item: Vec<usize> = current
        .assignments()
        .iter()
        .map(|&g| group_labels[g])
        .collect();
    let assignments = match current.kind {
        GroupKind::Spatial => canonical_labels(&per_item),
        GroupKind::Temporal => {
            let mut runs = Vec::with_capacity(per_item.len());
            let mut id = 0;
            for (i, &l) in per_item.iter().enumerate() {
                if i > 0 && l != per_item[i - 1] {
                    id += 1;
                }
                runs.push(id);
            }
            runs
        }
    };
    let grouping = Grouping::new(assignments, current.kind)?;
    let set = GrassmannSet::from_grouping(m, &grouping, opts.rank)?;
    Ok(XiOutcome {
        dropped: k.saturating_sub(grouping.k()),
        set,
        grouping,
        affinity,
        group_labels,
        zero_rows,
    })
}

/// ζ: rebuilds every group from its top-`n_top` SVD factors and writes the columns
/// back to their original positions.
pub fn zeta_reconstruct(set: &GrassmannSet, n_top: usize) -> Result<DMatrix<f64>> {
    if n_top == 0 {
        return Err(Error::InvalidInput("ζ needs at least one singular value".into()));
    }
    let cols = set.source_cols();
    let mut out = DMatrix::zeros(set.ambient_dim, cols);
    let mut filled = vec![false; cols];
    for pt in &set.points {
        if pt.ambient_dim() != set.ambient_dim {
            return Err(Error::ShapeMismatch("point ambient dimension differs from set".into()));
        }
        let block = pt.reconstruct(n_top);
        for (j, &col) in pt.member_cols.iter().enumerate() {
            if col >= cols || filled[col] {
                return Err(Error::InvalidInput(format!(
                    "member column {col} is out of range or claimed twice"
                )));
            }
            filled[col] = true;
            out.set_column(col, &block.column(j));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::GrassmannPoint;

    #[test]
    fn temporal_split_examples() {
        let g = init_temporal(10, 2).unwrap();
        assert_eq!(g.assignments(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let g = init_temporal(7, 3).unwrap();
        assert_eq!(g.members().iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2]);
        let g = init_temporal(5, 5).unwrap();
        assert_eq!(g.assignments(), &[0, 1, 2, 3, 4]);
        assert!(matches!(init_temporal(3, 4), Err(Error::TooManyGroups { .. })));
    }

    #[test]
    fn identical_columns_single_group() {
        let s = ShapeMatrix::new(DMatrix::from_fn(6, 8, |i, _| i as f64)).unwrap();
        let g = init_spatial(&s, 1, 3).unwrap();
        assert_eq!(g.k(), 1);
        assert!(g.assignments().iter().all(|&a| a == 0));
    }

    #[test]
    fn one_group_per_column() {
        let s = ShapeMatrix::new(DMatrix::from_fn(3, 5, |i, j| (i * 5 + j * j) as f64)).unwrap();
        let g = init_spatial(&s, 5, 11).unwrap();
        let mut sorted = g.assignments().to_vec();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let km = kmeans_pp(s.data(), 5, KMEANS_MAX_ITERS, &mut rng);
        assert!(km.inertia.abs() < 1e-20);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let data = DMatrix::from_element(2, 4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let km = kmeans_pp(&data, 4, 10, &mut rng);
        let mut sorted = km.labels.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn too_many_spatial_groups() {
        let s = ShapeMatrix::zeros(2, 3);
        assert!(matches!(init_spatial(&s, 4, 0), Err(Error::TooManyGroups { .. })));
    }

    #[test]
    fn grouping_validation() {
        assert!(Grouping::new(vec![0, 2], GroupKind::Spatial).is_err());
        assert!(Grouping::new(vec![0, 1, 0], GroupKind::Temporal).is_err());
        assert!(Grouping::new(vec![1, 0], GroupKind::Temporal).is_err());
        assert!(Grouping::new(vec![0, 1, 0], GroupKind::Spatial).is_ok());
    }

    #[test]
    fn power_one_affinity_is_abs_gram() {
        let c = DMatrix::from_row_slice(3, 3, &[0.5, -0.2, 0.1, 0.3, 0.9, -0.4, 0.0, 0.2, 0.7]);
        let (aff, zero) = coefficient_affinity(&c, 1.0).unwrap();
        assert_eq!(zero, 0);
        let svd = ThinSvd::new(&c);
        let mut x = svd.u.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= svd.s[j].sqrt();
        }
        for mut row in x.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        let expect = (&x * x.transpose()).abs();
        assert!((aff.a - expect).abs().max() < 1e-12);
    }

    #[test]
    fn zero_coefficients_leave_zero_rows() {
        let (aff, zero) = coefficient_affinity(&DMatrix::zeros(3, 3), 2.0).unwrap();
        assert_eq!(zero, 3);
        assert_eq!(aff.a, DMatrix::zeros(3, 3));
    }

    #[test]
    fn non_finite_coefficients() {
        let mut c = DMatrix::identity(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(matches!(coefficient_affinity(&c, 2.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn xi_identity_keeps_temporal_grouping() {
        let m = DMatrix::from_fn(9, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64);
        let g = init_temporal(6, 3).unwrap();
        for sigma in [1.0, 2.0, 4.0] {
            let opts = XiOptions {
                rank: 2,
                clusters: None,
                seed: 5,
            };
            let out = xi_refine(&DMatrix::identity(3, 3), &m, sigma, &g, &opts).unwrap();
            assert_eq!(out.grouping, g);
            assert_eq!(out.dropped, 0);
        }
    }

    #[test]
    fn xi_merges_temporal_groups_into_intervals() {
        // groups 0,1 identical, 2,3 identical: two clusters of whole groups
        let c = DMatrix::from_row_slice(
            4,
            4,
            &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5],
        );
        let m = DMatrix::from_fn(6, 8, |i, j| (i + 1) as f64 * (j as f64 + 1.0).sqrt());
        let g = init_temporal(8, 4).unwrap();
        let opts = XiOptions {
            rank: 1,
            clusters: Some(2),
            seed: 1,
        };
        let out = xi_refine(&c, &m, 2.0, &g, &opts).unwrap();
        assert_eq!(out.grouping.assignments(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(out.dropped, 2);
        assert!(is_contiguous(out.grouping.assignments()));
    }

    #[test]
    fn zeta_full_rank_roundtrip() {
        let m = DMatrix::from_fn(5, 6, |i, j| ((i * 13 + j * 7) % 11) as f64 - 4.0);
        let g = Grouping::new(vec![1, 0, 1, 0, 0, 1], GroupKind::Spatial).unwrap();
        let set = GrassmannSet::from_grouping(&m, &g, 3).unwrap();
        let back = zeta_reconstruct(&set, 10).unwrap();
        assert!((back - m).norm() < 1e-10);
    }

    #[test]
    fn zeta_rank_one_exact() {
        let u = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = nalgebra::DVector::from_vec(vec![3.0, 1.0, -1.0, 2.0]);
        let m = &u * v.transpose();
        let pt = GrassmannPoint::from_block(&m, 3).unwrap();
        let set = GrassmannSet {
            points: vec![pt],
            ambient_dim: 3,
            source: GroupKind::Spatial,
        };
        assert!((zeta_reconstruct(&set, 1).unwrap() - m).norm() < 1e-12);
    }
}
