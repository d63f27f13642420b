//! Measurement, shape and rotation matrices, and the exact re-layout operators
//! that connect them.
//!
//! Row layout conventions:
//! - [`MeasurementMatrix`]: `2F × P`, rows `2f` and `2f + 1` hold the image `x` and `y`
//!   coordinates of frame `f`.
//! - [`ShapeMatrix`]: `3F × P`, rows `3f..3f + 3` hold the world `x, y, z` of frame `f`.
//! - [`RearrangedShape`]: `3P × F`, column `f` stacks point-major triples
//!   `(x_0, y_0, z_0, x_1, y_1, z_1, ...)` of frame `f`. This ordering is part of the
//!   on-disk `shape_sharp` format.

use nalgebra::{DMatrix, Matrix2, Matrix2x3};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Tolerance on `R_f R_fᵀ = I₂` accepted by [`RotationStack::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-8;

fn identity_ids(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "length {} does not match {} columns",
            perm.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(format!(
                "entry {p} is out of range or repeated"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Stacked 2D tracks, `2F × P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    data: DMatrix<f64>,
    column_ids: Vec<usize>,
}

impl MeasurementMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let ids = identity_ids(data.ncols());
        Self::with_column_ids(data, ids)
    }

    pub fn with_column_ids(data: DMatrix<f64>, column_ids: Vec<usize>) -> Result<Self> {
        if data.nrows() % 2 != 0 || data.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "measurement matrix needs an even, nonzero row count, got {}",
                data.nrows()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidInput("measurement matrix has non-finite entries".into()));
        }
        check_permutation(&column_ids, data.ncols())?;
        Ok(Self { data, column_ids })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn points(&self) -> usize {
        self.data.ncols()
    }

    pub fn column_ids(&self) -> &[usize] {
        &self.column_ids
    }

    /// Same measurements with columns put back into original track order.
    pub fn in_original_order(&self) -> MeasurementMatrix {
        let mut data = DMatrix::zeros(self.data.nrows(), self.data.ncols());
        for (j, &id) in self.column_ids.iter().enumerate() {
            data.set_column(id, &self.data.column(j));
        }
        MeasurementMatrix {
            data,
            column_ids: identity_ids(self.points()),
        }
    }
}

/// Per-frame 3D shapes, `3F × P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix {
    data: DMatrix<f64>,
    column_ids: Vec<usize>,
}

impl ShapeMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let ids = identity_ids(data.ncols());
        Self::with_column_ids(data, ids)
    }

    pub fn with_column_ids(data: DMatrix<f64>, column_ids: Vec<usize>) -> Result<Self> {
        if data.nrows() % 3 != 0 || data.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "shape matrix needs a nonzero multiple of 3 rows, got {}",
                data.nrows()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidInput("shape matrix has non-finite entries".into()));
        }
        check_permutation(&column_ids, data.ncols())?;
        Ok(Self { data, column_ids })
    }

    pub fn zeros(frames: usize, points: usize) -> Self {
        Self {
            data: DMatrix::zeros(3 * frames, points),
            column_ids: identity_ids(points),
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.nrows() / 3
    }

    pub fn points(&self) -> usize {
        self.data.ncols()
    }

    pub fn column_ids(&self) -> &[usize] {
        &self.column_ids
    }

    /// The `3 × P` slab of frame `f`.
    pub fn frame(&self, f: usize) -> DMatrix<f64> {
        self.data.rows(3 * f, 3).into_owned()
    }

    /// Same shape with columns put back into original track order.
    pub fn in_original_order(&self) -> ShapeMatrix {
        let mut data = DMatrix::zeros(self.data.nrows(), self.data.ncols());
        for (j, &id) in self.column_ids.iter().enumerate() {
            data.set_column(id, &self.data.column(j));
        }
        ShapeMatrix {
            data,
            column_ids: identity_ids(self.points()),
        }
    }
}

/// Rearranged shape, `3P × F`, one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedShape {
    data: DMatrix<f64>,
}

impl RearrangedShape {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() % 3 != 0 || data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "rearranged shape needs 3P × F with P, F > 0, got {} × {}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidInput("rearranged shape has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_raw(data: DMatrix<f64>) -> Self {
        debug_assert!(data.nrows() % 3 == 0);
        Self { data }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn points(&self) -> usize {
        self.data.nrows() / 3
    }
}

/// Per-frame orthographic cameras: `F` blocks of size `2 × 3` with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationStack {
    blocks: Vec<Matrix2x3<f64>>,
}

impl RotationStack {
    pub fn new(blocks: Vec<Matrix2x3<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("rotation stack is empty".into()));
        }
        for (f, b) in blocks.iter().enumerate() {
            if !b.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput(format!("rotation {f} has non-finite entries")));
            }
            let dev = (b * b.transpose() - Matrix2::identity()).abs().max();
            if dev > ROTATION_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "rotation {f} rows are not orthonormal (deviation {dev:.3e})"
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// Axis-aligned cameras `[[1,0,0],[0,1,0]]` for every frame.
    pub fn identity(frames: usize) -> Self {
        Self {
            blocks: vec![Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0); frames],
        }
    }

    pub fn blocks(&self) -> &[Matrix2x3<f64>] {
        &self.blocks
    }

    pub fn frames(&self) -> usize {
        self.blocks.len()
    }

    /// Stacked `2F × 3` matrix (the on-disk layout).
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(2 * self.blocks.len(), 3);
        for (f, b) in self.blocks.iter().enumerate() {
            out.fixed_view_mut::<2, 3>(2 * f, 0).copy_from(b);
        }
        out
    }
}

/// Re-lays a `3F × P` shape into the `3P × F` matrix with one column per frame.
pub fn to_sharp(s: &ShapeMatrix) -> RearrangedShape {
    RearrangedShape::from_raw(sharp_of(s.data()))
}

pub(crate) fn sharp_of(s: &DMatrix<f64>) -> DMatrix<f64> {
    let frames = s.nrows() / 3;
    let points = s.ncols();
    DMatrix::from_fn(3 * points, frames, |row, f| s[(3 * f + row % 3, row / 3)])
}

/// Exact inverse of [`to_sharp`]. Column ids are reset to the identity.
pub fn from_sharp(s_sharp: &RearrangedShape) -> ShapeMatrix {
    let data = unsharp_of(s_sharp.data());
    let points = data.ncols();
    ShapeMatrix {
        data,
        column_ids: identity_ids(points),
    }
}

pub(crate) fn unsharp_of(s: &DMatrix<f64>) -> DMatrix<f64> {
    let frames = s.ncols();
    let points = s.nrows() / 3;
    DMatrix::from_fn(3 * frames, points, |row, p| s[(3 * p + row % 3, row / 3)])
}

/// Applies the same column permutation to `W` and `S`: new column `j` is old column
/// `perm[j]`. Column ids travel with their columns.
pub fn permute_columns(
    w: &MeasurementMatrix,
    s: &ShapeMatrix,
    perm: &[usize],
) -> Result<(MeasurementMatrix, ShapeMatrix)> {
    check_permutation(perm, w.points())?;
    if w.points() != s.points() || w.frames() != s.frames() {
        return Err(Error::ShapeMismatch(format!(
            "W is {}×{} but S is {}×{}",
            w.data.nrows(),
            w.points(),
            s.data.nrows(),
            s.points()
        )));
    }
    if w.column_ids != s.column_ids {
        return Err(Error::ShapeMismatch("W and S column ids disagree".into()));
    }
    let w_data = w.data.select_columns(perm.iter());
    let s_data = s.data.select_columns(perm.iter());
    let ids: Vec<usize> = perm.iter().map(|&p| w.column_ids[p]).collect();
    Ok((
        MeasurementMatrix {
            data: w_data,
            column_ids: ids.clone(),
        },
        ShapeMatrix {
            data: s_data,
            column_ids: ids,
        },
    ))
}

/// Orthographic projection `W = R S` with block-diagonal `R`.
pub fn project(r: &RotationStack, s: &ShapeMatrix) -> Result<MeasurementMatrix> {
    if r.frames() != s.frames() {
        return Err(Error::ShapeMismatch(format!(
            "{} rotations for {} shape frames",
            r.frames(),
            s.frames()
        )));
    }
    Ok(MeasurementMatrix {
        data: project_raw(r, s.data()),
        column_ids: s.column_ids.clone(),
    })
}

pub(crate) fn project_raw(r: &RotationStack, s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * r.frames(), s.ncols());
    for (f, b) in r.blocks().iter().enumerate() {
        let slab = s.rows(3 * f, 3);
        w.rows_mut(2 * f, 2).copy_from(&(b * slab));
    }
    w
}
