//! ADMM solver for the coupled spatio-temporal reconstruction.
//!
//! One outer iteration, in order:
//!
//! 1. shape `S_s` from the reprojection / coupling normal equations,
//! 2. spatial coefficients `C_s`, spatial regrouping ξ and local low-rank rebuild ζ,
//!    auxiliary `J_s` by SVT,
//! 3. rearranged shape `S♯` by SVT,
//! 4. temporal coefficients `C_t`, temporal ξ and ζ, auxiliary `J_t`,
//! 5. kernel refresh, multiplier updates, penalty schedule `β ← min(ρβ, β_max)`,
//!    convergence test on the largest constraint gap.

mod objective;
mod params;
mod prox;
mod updates;

use nalgebra::DMatrix;

pub use objective::{objective, ObjectiveTerms};
pub use params::{CUpdateForm, Mode, SolverParams, GAMMA_SCALE};
pub use prox::{svt, svt_tall, update_j};
pub use updates::{update_c, update_shape, update_shape_sharp};

use crate::clustering::{init_spatial_columns, init_temporal, xi_refine, zeta_reconstruct, Grouping, XiOptions};
use crate::error::{Error, Result};
use crate::grassmann::{kernel_matrix, GrassmannSet, KernelMatrix};
use crate::linalg::max_abs;
use crate::model::{sharp_of, MeasurementMatrix, RearrangedShape, RotationStack, ShapeMatrix};

/// Diagnostics recorded after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub maxgap: f64,
    /// Penalty after the schedule update.
    pub beta: f64,
    pub k_s: usize,
    pub k_t: usize,
    pub objective: ObjectiveTerms,
}

/// All ADMM variables at one iteration.
///
/// Matrices are stored raw: `s_s` is `3F × P` (columns in the order given by
/// `column_ids`), `s_sharp` and `y1` are `3P × F`, the coefficient blocks are
/// `K_s × K_s` and `K_t × K_t`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub s_s: DMatrix<f64>,
    pub s_sharp: DMatrix<f64>,
    pub c_s: DMatrix<f64>,
    pub c_t: DMatrix<f64>,
    pub j_s: DMatrix<f64>,
    pub j_t: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub y3: DMatrix<f64>,
    pub beta: f64,
    pub iter: usize,
    pub grouping_s: Grouping,
    pub grouping_t: Grouping,
    pub set_s: GrassmannSet,
    pub set_t: GrassmannSet,
    pub kernel_s: KernelMatrix,
    pub kernel_t: KernelMatrix,
    /// Original track id of every column of `s_s` and of the working `W`.
    pub column_ids: Vec<usize>,
    pub history: Vec<IterationRecord>,
}

/// Output of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    /// Reconstructed shape in the caller's units and original column order.
    pub s_s: ShapeMatrix,
    pub s_sharp: RearrangedShape,
    pub c_s: DMatrix<f64>,
    pub c_t: DMatrix<f64>,
    pub grouping_s: Grouping,
    pub grouping_t: Grouping,
    pub iterations_run: usize,
    pub final_maxgap: f64,
    pub final_beta: f64,
    pub converged: bool,
    /// Factor `W` was divided by before solving.
    pub scale: f64,
    pub history: Vec<IterationRecord>,
}

/// Per-frame least squares `S_f = pinv(R_f) W_f`.
pub fn pseudo_inverse_init(w: &DMatrix<f64>, r: &RotationStack) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(3 * r.frames(), w.ncols());
    for (f, rf) in r.blocks().iter().enumerate() {
        let gram = rf * rf.transpose();
        let inv = gram.try_inverse().expect("rotation rows are orthonormal");
        let pinv = rf.transpose() * inv;
        s.rows_mut(3 * f, 3).copy_from(&(pinv * w.rows(2 * f, 2)));
    }
    s
}

fn resize_for(old: &DMatrix<f64>, representatives: &[usize]) -> DMatrix<f64> {
    let k = representatives.len();
    DMatrix::from_fn(k, k, |i, j| old[(representatives[i], representatives[j])])
}

/// Stepwise driver around [`SolverState`].
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    w: DMatrix<f64>,
    r: RotationStack,
    params: SolverParams,
    gamma: f64,
    scale: f64,
    state: SolverState,
    converged: bool,
    maxgap: f64,
}

impl AdmmSolver {
    pub fn new(w: &MeasurementMatrix, r: &RotationStack, params: &SolverParams) -> Result<Self> {
        params.validate()?;
        if w.frames() != r.frames() {
            return Err(Error::ShapeMismatch(format!(
                "{} measurement frames but {} rotations",
                w.frames(),
                r.frames()
            )));
        }
        let frames = w.frames();
        let points = w.points();
        if params.k_s > points {
            return Err(Error::TooManyGroups {
                groups: params.k_s,
                items: points,
            });
        }
        if params.k_t > frames {
            return Err(Error::TooManyGroups {
                groups: params.k_t,
                items: frames,
            });
        }
        let scale = if params.normalize {
            let rms = (w.data().norm_squared() / w.data().len() as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        } else {
            1.0
        };
        let wn = w.data() / scale;

        let s_s = pseudo_inverse_init(&wn, r);
        let s_sharp = sharp_of(&s_s);
        let grouping_t = init_temporal(frames, params.k_t)?;
        let set_t = GrassmannSet::from_grouping(&s_sharp, &grouping_t, params.n_t)?;
        let grouping_s = init_spatial_columns(&s_s, params.k_s, params.seed)?;
        let set_s = GrassmannSet::from_grouping(&s_s, &grouping_s, params.n_s)?;
        let kernel_s = kernel_matrix(&set_s, 0.0)?;
        let kernel_t = kernel_matrix(&set_t, 0.0)?;
        let ks = grouping_s.k();
        let kt = grouping_t.k();

        let state = SolverState {
            y1: DMatrix::zeros(s_sharp.nrows(), s_sharp.ncols()),
            s_s,
            s_sharp,
            c_s: DMatrix::zeros(ks, ks),
            c_t: DMatrix::zeros(kt, kt),
            j_s: DMatrix::zeros(ks, ks),
            j_t: DMatrix::zeros(kt, kt),
            y2: DMatrix::zeros(ks, ks),
            y3: DMatrix::zeros(kt, kt),
            beta: params.beta0,
            iter: 0,
            grouping_s,
            grouping_t,
            set_s,
            set_t,
            kernel_s,
            kernel_t,
            column_ids: w.column_ids().to_vec(),
            history: Vec::new(),
        };
        Ok(Self {
            gamma: params.effective_gamma(frames, points),
            w: wn,
            r: r.clone(),
            params: params.clone(),
            scale,
            state,
            converged: false,
            maxgap: f64::INFINITY,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// Measurements in solver units.
    pub fn working_measurements(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Runs one outer iteration. Returns `true` once the exit test fires.
    pub fn step(&mut self) -> Result<bool> {
        let p = &self.params;
        let [l1, l2, l3, l4] = p.effective_lambdas();
        let st = &mut self.state;
        let beta = st.beta;
        let seed = p.seed.wrapping_add(st.iter as u64 + 1);

        st.s_s = update_shape(&st.s_sharp, &st.y1, beta, &self.w, &self.r)?;

        st.c_s = update_c(&st.kernel_s, &st.j_s, &st.y2, l1, beta, p.c_update)?;
        if p.spatial_active() {
            let out = xi_refine(
                &st.c_s,
                &st.s_s,
                p.sigma_eps,
                &st.grouping_s,
                &XiOptions {
                    rank: p.n_s,
                    clusters: None,
                    seed,
                },
            )?;
            if out.dropped > 0 {
                let reps = representatives(&st.grouping_s, &out.grouping);
                st.c_s = resize_for(&st.c_s, &reps);
                st.j_s = resize_for(&st.j_s, &reps);
                st.y2 = resize_for(&st.y2, &reps);
            }
            st.grouping_s = out.grouping;
            st.set_s = out.set;
            st.s_s = zeta_reconstruct(&st.set_s, p.n_s)?;
        }
        st.j_s = update_j(&st.c_s, &st.y2, l3, beta)?;

        st.s_sharp = update_shape_sharp(&st.s_s, &st.y1, self.gamma, beta)?;

        st.c_t = update_c(&st.kernel_t, &st.j_t, &st.y3, l2, beta, p.c_update)?;
        if p.temporal_active() {
            let out = xi_refine(
                &st.c_t,
                &st.s_sharp,
                p.sigma_eps,
                &st.grouping_t,
                &XiOptions {
                    rank: p.n_t,
                    clusters: None,
                    seed,
                },
            )?;
            if out.dropped > 0 {
                let reps = representatives(&st.grouping_t, &out.grouping);
                st.c_t = resize_for(&st.c_t, &reps);
                st.j_t = resize_for(&st.j_t, &reps);
                st.y3 = resize_for(&st.y3, &reps);
            }
            st.grouping_t = out.grouping;
            st.set_t = out.set;
            st.s_sharp = zeta_reconstruct(&st.set_t, p.n_t)?;
        }
        st.j_t = update_j(&st.c_t, &st.y3, l4, beta)?;

        st.kernel_s = kernel_matrix(&st.set_s, 0.0)?;
        st.kernel_t = kernel_matrix(&st.set_t, 0.0)?;

        // ζ writes columns back in place, so W and S keep their column order here.

        let gap = &st.s_sharp - sharp_of(&st.s_s);
        let gap_s = &st.c_s - &st.j_s;
        let gap_t = &st.c_t - &st.j_t;
        st.y1 += &gap * beta;
        st.y2 += &gap_s * beta;
        st.y3 += &gap_t * beta;

        let proposed = p.rho * beta;
        let saturated = proposed > p.beta_max;
        st.beta = proposed.min(p.beta_max);
        let maxgap = max_abs(&gap).max(max_abs(&gap_s)).max(max_abs(&gap_t));
        st.iter += 1;

        let terms = objective(st, &self.w, &self.r, p);
        st.history.push(IterationRecord {
            iter: st.iter,
            maxgap,
            beta: st.beta,
            k_s: st.grouping_s.k(),
            k_t: st.grouping_t.k(),
            objective: terms,
        });
        self.maxgap = maxgap;
        self.converged = maxgap < p.eps || saturated;
        Ok(self.converged)
    }

    /// Iterates until convergence or `max_iters`.
    pub fn run(&mut self) -> Result<()> {
        while self.state.iter < self.params.max_iters {
            if self.step()? {
                break;
            }
        }
        Ok(())
    }

    pub fn into_solution(self) -> Solution {
        let st = self.state;
        let s_scaled = &st.s_s * self.scale;
        let shape = ShapeMatrix::with_column_ids(s_scaled, st.column_ids.clone())
            .expect("solver keeps the shape finite")
            .in_original_order();
        let mut sharp = DMatrix::zeros(st.s_sharp.nrows(), st.s_sharp.ncols());
        for (j, &id) in st.column_ids.iter().enumerate() {
            sharp
                .rows_mut(3 * id, 3)
                .copy_from(&(st.s_sharp.rows(3 * j, 3) * self.scale));
        }
        let s_sharp =
            RearrangedShape::new(sharp).expect("solver keeps the rearranged shape finite");
        Solution {
            s_s: shape,
            s_sharp,
            c_s: st.c_s,
            c_t: st.c_t,
            grouping_s: st.grouping_s,
            grouping_t: st.grouping_t,
            iterations_run: st.iter,
            final_maxgap: self.maxgap,
            final_beta: st.beta,
            converged: self.converged,
            scale: self.scale,
            history: st.history,
        }
    }
}

/// For each new group, the index of the old group its first member came from.
fn representatives(old: &Grouping, new: &Grouping) -> Vec<usize> {
    new.members()
        .iter()
        .map(|m| old.assignments()[m[0]])
        .collect()
}

/// Runs the full ADMM solve from the pseudo-inverse initialisation.
pub fn solve(w: &MeasurementMatrix, r: &RotationStack, params: &SolverParams) -> Result<Solution> {
    let mut solver = AdmmSolver::new(w, r, params)?;
    solver.run()?;
    Ok(solver.into_solution())
}
