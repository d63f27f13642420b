use nalgebra::DMatrix;

use crate::linalg::{inner, nuclear_norm};
use crate::model::{project_raw, sharp_of, RotationStack};
use crate::solver::params::SolverParams;
use crate::solver::SolverState;

/// Every term of the augmented cost, evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// `½‖W − RS‖²`
    pub reprojection: f64,
    /// `β/2 ‖S♯ − T(S)‖²`
    pub coupling_penalty: f64,
    /// `⟨Y₁, S♯ − T(S)⟩`
    pub coupling_multiplier: f64,
    /// `γ‖S♯‖_*`
    pub nuclear_shape: f64,
    /// `λ₁ trace((I − C_s)ᵀ Ω_s (I − C_s))`
    pub kernel_s: f64,
    /// `λ₃‖J_s‖_*`
    pub nuclear_js: f64,
    /// `β/2 ‖C_s − J_s‖²`
    pub penalty_s: f64,
    /// `⟨Y₂, C_s − J_s⟩`
    pub multiplier_s: f64,
    /// `λ₂ trace((I − C_t)ᵀ Ω_t (I − C_t))`
    pub kernel_t: f64,
    /// `λ₄‖J_t‖_*`
    pub nuclear_jt: f64,
    /// `β/2 ‖C_t − J_t‖²`
    pub penalty_t: f64,
    /// `⟨Y₃, C_t − J_t⟩`
    pub multiplier_t: f64,
    pub total: f64,
}

impl ObjectiveTerms {
    pub const NAMES: [&'static str; 13] = [
        "reprojection",
        "coupling_penalty",
        "coupling_multiplier",
        "nuclear_shape",
        "kernel_s",
        "nuclear_js",
        "penalty_s",
        "multiplier_s",
        "kernel_t",
        "nuclear_jt",
        "penalty_t",
        "multiplier_t",
        "total",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.reprojection,
            self.coupling_penalty,
            self.coupling_multiplier,
            self.nuclear_shape,
            self.kernel_s,
            self.nuclear_js,
            self.penalty_s,
            self.multiplier_s,
            self.kernel_t,
            self.nuclear_jt,
            self.penalty_t,
            self.multiplier_t,
            self.total,
        ]
    }
}

/// Evaluates the augmented cost at `state` for measurements `w` and cameras `r`.
///
/// `w` must be in the same units as the state (the solver passes its normalised copy).
pub fn objective(
    state: &SolverState,
    w: &DMatrix<f64>,
    r: &RotationStack,
    params: &SolverParams,
) -> ObjectiveTerms {
    let [l1, l2, l3, l4] = params.effective_lambdas();
    let gamma = params.effective_gamma(r.frames(), w.ncols());
    let beta = state.beta;

    let residual = w - project_raw(r, &state.s_s);
    let gap = &state.s_sharp - sharp_of(&state.s_s);
    let gap_s = &state.c_s - &state.j_s;
    let gap_t = &state.c_t - &state.j_t;

    let mut t = ObjectiveTerms {
        reprojection: 0.5 * residual.norm_squared(),
        coupling_penalty: 0.5 * beta * gap.norm_squared(),
        coupling_multiplier: inner(&state.y1, &gap),
        nuclear_shape: gamma * nuclear_norm(&state.s_sharp),
        kernel_s: l1 * state.kernel_s.self_expression_residual(&state.c_s),
        nuclear_js: l3 * nuclear_norm(&state.j_s),
        penalty_s: 0.5 * beta * gap_s.norm_squared(),
        multiplier_s: inner(&state.y2, &gap_s),
        kernel_t: l2 * state.kernel_t.self_expression_residual(&state.c_t),
        nuclear_jt: l4 * nuclear_norm(&state.j_t),
        penalty_t: 0.5 * beta * gap_t.norm_squared(),
        multiplier_t: inner(&state.y3, &gap_t),
        total: 0.0,
    };
    t.total = t.values()[..12].iter().sum();
    t
}
