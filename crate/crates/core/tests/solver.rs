//! ADMM building blocks against dense reference computations.

mod common;

use grassfm::bench::{e3d, synth_generate, AlignOptions, SynthConfig};
use grassfm::grassmann::KernelMatrix;
use grassfm::model::{project, to_sharp, MeasurementMatrix, RotationStack, ShapeMatrix};
use grassfm::solver::{
    objective, solve, svt, svt_tall, update_c, update_j, update_shape, update_shape_sharp,
    AdmmSolver, CUpdateForm, Mode, SolverParams,
};
use nalgebra::DMatrix;

use common::{gaussian, rng, rotations, singular_values};

fn sharp(s: &DMatrix<f64>) -> DMatrix<f64> {
    to_sharp(&ShapeMatrix::new(s.clone()).unwrap()).into_data()
}

fn unsharp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, frames) = x.shape();
    DMatrix::from_fn(3 * frames, rows / 3, |i, p| x[(3 * p + i % 3, i / 3)])
}

/// Shrinkage through the eigen-decomposition of `MᵀM`, independent of the SVD route.
fn shrink_oracle(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let eig = m.tr_mul(m).symmetric_eigen();
    let mut d = DMatrix::zeros(m.ncols(), m.ncols());
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        if s > tau {
            d[(j, j)] = 1.0 - tau / s;
        }
    }
    m * &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn nuclear(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.sum()
}

fn random_spd(k: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng(seed);
    let a = gaussian(k, k, &mut g);
    &a * a.transpose() + DMatrix::identity(k, k) * 0.1
}

#[test]
fn svt_examples() {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
    let out = svt(&d, 2.0).unwrap();
    assert!((out - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).norm() <= 1e-12);
    let mut g = rng(1);
    let m = gaussian(7, 5, &mut g);
    assert!((svt(&m, 0.0).unwrap() - &m).norm() <= 1e-10);
    assert!(svt(&m, 1e6).unwrap().norm() == 0.0);
}

#[test]
fn svt_matches_shrink_oracle() {
    let mut g = rng(2);
    for trial in 0..20 {
        let m = gaussian(6 + trial % 4, 5, &mut g);
        let s = singular_values(&m);
        let tau = 0.5 * (s[1] + s[2]);
        let fast = svt(&m, tau).unwrap();
        let oracle = shrink_oracle(&m, tau);
        assert!((&fast - &oracle).norm() <= 1e-10, "trial {trial}");
        assert!((svt_tall(&m, tau).unwrap() - &oracle).norm() <= 1e-8);
        assert!((svt_tall(&m.transpose(), tau).unwrap() - oracle.transpose()).norm() <= 1e-8);
    }
}

#[test]
fn svt_is_locally_optimal() {
    let mut g = rng(3);
    let m = gaussian(5, 4, &mut g);
    let tau = 0.3;
    let cost = |x: &DMatrix<f64>| tau * nuclear(x) + 0.5 * (x - &m).norm_squared();
    let x = svt(&m, tau).unwrap();
    let best = cost(&x);
    for _ in 0..200 {
        let d = gaussian(5, 4, &mut g) * 1e-3;
        assert!(cost(&(&x + d)) >= best - 1e-9);
    }
}

#[test]
fn update_j_cases() {
    let mut g = rng(4);
    let c = gaussian(4, 4, &mut g);
    let y = gaussian(4, 4, &mut g);
    assert!((update_j(&c, &y, 0.0, 2.0).unwrap() - (&c + &y / 2.0)).norm() <= 1e-12);
    assert_eq!(update_j(&c, &(-&c * 2.0), 1.0, 2.0).unwrap().norm(), 0.0);
    let out = update_j(&c, &y, 0.7, 2.0).unwrap();
    let oracle = shrink_oracle(&(&c + &y / 2.0), 0.35);
    assert!((out - oracle).norm() <= 1e-10);
}

/// Block-diagonal `R` as a dense `2F × 3F` matrix.
fn dense_r(r: &RotationStack) -> DMatrix<f64> {
    let f = r.frames();
    let mut out = DMatrix::zeros(2 * f, 3 * f);
    for (i, b) in r.blocks().iter().enumerate() {
        out.view_mut((2 * i, 3 * i), (2, 3)).copy_from(b);
    }
    out
}

#[test]
fn shape_update_is_stationary() {
    let mut g = rng(5);
    for trial in 0..5 {
        let (f, p) = (3 + trial, 7);
        let r = rotations(f, &mut g);
        let w = gaussian(2 * f, p, &mut g);
        let s_sharp = gaussian(3 * p, f, &mut g);
        let y1 = gaussian(3 * p, f, &mut g);
        let beta = 0.37 * (trial + 1) as f64;
        let s = update_shape(&s_sharp, &y1, beta, &w, &r).unwrap();
        let rd = dense_r(&r);
        let lhs_mat = rd.transpose() * &rd + DMatrix::identity(3 * f, 3 * f) * beta;
        let rhs = rd.transpose() * &w + unsharp(&s_sharp) * beta + unsharp(&y1);
        assert!((&lhs_mat * &s - &rhs).norm() <= 1e-8 * rhs.norm());
        let dense = lhs_mat.lu().solve(&rhs).unwrap();
        assert!((s - dense).norm() <= 1e-8 * rhs.norm());
    }
}

#[test]
fn shape_update_limits() {
    let mut g = rng(6);
    let (f, p) = (4, 9);
    let r = rotations(f, &mut g);
    let s_star = gaussian(3 * f, p, &mut g);
    let w = project(&r, &ShapeMatrix::new(s_star.clone()).unwrap()).unwrap().into_data();
    let zero = DMatrix::zeros(3 * p, f);
    let fixed = update_shape(&sharp(&s_star), &zero, 0.5, &w, &r).unwrap();
    assert!((fixed - &s_star).norm() <= 1e-8);

    let target = gaussian(3 * p, f, &mut g);
    let y1 = gaussian(3 * p, f, &mut g);
    let big = update_shape(&target, &y1, 1e9, &w, &r).unwrap();
    let limit = unsharp(&target);
    assert!((big - &limit).norm() <= 1e-6 * limit.norm());
}

#[test]
fn c_update_closed_forms() {
    let mut g = rng(7);
    let k = 5;
    let kernel = KernelMatrix::from_omega(random_spd(k, 70), 0.0).unwrap();
    let j = gaussian(k, k, &mut g);
    let y = gaussian(k, k, &mut g);
    let c = update_c(&kernel, &j, &y, 0.0, 0.8, CUpdateForm::Left).unwrap();
    assert!((c - (&j - &y / 0.8)).norm() <= 1e-12);

    let eye = KernelMatrix::from_omega(DMatrix::identity(k, k), 0.0).unwrap();
    let zero = DMatrix::zeros(k, k);
    let (lambda, beta) = (1.5, 0.4);
    let c = update_c(&eye, &zero, &zero, lambda, beta, CUpdateForm::Left).unwrap();
    let expect = DMatrix::identity(k, k) * (2.0 * lambda / (2.0 * lambda + beta));
    assert!((c - expect).norm() <= 1e-12);
}

#[test]
fn c_update_residuals() {
    let mut g = rng(8);
    for trial in 0..10 {
        let k = 2 + trial % 6;
        let kernel = KernelMatrix::from_omega(random_spd(k, trial as u64), 0.0).unwrap();
        let j = gaussian(k, k, &mut g);
        let y = gaussian(k, k, &mut g);
        let (lambda, beta) = (0.1 + trial as f64, 1e-3 * 10f64.powi(trial as i32 % 4));
        let omega = kernel.regularized();
        let system = &omega * (2.0 * lambda) + DMatrix::identity(k, k) * beta;
        let rhs = &omega * (2.0 * lambda) + &j * beta - &y;
        let left = update_c(&kernel, &j, &y, lambda, beta, CUpdateForm::Left).unwrap();
        assert!((&system * &left - &rhs).norm() <= 1e-9 * rhs.norm());
        let right = update_c(&kernel, &j, &y, lambda, beta, CUpdateForm::RightInverse).unwrap();
        assert!((&right * &system - &rhs).norm() <= 1e-9 * rhs.norm());
    }
}

#[test]
fn sharp_update_cases() {
    let mut g = rng(9);
    let s = gaussian(12, 5, &mut g);
    let y1 = gaussian(15, 4, &mut g);
    let beta = 2.0;
    let plain = update_shape_sharp(&s, &y1, 0.0, beta).unwrap();
    assert!((plain - (sharp(&s) - &y1 / beta)).norm() <= 1e-10);

    let u = gaussian(15, 1, &mut g);
    let v = gaussian(4, 1, &mut g);
    let rank_one = &u * v.transpose();
    let sigma = u.norm() * v.norm();
    let rank_one_shape = unsharp(&rank_one);
    let half = update_shape_sharp(&rank_one_shape, &DMatrix::zeros(15, 4), sigma / 2.0 * beta, beta).unwrap();
    assert!((half - &rank_one * 0.5).norm() <= 1e-8 * sigma);

    let out = update_shape_sharp(&s, &y1, 0.8, beta).unwrap();
    assert!(nuclear(&out) <= nuclear(&(sharp(&s) - &y1 / beta)) + 1e-12);
}

fn small_problem(seed: u64) -> (MeasurementMatrix, RotationStack, ShapeMatrix) {
    let ds = synth_generate(&SynthConfig {
        frames: 8,
        points: 40,
        subspaces: 2,
        rank: 2,
        deform_scale: 0.5,
        seed,
    })
    .unwrap();
    (ds.w, ds.r.unwrap(), ds.s_gt.unwrap())
}

fn small_params() -> SolverParams {
    SolverParams {
        k_s: 4,
        k_t: 2,
        n_s: 3,
        n_t: 3,
        max_iters: 40,
        ..SolverParams::default()
    }
}

#[test]
fn beta_schedule_and_multiplier_update_are_exact() {
    let (w, r, _) = small_problem(1);
    let params = SolverParams { beta0: 1e5, eps: 0.0, ..small_params() };
    let mut solver = AdmmSolver::new(&w, &r, &params).unwrap();
    let mut beta = params.beta0;
    loop {
        let before = solver.state().clone();
        let done = solver.step().unwrap();
        let st = solver.state();
        let gap = &st.s_sharp - sharp(&st.s_s);
        assert_eq!(st.y1, &before.y1 + &gap * before.beta);
        assert_eq!(st.y2, &before.y2 + (&st.c_s - &st.j_s) * before.beta);
        beta = (params.rho * beta).min(params.beta_max);
        assert_eq!(st.beta, beta);
        assert!(st.beta >= before.beta);
        if done {
            break;
        }
    }
    // exit fired because the schedule ran into the cap
    assert_eq!(solver.state().beta, params.beta_max);
    assert!(solver.converged());
}

#[test]
fn single_iteration_reproduces_least_squares() {
    let (w, r, _) = small_problem(2);
    let params = SolverParams {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        lambda4: 0.0,
        gamma: Some(0.0),
        mode: Mode::Nc,
        max_iters: 1,
        ..small_params()
    };
    let mut solver = AdmmSolver::new(&w, &r, &params).unwrap();
    solver.step().unwrap();
    let wn = solver.working_measurements().clone();
    let resid = |x: &DMatrix<f64>| (&wn - project(&r, &ShapeMatrix::new(x.clone()).unwrap()).unwrap().into_data()).norm();
    let best = resid(&solver.state().s_s);
    let mut g = rng(20);
    for _ in 0..100 {
        let x = &solver.state().s_s + gaussian(24, 40, &mut g) * 0.1;
        assert!(best <= resid(&x) + 1e-8);
        assert!(best <= resid(&gaussian(24, 40, &mut g)) + 1e-8);
    }
}

#[test]
fn objective_double_entry() {
    let (w, r, _) = small_problem(3);
    let params = small_params();
    let mut solver = AdmmSolver::new(&w, &r, &params).unwrap();
    for _ in 0..3 {
        solver.step().unwrap();
    }
    let mut st = solver.state().clone();
    let mut g = rng(30);
    st.y1 = gaussian(st.y1.nrows(), st.y1.ncols(), &mut g);
    st.y2 = gaussian(st.y2.nrows(), st.y2.ncols(), &mut g);
    st.c_t = gaussian(st.c_t.nrows(), st.c_t.ncols(), &mut g);
    let wn = solver.working_measurements().clone();
    let t = objective(&st, &wn, &r, &params);

    let gamma = params.effective_gamma(8, 40);
    let rd = dense_r(&r);
    let dot = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(b).sum();
    let kern = |k: &KernelMatrix, c: &DMatrix<f64>| {
        let d = DMatrix::identity(c.nrows(), c.nrows()) - c;
        (d.transpose() * &k.omega * d).trace()
    };
    let gap = &st.s_sharp - sharp(&st.s_s);
    let gs = &st.c_s - &st.j_s;
    let gt = &st.c_t - &st.j_t;
    let terms = [
        0.5 * (&wn - &rd * &st.s_s).norm_squared(),
        0.5 * st.beta * gap.norm_squared(),
        dot(&st.y1, &gap),
        gamma * nuclear(&st.s_sharp),
        params.lambda1 * kern(&st.kernel_s, &st.c_s),
        params.lambda3 * nuclear(&st.j_s),
        0.5 * st.beta * gs.norm_squared(),
        dot(&st.y2, &gs),
        params.lambda2 * kern(&st.kernel_t, &st.c_t),
        params.lambda4 * nuclear(&st.j_t),
        0.5 * st.beta * gt.norm_squared(),
        dot(&st.y3, &gt),
    ];
    let values = t.values();
    let scale: f64 = terms.iter().map(|v| v.abs()).sum();
    for (i, (a, b)) in values.iter().zip(terms.iter()).enumerate() {
        assert!((a - b).abs() <= 1e-9 * scale, "term {i}: {a} vs {b}");
    }
    let total: f64 = terms.iter().sum();
    assert!((t.total - total).abs() <= 1e-9 * scale);
}

#[test]
fn objective_zero_and_exact_fit() {
    let (w, r, s_gt) = small_problem(4);
    let params = small_params();
    let solver = AdmmSolver::new(&w, &r, &params).unwrap();
    let mut st = solver.state().clone();
    let zero_like = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
    st.s_s = zero_like(&st.s_s);
    st.s_sharp = zero_like(&st.s_sharp);
    st.y1 = zero_like(&st.y1);
    let ks = st.c_s.nrows();
    let kt = st.c_t.nrows();
    st.c_s = DMatrix::identity(ks, ks);
    st.j_s = st.c_s.clone();
    st.c_t = DMatrix::identity(kt, kt);
    st.j_t = st.c_t.clone();
    st.y2 = DMatrix::zeros(ks, ks);
    st.y3 = DMatrix::zeros(kt, kt);
    let no_nuclear = SolverParams { lambda3: 0.0, lambda4: 0.0, ..params.clone() };
    let t = objective(&st, &DMatrix::zeros(16, 40), &r, &no_nuclear);
    assert!(t.values().iter().all(|&v| v.abs() <= 1e-12), "{t:?}");

    st.s_s = s_gt.data().clone();
    st.s_sharp = sharp(&st.s_s);
    let fit = project(&r, &s_gt).unwrap().into_data();
    let t = objective(&st, &fit, &r, &params);
    let expect = params.effective_gamma(8, 40) * nuclear(&st.s_sharp)
        + params.lambda3 * ks as f64
        + params.lambda4 * kt as f64;
    assert!((t.total - expect).abs() <= 1e-9 * expect, "{t:?} vs {expect}");
}

#[test]
fn history_is_finite_and_capped() {
    let (w, r, _) = small_problem(5);
    let sol = solve(&w, &r, &small_params()).unwrap();
    assert!(!sol.history.is_empty());
    assert!(sol.history.iter().all(|h| h.maxgap.is_finite() && h.objective.total.is_finite()));
    assert!(sol.final_beta <= 1e6);
    assert!(sol.history.windows(2).all(|h| h[1].beta >= h[0].beta));
    if sol.converged {
        assert!(sol.final_maxgap < 1e-12 || sol.final_beta >= 1e6);
    }
}

#[test]
fn rigid_scene_single_group() {
    let ds = synth_generate(&SynthConfig {
        frames: 20,
        points: 200,
        subspaces: 1,
        rank: 1,
        deform_scale: 0.0,
        seed: 11,
    })
    .unwrap();
    let params = SolverParams { k_s: 1, k_t: 1, ..SolverParams::default() };
    let sol = solve(&ds.w, ds.r.as_ref().unwrap(), &params).unwrap();
    let err = e3d(&sol.s_s, ds.s_gt.as_ref().unwrap(), AlignOptions::default()).unwrap();
    assert!(err.e3d <= 1e-3, "rigid e3d {}", err.e3d);
}

#[test]
fn solve_rejects_inconsistent_inputs() {
    let (w, r, _) = small_problem(6);
    let too_many = SolverParams { k_s: 41, ..small_params() };
    assert!(solve(&w, &r, &too_many).is_err());
    assert!(solve(&w, &RotationStack::identity(3), &small_params()).is_err());
    let bad = SolverParams { rho: 1.0, ..small_params() };
    assert!(matches!(solve(&w, &r, &bad), Err(grassfm::Error::InvalidConfig(_))));
}
