//! Consistency checks of the adjoint gradient and the second-order-adjoint
//! Hessian action.

mod common;

use tumorcal::hessian::{solve_incremental_forward, SignFlip};
use tumorcal::synthetic::white_noise_pair;
use tumorcal::verification::{default_epsilons, FdCheckReport};
use tumorcal::{
    fd_gradient_check, fd_hessian_check, hessian_symmetry_check, HessianOptions, ParamMode,
    ReducedObjective,
};

/// Ratios between successive decades inside the slope-fit window.
fn window_ratios(rep: &FdCheckReport) -> Vec<f64> {
    let idx: Vec<usize> = (0..rep.epsilons.len())
        .filter(|&i| rep.epsilons[i] >= 1e-5 * 0.999 && rep.epsilons[i] <= 1e-2 * 1.001)
        .collect();
    idx.windows(2)
        .map(|w| rep.residuals[w[0]] / rep.residuals[w[1]])
        .collect()
}

fn assert_first_order(rep: &FdCheckReport) {
    assert!(
        (0.8..=1.2).contains(&rep.slope),
        "slope {} residuals {:?}",
        rep.slope,
        rep.residuals
    );
    let ratios = window_ratios(rep);
    assert_eq!(ratios.len(), 3);
    assert!(
        ratios.iter().all(|r| (7.0..=13.0).contains(r)),
        "ratios {ratios:?}"
    );
}

#[test]
fn gradient_residual_decays_linearly() {
    let s = common::check_setup();
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let rep =
        fd_gradient_check(&obj, &common::base_point(&s.grid), &default_epsilons(), 7).unwrap();
    assert_first_order(&rep);
}

#[test]
fn hessian_residual_decays_linearly() {
    let s = common::check_setup();
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let rep = fd_hessian_check(&obj, &common::base_point(&s.grid), &default_epsilons(), 7).unwrap();
    assert_first_order(&rep);
}

#[test]
fn hessian_is_symmetric() {
    let s = common::check_setup();
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let asym = hessian_symmetry_check(&obj, &common::base_point(&s.grid), 5, 3).unwrap();
    assert!(asym <= 1e-8, "asymmetry {asym:e}");
}

#[test]
fn log_mode_derivatives_are_consistent() {
    let s = common::setup(16, 10, &[5, 10], 0.01, false);
    let obj = ReducedObjective::new(&s.problem, ParamMode::LogDiffusivity);
    let x0 = ParamMode::LogDiffusivity
        .from_params(&common::base_point(&s.grid))
        .unwrap();
    assert_first_order(&fd_gradient_check(&obj, &x0, &default_epsilons(), 1).unwrap());
    assert_first_order(&fd_hessian_check(&obj, &x0, &default_epsilons(), 2).unwrap());
    assert!(hessian_symmetry_check(&obj, &x0, 3, 5).unwrap() <= 1e-8);
}

// Flipping the reaction-curvature term adds a symmetric matrix to the
// Hessian, so symmetry alone cannot detect it; the FD check does.
#[test]
fn curvature_sign_error_is_symmetric_but_fails_fd() {
    let s = common::check_setup();
    let x0 = common::base_point(&s.grid);
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct).with_hessian(HessianOptions {
        gauss_newton: false,
        debug_flip: SignFlip::ReactionCurvature,
    });
    assert!(hessian_symmetry_check(&obj, &x0, 3, 3).unwrap() <= 1e-8);
    let rep = fd_hessian_check(&obj, &x0, &default_epsilons(), 7).unwrap();
    assert!(
        rep.slope < 0.5,
        "sign error went undetected, slope {}",
        rep.slope
    );
}

#[test]
fn coupling_sign_error_breaks_symmetry() {
    let s = common::check_setup();
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct).with_hessian(HessianOptions {
        gauss_newton: false,
        debug_flip: SignFlip::ReactionCoupling,
    });
    assert!(hessian_symmetry_check(&obj, &common::base_point(&s.grid), 3, 3).unwrap() > 1e-3);
}

#[test]
fn gauss_newton_is_symmetric_positive_and_exact_at_zero_residual() {
    let s = common::setup(16, 10, &[5, 10], 0.01, false);
    let x0 = common::base_point(&s.grid);
    let gn = ReducedObjective::new(&s.problem, ParamMode::Direct).with_hessian(HessianOptions {
        gauss_newton: true,
        ..Default::default()
    });
    assert!(hessian_symmetry_check(&gn, &x0, 3, 9).unwrap() <= 1e-8);
    let lin = gn.linearize(&x0).unwrap();
    for seed in 0..3 {
        let v = white_noise_pair(&s.grid, seed);
        assert!(v.inner(&gn.hessian_apply(&lin, &v).unwrap()) > 0.0);
    }

    // noiseless data at the truth: the adjoint vanishes, so both Hessians agree
    let s = common::setup(16, 10, &[5, 10], 0.0, false);
    let full = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let gn = full.with_hessian(HessianOptions {
        gauss_newton: true,
        ..Default::default()
    });
    let lin_full = full.linearize(&s.truth).unwrap();
    let lin_gn = gn.linearize(&s.truth).unwrap();
    let v = white_noise_pair(&s.grid, 4);
    let a = full.hessian_apply(&lin_full, &v).unwrap();
    let b = gn.hessian_apply(&lin_gn, &v).unwrap();
    assert!(a.plus(-1.0, &b).norm() <= 1e-12 * a.norm());
}

#[test]
fn hessian_action_is_linear() {
    let s = common::setup(16, 10, &[5, 10], 0.01, false);
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let lin = obj.linearize(&common::base_point(&s.grid)).unwrap();
    let v = white_noise_pair(&s.grid, 1);
    let w = white_noise_pair(&s.grid, 2);
    let hv = obj.hessian_apply(&lin, &v).unwrap();
    let hw = obj.hessian_apply(&lin, &w).unwrap();
    let mut combo = v.scaled(2.5);
    combo.axpy(-0.75, &w);
    let lhs = obj.hessian_apply(&lin, &combo).unwrap();
    let mut rhs = hv.scaled(2.5);
    rhs.axpy(-0.75, &hw);
    assert!(lhs.plus(-1.0, &rhs).norm() <= 1e-9 * rhs.norm());
}

#[test]
fn incremental_state_is_the_forward_tangent() {
    let s = common::setup(16, 10, &[5, 10], 0.0, false);
    let x0 = common::base_point(&s.grid);
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let lin = obj.linearize(&x0).unwrap();
    let v = white_noise_pair(&s.grid, 3);
    let uhat = solve_incremental_forward(&lin.ctx, &v.d, &v.g).unwrap();
    let base = &lin.eval.traj;
    let err = |eps: f64| {
        let pert = s.problem.forward(&x0.plus(eps, &v)).unwrap();
        (1..=10)
            .map(|k| {
                let mut fd = pert.snapshot(k).clone();
                fd.axpy(-1.0, base.snapshot(k));
                fd.scale(1.0 / eps);
                fd.axpy(-1.0, uhat.snapshot(k));
                fd.norm()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-3), err(1e-4));
    assert!(
        (7.0..=13.0).contains(&(e1 / e2)),
        "tangent errors {e1:e} {e2:e}"
    );
}

#[test]
fn reports_are_reproducible() {
    let s = common::setup(16, 10, &[5, 10], 0.01, false);
    let obj = ReducedObjective::new(&s.problem, ParamMode::Direct);
    let x0 = common::base_point(&s.grid);
    let a = fd_hessian_check(&obj, &x0, &default_epsilons(), 5).unwrap();
    let b = fd_hessian_check(&obj, &x0, &default_epsilons(), 5).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    let c = fd_hessian_check(&obj, &x0, &default_epsilons(), 6).unwrap();
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}
