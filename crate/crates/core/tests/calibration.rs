//! Newton-CG calibration on small inverse-crime problems.

mod common;

use tumorcal::io::write_history_csv;
use tumorcal::{
    newton_cg, CgExit, NewtonCgConfig, ObservationSet, ParamMode, ParamPair, Problem, StopReason,
};

fn perturbed(truth: &ParamPair) -> ParamPair {
    ParamPair::new(truth.d.scaled(2.0), truth.g.scaled(0.5)).unwrap()
}

fn strictly_decreasing(costs: &[f64]) -> bool {
    costs.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn regularization_only_problem_is_solved_by_one_exact_newton_step() {
    let s = common::setup(16, 10, &[], 0.0, false);
    let p = &s.problem;
    let problem = Problem::new(
        p.u0.clone(),
        p.time_grid,
        ObservationSet::empty(0.05).unwrap(),
        p.reg_d.clone(),
        p.reg_g.clone(),
    )
    .unwrap();
    let cfg = NewtonCgConfig {
        forcing_cap: 1e-12,
        cg_max_iters: 500,
        ..Default::default()
    };
    let out = newton_cg(&problem, &s.truth, &cfg).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 1);
    assert_eq!(out.history[0].alpha, 1.0);
    assert!(out.history.last().unwrap().cost < 1e-12 * out.history[0].cost);
    // the minimizer is the prior mean
    let err = out.params_final.d.plus_err(p.reg_d.mean());
    assert!(err < 1e-8, "{err}");
}

trait PlusErr {
    fn plus_err(&self, other: &tumorcal::ScalarField) -> f64;
}

impl PlusErr for tumorcal::ScalarField {
    fn plus_err(&self, other: &tumorcal::ScalarField) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.norm() / other.norm()
    }
}

#[test]
fn zero_iterations_at_the_optimum() {
    let s = common::setup(16, 10, &[5, 10], 0.0, true);
    let out = newton_cg(&s.problem, &s.truth, &NewtonCgConfig::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 0);
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.initial_grad_norm, 0.0);
}

#[test]
fn recovers_truth_from_perturbed_guess() {
    let s = common::setup(16, 20, &[7, 14, 20], 0.0, false);
    let init = perturbed(&s.truth);
    let out = newton_cg(&s.problem, &init, &NewtonCgConfig::default()).unwrap();
    assert!(out.converged, "{}", out.reason);
    assert!(out.final_grad_norm <= 1e-6 * out.initial_grad_norm);
    let costs: Vec<f64> = out.history.iter().map(|h| h.cost).collect();
    assert!(strictly_decreasing(&costs), "{costs:?}");
    assert!(out.params_final.d.plus_err(&s.truth.d) < 0.5 * init.d.plus_err(&s.truth.d));
    assert!(out.params_final.g.plus_err(&s.truth.g) < 0.5 * init.g.plus_err(&s.truth.g));
    // final row carries no step
    let last = out.history.last().unwrap();
    assert_eq!((last.cg_exit, last.alpha), (None, 0.0));
}

#[test]
fn variants_converge_to_the_same_minimizer() {
    let s = common::setup(16, 20, &[7, 14, 20], 0.0, false);
    let init = perturbed(&s.truth);
    // tight tolerance so that stopping error does not mask a different limit
    let tight = NewtonCgConfig {
        grad_rtol: 1e-9,
        max_newton_iters: 60,
        ..Default::default()
    };
    let base = newton_cg(&s.problem, &init, &tight).unwrap();
    assert!(base.converged);
    for cfg in [
        NewtonCgConfig {
            mode: ParamMode::LogDiffusivity,
            ..tight.clone()
        },
        NewtonCgConfig {
            gauss_newton: true,
            ..tight.clone()
        },
        NewtonCgConfig {
            precondition: true,
            ..tight.clone()
        },
    ] {
        let out = newton_cg(&s.problem, &init, &cfg).unwrap();
        assert!(out.converged, "{cfg:?}: {}", out.reason);
        assert!(strictly_decreasing(
            &out.history.iter().map(|h| h.cost).collect::<Vec<_>>()
        ));
        assert!(
            out.params_final.d.plus_err(&base.params_final.d) < 1e-5,
            "{cfg:?}"
        );
        assert!(
            out.params_final.g.plus_err(&base.params_final.g) < 1e-5,
            "{cfg:?}"
        );
    }
}

#[test]
fn iteration_cap_is_reported() {
    let s = common::setup(16, 10, &[5, 10], 0.0, false);
    let cfg = NewtonCgConfig {
        max_newton_iters: 2,
        ..Default::default()
    };
    let out = newton_cg(&s.problem, &perturbed(&s.truth), &cfg).unwrap();
    assert!(!out.converged);
    assert_eq!(out.reason, StopReason::MaxIterations);
    assert_eq!(out.iterations, 2);
    assert_eq!(out.history.len(), 3);
    assert!(out.history[..2].iter().all(|h| h.cg_exit.is_some()));
}

#[test]
fn rejects_nonpositive_initial_diffusivity() {
    let s = common::setup(16, 10, &[5, 10], 0.0, false);
    let mut init = s.truth.clone();
    init.d.values_mut()[0] = 0.0;
    assert!(newton_cg(&s.problem, &init, &NewtonCgConfig::default()).is_err());
}

#[test]
fn history_csv_layout() {
    let s = common::setup(16, 10, &[5, 10], 0.0, false);
    let out = newton_cg(&s.problem, &perturbed(&s.truth), &NewtonCgConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_history_csv(&mut buf, &out.history).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,cost,misfit,regD,regG,grad_norm,cg_iters,cg_exit,alpha"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), out.history.len());
    assert!(rows.iter().all(|r| r.len() == 9));
    assert_eq!(rows.last().unwrap()[7], "none");
    let exits = [
        CgExit::Converged,
        CgExit::NegativeCurvature,
        CgExit::MaxIterations,
    ]
    .map(|e| e.to_string());
    assert!(rows[..rows.len() - 1]
        .iter()
        .all(|r| exits.contains(&r[7].to_string())));
    for (r, h) in rows.iter().zip(&out.history) {
        assert_eq!(r[1].parse::<f64>().unwrap(), h.cost);
    }
}
