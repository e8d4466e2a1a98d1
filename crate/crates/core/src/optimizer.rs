//! Globalized inexact Newton-CG.
//!
//! Each outer iteration costs one forward/adjoint pair for the gradient and
//! one incremental forward/adjoint pair per CG iteration. The Newton system
//! is solved only to an Eisenstat-Walker forcing tolerance, CG stops early on
//! negative curvature, and an Armijo backtracking line search globalizes the
//! step.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldPair, GradientPair, ParamPair};
use crate::hessian::{apply_hessian_pair, HessianContext, HessianOptions};
use crate::problem::{Evaluation, Problem};

/// Optimization variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamMode {
    /// Optimize `(D, G)` directly.
    #[default]
    Direct,
    /// Optimize `(log D, G)`.
    LogDiffusivity,
}

impl ParamMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamMode::Direct => "direct",
            ParamMode::LogDiffusivity => "log",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(ParamMode::Direct),
            "log" => Some(ParamMode::LogDiffusivity),
            _ => None,
        }
    }

    pub fn to_params(&self, x: &FieldPair) -> ParamPair {
        match self {
            ParamMode::Direct => x.clone(),
            ParamMode::LogDiffusivity => FieldPair {
                d: x.d.map(f64::exp),
                g: x.g.clone(),
            },
        }
    }

    pub fn from_params(&self, params: &ParamPair) -> Result<FieldPair> {
        match self {
            ParamMode::Direct => Ok(params.clone()),
            ParamMode::LogDiffusivity => {
                if params.d.min() <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "log mode needs a strictly positive diffusivity".into(),
                    ));
                }
                Ok(FieldPair {
                    d: params.d.map(f64::ln),
                    g: params.g.clone(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonCgConfig {
    pub max_newton_iters: usize,
    pub grad_rtol: f64,
    pub grad_atol: f64,
    pub cg_max_iters: usize,
    pub forcing_exponent: f64,
    pub forcing_cap: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub param_floor_d: f64,
    pub mode: ParamMode,
    pub gauss_newton: bool,
    /// Precondition CG with the inverse regularization Hessian.
    pub precondition: bool,
}

impl Default for NewtonCgConfig {
    fn default() -> Self {
        NewtonCgConfig {
            max_newton_iters: 30,
            grad_rtol: 1e-6,
            grad_atol: 1e-12,
            cg_max_iters: 200,
            forcing_exponent: 0.5,
            forcing_cap: 0.5,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 25,
            param_floor_d: 1e-10,
            mode: ParamMode::Direct,
            gauss_newton: false,
            precondition: false,
        }
    }
}

impl NewtonCgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c", "must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor", "must lie in (0, 1)");
        }
        if !(self.grad_rtol > 0.0) {
            return bad("grad_rtol", "must be > 0");
        }
        if !(self.grad_atol > 0.0) {
            return bad("grad_atol", "must be > 0");
        }
        if !(self.forcing_cap > 0.0 && self.forcing_cap < 1.0) {
            return bad("forcing_cap", "must lie in (0, 1)");
        }
        if !(self.forcing_exponent > 0.0) {
            return bad("forcing_exponent", "must be > 0");
        }
        if self.cg_max_iters == 0 {
            return bad("cg_max_iters", "must be >= 1");
        }
        if !(self.param_floor_d > 0.0) {
            return bad("param_floor_d", "must be > 0");
        }
        Ok(())
    }

    fn hessian_options(&self) -> HessianOptions {
        HessianOptions {
            gauss_newton: self.gauss_newton,
            ..Default::default()
        }
    }
}

/// The objective as a function of the optimization variables.
#[derive(Debug, Clone, Copy)]
pub struct ReducedObjective<'a> {
    pub problem: &'a Problem,
    pub mode: ParamMode,
    pub hessian: HessianOptions,
}

/// Everything the optimizer needs at one point, Hessian context included.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub x: FieldPair,
    pub eval: Evaluation,
    /// Gradient with respect to the optimization variables.
    pub grad: GradientPair,
    /// Gradient with respect to `(D, G)`.
    pub grad_params: GradientPair,
    pub ctx: HessianContext,
}

impl<'a> ReducedObjective<'a> {
    pub fn new(problem: &'a Problem, mode: ParamMode) -> Self {
        ReducedObjective {
            problem,
            mode,
            hessian: HessianOptions::default(),
        }
    }

    pub fn with_hessian(mut self, hessian: HessianOptions) -> Self {
        self.hessian = hessian;
        self
    }

    pub fn evaluate(&self, x: &FieldPair) -> Result<Evaluation> {
        self.problem.evaluate(&self.mode.to_params(x))
    }

    pub fn cost(&self, x: &FieldPair) -> Result<f64> {
        Ok(self.evaluate(x)?.cost.total())
    }

    pub fn linearize_at(&self, x: FieldPair, eval: Evaluation) -> Result<Linearization> {
        let (adj, grad_params) = self.problem.gradient_at(&eval)?;
        let ctx = self.problem.hessian_context(&eval, adj, self.hessian)?;
        let grad = self.chain_rule(&eval.params, &grad_params)?;
        Ok(Linearization {
            x,
            eval,
            grad,
            grad_params,
            ctx,
        })
    }

    pub fn linearize(&self, x: &FieldPair) -> Result<Linearization> {
        let eval = self.evaluate(x)?;
        self.linearize_at(x.clone(), eval)
    }

    pub fn gradient(&self, x: &FieldPair) -> Result<GradientPair> {
        let eval = self.evaluate(x)?;
        let (_, grad_params) = self.problem.gradient_at(&eval)?;
        self.chain_rule(&eval.params, &grad_params)
    }

    /// Map a `(D, G)` gradient to the optimization variables.
    fn chain_rule(&self, params: &ParamPair, grad_params: &GradientPair) -> Result<GradientPair> {
        match self.mode {
            ParamMode::Direct => Ok(grad_params.clone()),
            ParamMode::LogDiffusivity => Ok(FieldPair {
                d: params.d.zip_map(&grad_params.d, |d, g| d * g)?,
                g: grad_params.g.clone(),
            }),
        }
    }

    /// Hessian action in the optimization variables.
    pub fn hessian_apply(&self, lin: &Linearization, v: &FieldPair) -> Result<FieldPair> {
        match self.mode {
            ParamMode::Direct => apply_hessian_pair(&lin.ctx, v),
            ParamMode::LogDiffusivity => {
                let d = &lin.eval.params.d;
                let scaled = FieldPair {
                    d: d.zip_map(&v.d, |a, b| a * b)?,
                    g: v.g.clone(),
                };
                let h = apply_hessian_pair(&lin.ctx, &scaled)?;
                let mut hd = d.zip_map(&h.d, |a, b| a * b)?;
                for ((o, &dv), (&gd, &vd)) in hd
                    .values_mut()
                    .iter_mut()
                    .zip(d.values())
                    .zip(lin.grad_params.d.values().iter().zip(v.d.values()))
                {
                    *o += dv * gd * vd;
                }
                Ok(FieldPair { d: hd, g: h.g })
            }
        }
    }
}

/// Why CG stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgExit {
    Converged,
    NegativeCurvature,
    MaxIterations,
}

impl fmt::Display for CgExit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CgExit::Converged => "converged",
            CgExit::NegativeCurvature => "negative_curvature",
            CgExit::MaxIterations => "max_iters",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub direction: FieldPair,
    pub iterations: usize,
    pub exit: CgExit,
}

/// Truncated CG on `H s = -g` in the joint `(D, G)` inner product.
///
/// Stops when the residual drops below `forcing_tol * ||g||`, on the
/// iteration cap, or on nonpositive curvature, in which case the current
/// iterate is returned (or `-g` when it happens on the first iteration).
pub fn cg_steihaug<H, M>(
    mut hess_apply: H,
    g: &GradientPair,
    forcing_tol: f64,
    max_iters: usize,
    mut precond: Option<M>,
) -> Result<CgOutcome>
where
    H: FnMut(&FieldPair) -> Result<FieldPair>,
    M: FnMut(&FieldPair) -> Result<FieldPair>,
{
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Err(Error::InvalidParameter(
            "CG called with a zero gradient".into(),
        ));
    }
    let mut z = FieldPair::zeros(g.grid().clone());
    let mut r = g.scaled(-1.0);
    let mut y = match precond.as_mut() {
        Some(m) => m(&r)?,
        None => r.clone(),
    };
    let mut d = y.clone();
    let mut ry = r.inner(&y);

    for i in 0..max_iters {
        let hd = hess_apply(&d)?;
        let kappa = d.inner(&hd);
        if kappa <= 0.0 {
            let direction = if i == 0 { g.scaled(-1.0) } else { z };
            return Ok(CgOutcome {
                direction,
                iterations: i + 1,
                exit: CgExit::NegativeCurvature,
            });
        }
        let alpha = ry / kappa;
        z.axpy(alpha, &d);
        r.axpy(-alpha, &hd);
        if r.norm() <= forcing_tol * gnorm {
            return Ok(CgOutcome {
                direction: z,
                iterations: i + 1,
                exit: CgExit::Converged,
            });
        }
        y = match precond.as_mut() {
            Some(m) => m(&r)?,
            None => r.clone(),
        };
        let ry_new = r.inner(&y);
        let beta = ry_new / ry;
        ry = ry_new;
        d.scale(beta);
        d.axpy(1.0, &y);
    }
    Ok(CgOutcome {
        direction: z,
        iterations: max_iters,
        exit: CgExit::MaxIterations,
    })
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub alpha: f64,
    pub x: FieldPair,
    pub cost: f64,
    pub backtracks: usize,
    pub payload: T,
}

/// Backtracking line search for the Armijo condition
/// `J(x + a s) <= J(x) + c a <g, s>` over `a = 1, b, b^2, ...`.
///
/// A trial is rejected outright when its diffusivity falls to or below the
/// configured floor or when `cost_fn` returns `None` (solver failure).
pub fn armijo_linesearch<T, F>(
    x: &FieldPair,
    cost0: f64,
    g: &GradientPair,
    direction: &FieldPair,
    mut cost_fn: F,
    config: &NewtonCgConfig,
) -> Result<LineSearchOutcome<T>>
where
    F: FnMut(&FieldPair) -> Option<(f64, T)>,
{
    let slope = g.inner(direction);
    if !(slope < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "line search needs a descent direction (slope {slope:e})"
        )));
    }
    let mut alpha = 1.0;
    for backtracks in 0..=config.max_backtracks {
        let trial = x.plus(alpha, direction);
        let feasible = config.mode.to_params(&trial).d.min() > config.param_floor_d;
        if feasible {
            if let Some((cost, payload)) = cost_fn(&trial) {
                if cost.is_finite() && cost <= cost0 + config.armijo_c * alpha * slope {
                    return Ok(LineSearchOutcome {
                        alpha,
                        x: trial,
                        cost,
                        backtracks,
                        payload,
                    });
                }
            }
        }
        alpha *= config.backtrack_factor;
    }
    Err(Error::LineSearchFailed {
        backtracks: config.max_backtracks,
    })
}

/// One row of the optimization history: the state at the start of an
/// iteration and the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub misfit: f64,
    pub reg_d: f64,
    pub reg_g: f64,
    pub grad_norm: f64,
    pub cg_iters: usize,
    pub cg_exit: Option<CgExit>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    SolverFailure(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::GradientTolerance => f.write_str("gradient_tolerance"),
            StopReason::MaxIterations => f.write_str("max_iterations"),
            StopReason::LineSearchFailed => f.write_str("line_search_failed"),
            StopReason::SolverFailure(m) => write!(f, "solver_failure: {m}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params_final: ParamPair,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub reason: StopReason,
    /// Outer iterations performed (accepted steps).
    pub iterations: usize,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
}

/// Minimize the regularized misfit starting from `params0`.
pub fn newton_cg(
    problem: &Problem,
    params0: &ParamPair,
    config: &NewtonCgConfig,
) -> Result<CalibrationResult> {
    config.validate()?;
    if params0.d.min() <= config.param_floor_d {
        return Err(Error::InvalidParameter(format!(
            "initial diffusivity must exceed the floor {:e}",
            config.param_floor_d
        )));
    }
    let objective =
        ReducedObjective::new(problem, config.mode).with_hessian(config.hessian_options());
    let mut lin = objective.linearize(&config.mode.from_params(params0)?)?;
    let g0 = lin.grad.norm();
    let target = (config.grad_rtol * g0).max(config.grad_atol);
    let mut history = Vec::new();

    let record = |iter: usize, lin: &Linearization| IterationRecord {
        iter,
        cost: lin.eval.cost.total(),
        misfit: lin.eval.cost.misfit,
        reg_d: lin.eval.cost.reg_d,
        reg_g: lin.eval.cost.reg_g,
        grad_norm: lin.grad.norm(),
        cg_iters: 0,
        cg_exit: None,
        alpha: 0.0,
    };

    let mut iter = 0;
    let reason = loop {
        let gnorm = lin.grad.norm();
        if gnorm <= target {
            history.push(record(iter, &lin));
            break StopReason::GradientTolerance;
        }
        if iter >= config.max_newton_iters {
            history.push(record(iter, &lin));
            break StopReason::MaxIterations;
        }

        let forcing = config
            .forcing_cap
            .min((gnorm / g0).powf(config.forcing_exponent));
        let precond = config.precondition.then(|| {
            let (rd, rg) = (&problem.reg_d, &problem.reg_g);
            move |r: &FieldPair| -> Result<FieldPair> {
                Ok(FieldPair {
                    d: rd.solve(&rd.solve(&r.d)?)?,
                    g: rg.solve(&rg.solve(&r.g)?)?,
                })
            }
        });
        let cg = match cg_steihaug(
            |v: &FieldPair| objective.hessian_apply(&lin, v),
            &lin.grad,
            forcing,
            config.cg_max_iters,
            precond,
        ) {
            Ok(cg) => cg,
            Err(e) => {
                history.push(record(iter, &lin));
                break StopReason::SolverFailure(e.to_string());
            }
        };

        let ls = armijo_linesearch(
            &lin.x,
            lin.eval.cost.total(),
            &lin.grad,
            &cg.direction,
            |trial| objective.evaluate(trial).ok().map(|e| (e.cost.total(), e)),
            config,
        );
        let mut row = record(iter, &lin);
        row.cg_iters = cg.iterations;
        row.cg_exit = Some(cg.exit);
        let ls = match ls {
            Ok(ls) => ls,
            Err(_) => {
                history.push(row);
                break StopReason::LineSearchFailed;
            }
        };
        row.alpha = ls.alpha;
        history.push(row);
        log::info!(
            "newton iter {iter}: cost {:.6e} |g| {:.3e} cg {} ({}) alpha {}",
            lin.eval.cost.total(),
            gnorm,
            cg.iterations,
            cg.exit,
            ls.alpha
        );

        lin = match objective.linearize_at(ls.x, ls.payload) {
            Ok(l) => l,
            Err(e) => break StopReason::SolverFailure(e.to_string()),
        };
        iter += 1;
    };

    Ok(CalibrationResult {
        params_final: lin.eval.params.clone(),
        converged: reason == StopReason::GradientTolerance,
        reason,
        iterations: iter,
        initial_grad_norm: g0,
        final_grad_norm: lin.grad.norm(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::grid::Grid2D;
    use std::sync::Arc;

    // One active cell with unit area: a FieldPair is a plain 2-vector.
    fn cell() -> Arc<Grid2D> {
        Arc::new(Grid2D::square(1, 1, 1.0, 1.0).unwrap())
    }

    fn pair(a: f64, b: f64) -> FieldPair {
        let g = cell();
        FieldPair {
            d: ScalarField::constant(g.clone(), a),
            g: ScalarField::constant(g, b),
        }
    }

    fn xy(p: &FieldPair) -> (f64, f64) {
        (p.d.values()[0], p.g.values()[0])
    }

    fn dense(h: [[f64; 2]; 2]) -> impl FnMut(&FieldPair) -> Result<FieldPair> {
        move |v| {
            let (a, b) = xy(v);
            Ok(pair(h[0][0] * a + h[0][1] * b, h[1][0] * a + h[1][1] * b))
        }
    }

    const NO_PC: Option<fn(&FieldPair) -> Result<FieldPair>> = None;

    #[test]
    fn cg_solves_spd_two_by_two_exactly() {
        let out = cg_steihaug(
            dense([[4.0, 1.0], [1.0, 3.0]]),
            &pair(1.0, 2.0),
            1e-12,
            10,
            NO_PC,
        )
        .unwrap();
        // -H^{-1} g with det 11
        let (a, b) = xy(&out.direction);
        assert!((a - (-1.0 / 11.0)).abs() < 1e-14);
        assert!((b - (-7.0 / 11.0)).abs() < 1e-14);
        assert_eq!(out.exit, CgExit::Converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn cg_negative_curvature_on_first_iteration_returns_steepest_descent() {
        let out = cg_steihaug(
            dense([[1.0, 0.0], [0.0, -1.0]]),
            &pair(1.0, 2.0),
            1e-12,
            10,
            NO_PC,
        )
        .unwrap();
        assert_eq!(out.exit, CgExit::NegativeCurvature);
        assert_eq!(xy(&out.direction), (-1.0, -2.0));
    }

    #[test]
    fn cg_negative_curvature_later_returns_current_iterate() {
        let g = pair(1.0, 0.1);
        let out = cg_steihaug(dense([[1.0, 0.0], [0.0, -1.0]]), &g, 1e-12, 10, NO_PC).unwrap();
        assert_eq!(out.exit, CgExit::NegativeCurvature);
        assert_eq!(out.iterations, 2);
        // first step along -g with alpha = |g|^2 / (g^T H g)
        let alpha = 1.01 / 0.99;
        let (a, b) = xy(&out.direction);
        assert!((a + alpha).abs() < 1e-14 && (b + 0.1 * alpha).abs() < 1e-14);
        assert!(g.inner(&out.direction) < 0.0);
    }

    #[test]
    fn cg_iteration_cap_and_preconditioner() {
        let h = [[10.0, 0.0], [0.0, 1.0]];
        let out = cg_steihaug(dense(h), &pair(1.0, 1.0), 1e-12, 1, NO_PC).unwrap();
        assert_eq!(out.exit, CgExit::MaxIterations);
        // the exact inverse as preconditioner converges in one step
        let pc = |v: &FieldPair| -> Result<FieldPair> {
            let (a, b) = xy(v);
            Ok(pair(a / 10.0, b))
        };
        let out = cg_steihaug(dense(h), &pair(1.0, 1.0), 1e-12, 5, Some(pc)).unwrap();
        assert_eq!(out.iterations, 1);
        let (a, b) = xy(&out.direction);
        assert!((a + 0.1).abs() < 1e-15 && (b + 1.0).abs() < 1e-15);
        assert!(cg_steihaug(dense(h), &pair(0.0, 0.0), 1e-12, 5, NO_PC).is_err());
    }

    // J = |x - (2, 0)|^2 / 2, minimum well above the diffusivity floor
    fn quadratic(x: &FieldPair) -> Option<(f64, ())> {
        let r = x.plus(-1.0, &pair(2.0, 0.0));
        Some((0.5 * r.inner(&r), ()))
    }

    #[test]
    fn armijo_accepts_newton_step() {
        let x = pair(3.0, -2.0);
        let g = pair(1.0, -2.0);
        let out = armijo_linesearch(
            &x,
            2.5,
            &g,
            &g.scaled(-1.0),
            quadratic,
            &NewtonCgConfig::default(),
        )
        .unwrap();
        assert_eq!((out.alpha, out.backtracks, out.cost), (1.0, 0, 0.0));
        assert_eq!(xy(&out.x), (2.0, 0.0));
    }

    #[test]
    fn armijo_backtracks_overlong_step() {
        let x = pair(3.0, -2.0);
        let g = pair(1.0, -2.0);
        let out = armijo_linesearch(
            &x,
            2.5,
            &g,
            &g.scaled(-3.0),
            quadratic,
            &NewtonCgConfig::default(),
        )
        .unwrap();
        assert_eq!(out.alpha, 0.5);
        assert_eq!(out.backtracks, 1);
        assert!((out.cost - 0.125 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn armijo_respects_diffusivity_floor() {
        let x = pair(0.1, 0.0);
        let g = pair(1.0, 0.0);
        let out = armijo_linesearch(
            &x,
            0.0,
            &g,
            &pair(-1.0, 0.0),
            |_| Some((-1.0, ())),
            &NewtonCgConfig::default(),
        )
        .unwrap();
        assert_eq!(out.alpha, 0.0625);
        // log mode has no floor issue for the same step
        let cfg = NewtonCgConfig {
            mode: ParamMode::LogDiffusivity,
            ..Default::default()
        };
        let out =
            armijo_linesearch(&x, 0.0, &g, &pair(-1.0, 0.0), |_| Some((-1.0, ())), &cfg).unwrap();
        assert_eq!(out.alpha, 1.0);
    }

    #[test]
    fn armijo_failures() {
        let x = pair(1.0, 1.0);
        let cfg = NewtonCgConfig::default();
        assert!(matches!(
            armijo_linesearch(&x, 1.0, &x, &x.scaled(-1.0), |_| None::<(f64, ())>, &cfg),
            Err(Error::LineSearchFailed { backtracks: 25 })
        ));
        assert!(armijo_linesearch(&x, 1.0, &x, &x, quadratic, &cfg).is_err());
    }

    #[test]
    fn log_mode_round_trip() {
        let p = pair(2.0, -0.5);
        let x = ParamMode::LogDiffusivity.from_params(&p).unwrap();
        assert!((xy(&x).0 - 2f64.ln()).abs() < 1e-15);
        let back = ParamMode::LogDiffusivity.to_params(&x);
        assert!((xy(&back).0 - 2.0).abs() < 1e-15);
        assert!(ParamMode::LogDiffusivity
            .from_params(&pair(0.0, 1.0))
            .is_err());
        assert_eq!(
            ParamMode::parse(ParamMode::Direct.as_str()),
            Some(ParamMode::Direct)
        );
    }

    #[test]
    fn config_validation() {
        assert!(NewtonCgConfig::default().validate().is_ok());
        let bad = NewtonCgConfig {
            backtrack_factor: 1.0,
            ..Default::default()
        };
        assert!(
            matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "backtrack_factor")
        );
    }
}
