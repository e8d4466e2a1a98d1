//! Hessian-vector products by second-order adjoints.
//!
//! For a direction `(Dhat, Ghat)` the incremental forward problem gives the
//! state sensitivity `uhat`, the incremental adjoint gives `phat`, and the
//! Hessian action is assembled from both. All three pieces reuse the step
//! operators of the forward linearization, so the result is the exact
//! Hessian of the discrete objective.

use crate::adjoint::AdjointTrajectory;
use crate::error::{Error, Result};
use crate::field::{GradientPair, ParamPair, ScalarField};
use crate::forward::{jacobian_shift, StateTrajectory};
use crate::linsolve::StepOperator;
use crate::observation::{incremental_source, ObservationSet};
use crate::operators::{pairing_accumulate, DiffusionOperator};
use crate::regularization::{reg_hess_apply, RegOperator};

/// Which Hessian to apply.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HessianOptions {
    /// Drop every term that involves the adjoint `p` (Gauss-Newton Hessian).
    pub gauss_newton: bool,
    #[doc(hidden)]
    pub debug_flip: SignFlip,
}

/// Deliberate sign errors for negative-control experiments.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SignFlip {
    #[default]
    None,
    /// Flip the `2 p G uhat` reaction curvature term of the incremental adjoint.
    ReactionCurvature,
    /// Flip the `p Ghat (1 - 2u)` coupling term of the incremental adjoint.
    ReactionCoupling,
}

/// Everything the Hessian action needs, frozen at a base point. Immutable; Hessian applications may run concurrently.
#[derive(Debug, Clone)]
pub struct HessianContext {
    params: ParamPair,
    traj: StateTrajectory,
    adj: AdjointTrajectory,
    obs: ObservationSet,
    reg_d: RegOperator,
    reg_g: RegOperator,
    options: HessianOptions,
    diffusion: DiffusionOperator,
    /// Step operator shifts `1/dt - G(1 - 2u_k)`, indexed by `k - 1`.
    shifts: Vec<Vec<f64>>,
}

impl HessianContext {
    pub fn new(
        params: ParamPair,
        traj: StateTrajectory,
        adj: AdjointTrajectory,
        obs: ObservationSet,
        reg_d: RegOperator,
        reg_g: RegOperator,
        options: HessianOptions,
    ) -> Result<Self> {
        params.d.check_grid(traj.snapshot(0))?;
        if traj.time_grid() != adj.time_grid() {
            return Err(Error::Inconsistent(
                "state and adjoint use different time grids".into(),
            ));
        }
        obs.check_against(&traj)?;
        let inv_dt = 1.0 / traj.time_grid().dt();
        let shifts = (1..=traj.time_grid().steps())
            .map(|k| jacobian_shift(params.g.values(), traj.snapshot(k).values(), inv_dt))
            .collect();
        let diffusion = DiffusionOperator::new(&params.d);
        Ok(HessianContext {
            params,
            traj,
            adj,
            obs,
            reg_d,
            reg_g,
            options,
            diffusion,
            shifts,
        })
    }

    pub fn params(&self) -> &ParamPair {
        &self.params
    }

    pub fn trajectory(&self) -> &StateTrajectory {
        &self.traj
    }

    pub fn adjoint(&self) -> &AdjointTrajectory {
        &self.adj
    }

    pub fn options(&self) -> HessianOptions {
        self.options
    }

    pub fn with_options(mut self, options: HessianOptions) -> Self {
        self.options = options;
        self
    }

    fn step_solve(&self, k: usize, rhs: &[f64], what: &str) -> Result<Vec<f64>> {
        StepOperator::new(&self.diffusion, self.shifts[k - 1].clone())
            .solve(rhs)
            .map_err(|e| Error::LinearSolve(format!("{what} step {k}: {e}")))
    }
}

/// Tangent of the state trajectory in direction `(dhat, ghat)`:
/// `duhat/dt = div(D grad uhat) + div(Dhat grad u) + Ghat (1-u) u + G (1-2u) uhat`,
/// `uhat(0) = 0`.
pub fn solve_incremental_forward(
    ctx: &HessianContext,
    dhat: &ScalarField,
    ghat: &ScalarField,
) -> Result<StateTrajectory> {
    dhat.check_grid(&ctx.params.d)?;
    ghat.check_grid(&ctx.params.d)?;
    let tg = *ctx.traj.time_grid();
    let grid = ctx.params.d.grid().clone();
    let inv_dt = 1.0 / tg.dt();
    let dhat_op = DiffusionOperator::new(dhat);
    let gh = ghat.values();

    let mut snaps = Vec::with_capacity(tg.steps() + 1);
    snaps.push(ScalarField::zeros(grid.clone()));
    for k in 1..=tg.steps() {
        let u = ctx.traj.snapshot(k).values();
        let mut rhs = vec![0.0; u.len()];
        dhat_op.apply_into(u, &mut rhs);
        let prev = snaps[k - 1].values();
        for i in 0..u.len() {
            rhs[i] += prev[i] * inv_dt + gh[i] * (1.0 - u[i]) * u[i];
        }
        let x = ctx.step_solve(k, &rhs, "incremental forward")?;
        snaps.push(ScalarField::from_vec_unchecked(grid.clone(), x));
    }
    StateTrajectory::new(tg, snaps)
}

/// Second-order adjoint: backward march with the transposed step operators,
/// driven by the linearized observation source, `div(Dhat grad p)`,
/// `Ghat (1 - 2u) p` and the reaction curvature `-2 G p uhat`.
pub fn solve_incremental_adjoint(
    ctx: &HessianContext,
    dhat: &ScalarField,
    ghat: &ScalarField,
    uhat: &StateTrajectory,
) -> Result<AdjointTrajectory> {
    dhat.check_grid(&ctx.params.d)?;
    ghat.check_grid(&ctx.params.d)?;
    let tg = *ctx.traj.time_grid();
    if uhat.time_grid() != &tg {
        return Err(Error::Inconsistent(
            "incremental state uses a different time grid".into(),
        ));
    }
    let grid = ctx.params.d.grid().clone();
    let n = grid.num_active();
    let inv_dt = 1.0 / tg.dt();
    let with_p = !ctx.options.gauss_newton;
    let curvature_sign = if ctx.options.debug_flip == SignFlip::ReactionCurvature {
        -1.0
    } else {
        1.0
    };
    let coupling_sign = if ctx.options.debug_flip == SignFlip::ReactionCoupling {
        -1.0
    } else {
        1.0
    };
    let dhat_op = DiffusionOperator::new(dhat);
    let g = ctx.params.g.values();
    let gh = ghat.values();

    let mut snaps = vec![ScalarField::zeros(grid.clone()); tg.steps() + 1];
    for k in (1..=tg.steps()).rev() {
        let u = ctx.traj.snapshot(k).values();
        let uh = uhat.snapshot(k).values();
        let mut rhs: Vec<f64> = snaps[k].values().iter().map(|v| v * inv_dt).collect();
        if let Some(src) = incremental_source(&ctx.obs, k, uh) {
            for i in 0..n {
                rhs[i] -= src[i] * inv_dt;
            }
        }
        if with_p {
            let p = ctx.adj.snapshot(k - 1).values();
            dhat_op.accumulate(1.0, p, &mut rhs);
            for i in 0..n {
                rhs[i] += coupling_sign * gh[i] * (1.0 - 2.0 * u[i]) * p[i]
                    - curvature_sign * 2.0 * g[i] * p[i] * uh[i];
            }
        }
        let x = ctx.step_solve(k, &rhs, "incremental adjoint")?;
        snaps[k - 1] = ScalarField::from_vec_unchecked(grid.clone(), x);
    }
    Ok(AdjointTrajectory::from_parts(tg, snaps))
}

/// Hessian action `H (dhat, ghat)`.
pub fn apply_hessian(
    ctx: &HessianContext,
    dhat: &ScalarField,
    ghat: &ScalarField,
) -> Result<GradientPair> {
    let uhat = solve_incremental_forward(ctx, dhat, ghat)?;
    let phat = solve_incremental_adjoint(ctx, dhat, ghat, &uhat)?;
    assemble_hessian_action(ctx, dhat, ghat, &uhat, &phat)
}

fn assemble_hessian_action(
    ctx: &HessianContext,
    dhat: &ScalarField,
    ghat: &ScalarField,
    uhat: &StateTrajectory,
    phat: &AdjointTrajectory,
) -> Result<GradientPair> {
    let grid = ctx.params.d.grid().clone();
    let n = grid.num_active();
    let dt = ctx.traj.time_grid().dt();
    let with_p = !ctx.options.gauss_newton;

    let mut hd = reg_hess_apply(dhat, &ctx.reg_d)?;
    let mut hg = reg_hess_apply(ghat, &ctx.reg_g)?;
    let (hdv, hgv) = (hd.values_mut(), hg.values_mut());
    for k in 1..=ctx.traj.time_grid().steps() {
        let u = ctx.traj.snapshot(k).values();
        let uh = uhat.snapshot(k).values();
        let ph = phat.snapshot(k - 1).values();
        pairing_accumulate(&grid, dt, u, ph, hdv);
        for i in 0..n {
            hgv[i] -= dt * ph[i] * (u[i] - u[i] * u[i]);
        }
        if with_p {
            let p = ctx.adj.snapshot(k - 1).values();
            pairing_accumulate(&grid, dt, uh, p, hdv);
            for i in 0..n {
                hgv[i] -= dt * p[i] * uh[i] * (1.0 - 2.0 * u[i]);
            }
        }
    }
    GradientPair::new(hd, hg)
}

/// Hessian action on a [`GradientPair`]-shaped direction.
pub fn apply_hessian_pair(ctx: &HessianContext, dir: &ParamPair) -> Result<GradientPair> {
    apply_hessian(ctx, &dir.d, &dir.g)
}
