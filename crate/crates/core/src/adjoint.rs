//! Adjoint solve and gradient assembly.
//!
//! The adjoint is the exact transpose of the discrete forward march: step `k`
//! of the forward solve is linearized at its converged state `u_k`, and the
//! adjoint marches backward through the transposes of those operators. The
//! adjoint snapshot `p_{k-1}` is the multiplier of the forward residual of
//! step `k` (scaled by `dt`), so `p_Nt = 0` and `p_0` is the multiplier of
//! the first step. With this pairing the assembled gradient is the exact
//! derivative of the discrete objective, up to solver tolerances.

use crate::error::{Error, Result};
use crate::field::{GradientPair, ParamPair, ScalarField};
use crate::forward::{jacobian_shift, solve_forward, StateTrajectory, TimeGrid};
use crate::linsolve::StepOperator;
use crate::observation::{misfit_cost, obs_adjoint_source, ObservationSet};
use crate::operators::{pairing_accumulate, DiffusionOperator};
use crate::regularization::{reg_cost, reg_grad, RegOperator};

/// Snapshots `p_0 ..= p_Nt` of the adjoint, with `p_Nt = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    time_grid: TimeGrid,
    snapshots: Vec<ScalarField>,
}

impl AdjointTrajectory {
    pub(crate) fn from_parts(time_grid: TimeGrid, snapshots: Vec<ScalarField>) -> Self {
        debug_assert_eq!(snapshots.len(), time_grid.steps() + 1);
        AdjointTrajectory {
            time_grid,
            snapshots,
        }
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &ScalarField {
        &self.snapshots[k]
    }

    /// Largest absolute value over all snapshots.
    pub fn max_abs(&self) -> f64 {
        self.snapshots
            .iter()
            .flat_map(|s| s.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The three terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub misfit: f64,
    pub reg_d: f64,
    pub reg_g: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.misfit + self.reg_d + self.reg_g
    }
}

/// Objective terms for a state trajectory already computed at `params`.
pub fn cost_breakdown(
    traj: &StateTrajectory,
    params: &ParamPair,
    obs: &ObservationSet,
    reg_d: &RegOperator,
    reg_g: &RegOperator,
) -> Result<CostBreakdown> {
    Ok(CostBreakdown {
        misfit: misfit_cost(traj, obs)?,
        reg_d: reg_cost(&params.d, reg_d)?,
        reg_g: reg_cost(&params.g, reg_g)?,
    })
}

/// Regularized least-squares objective `J(D, G)`.
pub fn total_cost(
    params: &ParamPair,
    u0: &ScalarField,
    time_grid: &TimeGrid,
    obs: &ObservationSet,
    reg_d: &RegOperator,
    reg_g: &RegOperator,
) -> Result<f64> {
    let traj = solve_forward(params, u0, time_grid)?;
    Ok(cost_breakdown(&traj, params, obs, reg_d, reg_g)?.total())
}

fn check_consistent(traj: &StateTrajectory, params: &ParamPair) -> Result<()> {
    params.d.check_grid(traj.snapshot(0))?;
    params.g.check_grid(traj.snapshot(0))?;
    Ok(())
}

/// Backward march of the adjoint equation
/// `-dp/dt - div(D grad p) - G (1 - 2u) p = -(1/sigma^2) B*B(u - d)`.
pub fn solve_adjoint(
    traj: &StateTrajectory,
    params: &ParamPair,
    obs: &ObservationSet,
) -> Result<AdjointTrajectory> {
    check_consistent(traj, params)?;
    obs.check_against(traj)?;
    let tg = *traj.time_grid();
    let nt = tg.steps();
    let dt = tg.dt();
    let inv_dt = 1.0 / dt;
    let grid = traj.snapshot(0).grid().clone();
    let op = DiffusionOperator::new(&params.d);

    let mut snapshots = vec![ScalarField::zeros(grid.clone()); nt + 1];
    for k in (1..=nt).rev() {
        let u = traj.snapshot(k);
        let source = obs_adjoint_source(traj, obs, k)?;
        let rhs: Vec<f64> = snapshots[k]
            .values()
            .iter()
            .zip(source.values())
            .map(|(p, s)| (p - s) * inv_dt)
            .collect();
        let shift = jacobian_shift(params.g.values(), u.values(), inv_dt);
        let p = StepOperator::new(&op, shift)
            .solve(&rhs)
            .map_err(|e| Error::LinearSolve(format!("adjoint step {k}: {e}")))?;
        snapshots[k - 1] = ScalarField::from_vec_unchecked(grid.clone(), p);
    }
    Ok(AdjointTrajectory::from_parts(tg, snapshots))
}

/// Misfit part of the gradient: `sum_k dt * (grad u_k . grad p_{k-1})` and
/// `-sum_k dt * p_{k-1} (u_k - u_k^2)`.
pub(crate) fn misfit_gradient(
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
) -> (Vec<f64>, Vec<f64>) {
    let grid = traj.snapshot(0).grid();
    let n = grid.num_active();
    let dt = traj.time_grid().dt();
    let mut gd = vec![0.0; n];
    let mut gg = vec![0.0; n];
    for k in 1..=traj.time_grid().steps() {
        let u = traj.snapshot(k).values();
        let p = adj.snapshot(k - 1).values();
        pairing_accumulate(grid, dt, u, p, &mut gd);
        for i in 0..n {
            gg[i] -= dt * p[i] * (u[i] - u[i] * u[i]);
        }
    }
    (gd, gg)
}

/// Full gradient `(g_D, g_G)` from a forward/adjoint pair.
pub fn assemble_gradient(
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    params: &ParamPair,
    reg_d: &RegOperator,
    reg_g: &RegOperator,
) -> Result<GradientPair> {
    check_consistent(traj, params)?;
    if traj.time_grid() != adj.time_grid() {
        return Err(Error::Inconsistent(
            "state and adjoint use different time grids".into(),
        ));
    }
    adj.snapshot(0).check_grid(traj.snapshot(0))?;
    let (md, mg) = misfit_gradient(traj, adj);
    let mut gd = reg_grad(&params.d, reg_d)?;
    let mut gg = reg_grad(&params.g, reg_g)?;
    for (a, b) in gd.values_mut().iter_mut().zip(&md) {
        *a += b;
    }
    for (a, b) in gg.values_mut().iter_mut().zip(&mg) {
        *a += b;
    }
    GradientPair::new(gd, gg)
}
