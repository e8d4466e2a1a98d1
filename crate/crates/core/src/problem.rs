//! A calibration problem: everything except the parameters.

use std::sync::Arc;

use crate::adjoint::{
    assemble_gradient, cost_breakdown, solve_adjoint, AdjointTrajectory, CostBreakdown,
};
use crate::error::Result;
use crate::field::{GradientPair, ParamPair, ScalarField};
use crate::forward::{solve_forward, StateTrajectory, TimeGrid};
use crate::grid::Grid2D;
use crate::hessian::{HessianContext, HessianOptions};
use crate::observation::ObservationSet;
use crate::regularization::RegOperator;

#[derive(Debug, Clone)]
pub struct Problem {
    pub u0: ScalarField,
    pub time_grid: TimeGrid,
    pub obs: ObservationSet,
    pub reg_d: RegOperator,
    pub reg_g: RegOperator,
}

/// Forward state and cost at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub params: ParamPair,
    pub traj: StateTrajectory,
    pub cost: CostBreakdown,
}

impl Problem {
    pub fn new(
        u0: ScalarField,
        time_grid: TimeGrid,
        obs: ObservationSet,
        reg_d: RegOperator,
        reg_g: RegOperator,
    ) -> Result<Self> {
        u0.check_grid(reg_d.mean())?;
        u0.check_grid(reg_g.mean())?;
        for o in obs.observations() {
            o.data.check_grid(&u0)?;
        }
        Ok(Problem {
            u0,
            time_grid,
            obs,
            reg_d,
            reg_g,
        })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        self.u0.grid()
    }

    pub fn forward(&self, params: &ParamPair) -> Result<StateTrajectory> {
        solve_forward(params, &self.u0, &self.time_grid)
    }

    pub fn evaluate(&self, params: &ParamPair) -> Result<Evaluation> {
        let traj = self.forward(params)?;
        let cost = cost_breakdown(&traj, params, &self.obs, &self.reg_d, &self.reg_g)?;
        Ok(Evaluation {
            params: params.clone(),
            traj,
            cost,
        })
    }

    pub fn cost(&self, params: &ParamPair) -> Result<f64> {
        Ok(self.evaluate(params)?.cost.total())
    }

    /// Adjoint and gradient at an evaluated point.
    pub fn gradient_at(&self, eval: &Evaluation) -> Result<(AdjointTrajectory, GradientPair)> {
        let adj = solve_adjoint(&eval.traj, &eval.params, &self.obs)?;
        let grad = assemble_gradient(&eval.traj, &adj, &eval.params, &self.reg_d, &self.reg_g)?;
        Ok((adj, grad))
    }

    pub fn gradient(&self, params: &ParamPair) -> Result<GradientPair> {
        Ok(self.gradient_at(&self.evaluate(params)?)?.1)
    }

    pub fn hessian_context(
        &self,
        eval: &Evaluation,
        adj: AdjointTrajectory,
        options: HessianOptions,
    ) -> Result<HessianContext> {
        HessianContext::new(
            eval.params.clone(),
            eval.traj.clone(),
            adj,
            self.obs.clone(),
            self.reg_d.clone(),
            self.reg_g.clone(),
            options,
        )
    }

    /// Forward and adjoint solves plus the frozen Hessian context.
    pub fn linearize(
        &self,
        params: &ParamPair,
        options: HessianOptions,
    ) -> Result<(Evaluation, GradientPair, HessianContext)> {
        let eval = self.evaluate(params)?;
        let (adj, grad) = self.gradient_at(&eval)?;
        let ctx = self.hessian_context(&eval, adj, options)?;
        Ok((eval, grad, ctx))
    }

    /// Same problem with different observations.
    pub fn with_observations(&self, obs: ObservationSet) -> Self {
        Problem {
            obs,
            ..self.clone()
        }
    }
}
