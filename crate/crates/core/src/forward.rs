//! Implicit-Euler solver for the reaction-diffusion tumor model
//! `du/dt = div(D grad u) + G (1 - u) u` with zero-flux boundary.

use crate::error::{Error, Result};
use crate::field::{dot, ParamPair, ScalarField};
use crate::linsolve::StepOperator;
use crate::operators::DiffusionOperator;

/// Newton iteration cap per time step.
pub const MAX_NEWTON_ITERS: usize = 50;
/// Relative tolerance of the per-step Newton solve.
pub const NEWTON_RTOL: f64 = 1e-11;
/// Slack on the `[0, 1]` range of the volume fraction.
pub const RANGE_SLACK: f64 = 1e-6;
/// Smallest Newton damping factor tried before accepting a step anyway.
const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Uniform time grid on `[0, T]` with `Nt` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "final time must be positive (got {final_time})"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "number of time steps must be >= 1".into(),
            ));
        }
        Ok(TimeGrid { final_time, steps })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    /// Time of snapshot `k`; `time(steps)` is exactly `T`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.final_time
        } else {
            self.final_time * k as f64 / self.steps as f64
        }
    }
}

/// Snapshots `u_0 ..= u_Nt` of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    time_grid: TimeGrid,
    snapshots: Vec<ScalarField>,
}

impl StateTrajectory {
    pub fn new(time_grid: TimeGrid, snapshots: Vec<ScalarField>) -> Result<Self> {
        if snapshots.len() != time_grid.steps() + 1 {
            return Err(Error::Inconsistent(format!(
                "{} snapshots for {} time steps",
                snapshots.len(),
                time_grid.steps()
            )));
        }
        for s in &snapshots[1..] {
            s.check_grid(&snapshots[0])?;
        }
        Ok(StateTrajectory {
            time_grid,
            snapshots,
        })
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

    pub fn final_state(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Cellwise maximum over time.
    pub fn max_over_time(&self) -> ScalarField {
        let mut out = self.snapshots[0].clone();
        for s in &self.snapshots[1..] {
            for (o, &v) in out.values_mut().iter_mut().zip(s.values()) {
                *o = o.max(v);
            }
        }
        out
    }
}

fn check_range(u: &ScalarField, step: usize) -> Result<()> {
    let (lo, hi) = (u.min(), u.max());
    if lo < -RANGE_SLACK || hi > 1.0 + RANGE_SLACK {
        return Err(Error::InvalidField(format!(
            "state at step {step} left [0, 1]: min {lo:e}, max {hi:e}"
        )));
    }
    Ok(())
}

/// One implicit Euler step: solves
/// `(u - u_prev)/dt - div(D grad u) - G (1 - u) u = 0` by Newton's method.
pub fn step_implicit(u_prev: &ScalarField, params: &ParamPair, dt: f64) -> Result<ScalarField> {
    u_prev.check_grid(&params.d)?;
    params.validate_params()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive (got {dt})"
        )));
    }
    let op = DiffusionOperator::new(&params.d);
    newton_step(&op, params.g.values(), u_prev, dt, 1)
}

pub(crate) fn newton_step(
    op: &DiffusionOperator,
    growth: &[f64],
    u_prev: &ScalarField,
    dt: f64,
    step: usize,
) -> Result<ScalarField> {
    let solver = StepSolver {
        op,
        growth,
        prev: u_prev.values(),
        area: u_prev.grid().cell_area(),
        inv_dt: 1.0 / dt,
        tol: NEWTON_RTOL * (1.0 + u_prev.norm()),
        step,
    };
    // Damped Newton from the previous state usually converges in a few
    // iterations. When G dt > 1 the residual norm can have a spurious local
    // minimum; the residual is convex in u, so undamped Newton from the
    // supersolution u = 1 then converges monotonically.
    let out = match solver.iterate(u_prev.values().to_vec(), true)? {
        Ok(u) => Ok(u),
        Err(_) => {
            log::debug!("step {step}: restarting Newton from u = 1");
            solver.iterate(vec![1.0; u_prev.len()], false)?
        }
    };
    match out {
        Ok(u) => Ok(ScalarField::from_vec_unchecked(u_prev.grid().clone(), u)),
        Err(residual) => Err(Error::TimestepDiverged {
            step,
            iterations: MAX_NEWTON_ITERS,
            residual,
        }),
    }
}

struct StepSolver<'a> {
    op: &'a DiffusionOperator,
    growth: &'a [f64],
    prev: &'a [f64],
    area: f64,
    inv_dt: f64,
    tol: f64,
    step: usize,
}

impl StepSolver<'_> {
    fn residual(&self, u: &[f64], res: &mut [f64]) -> f64 {
        self.op.apply_into(u, res);
        for k in 0..u.len() {
            res[k] =
                (u[k] - self.prev[k]) * self.inv_dt - res[k] - self.growth[k] * (1.0 - u[k]) * u[k];
        }
        (dot(res, res) * self.area).sqrt()
    }

    /// Newton from `u`. The inner result is the converged state or the
    /// final residual norm when the iteration stalls or hits the cap.
    fn iterate(&self, mut u: Vec<f64>, damped: bool) -> Result<std::result::Result<Vec<f64>, f64>> {
        let n = u.len();
        let mut res = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        let mut res_norm = self.residual(&u, &mut res);
        for _ in 0..MAX_NEWTON_ITERS {
            if !res_norm.is_finite() {
                return Ok(Err(res_norm));
            }
            if res_norm <= self.tol {
                return Ok(Ok(u));
            }
            let shift = jacobian_shift(self.growth, &u, self.inv_dt);
            let delta = StepOperator::new(self.op, shift).solve(&res).map_err(|e| {
                Error::LinearSolve(format!("Newton update at step {}: {e}", self.step))
            })?;
            let mut lambda = 1.0;
            loop {
                for k in 0..n {
                    trial[k] = u[k] - lambda * delta[k];
                }
                let norm = self.residual(&trial, &mut trial_res);
                if !damped || norm < (1.0 - 1e-4 * lambda) * res_norm {
                    res_norm = norm;
                    break;
                }
                lambda *= 0.5;
                if lambda < MIN_DAMPING {
                    return Ok(Err(res_norm));
                }
            }
            std::mem::swap(&mut u, &mut trial);
            std::mem::swap(&mut res, &mut trial_res);
        }
        Ok(if res_norm <= self.tol {
            Ok(u)
        } else {
            Err(res_norm)
        })
    }
}

/// Diagonal part of the linearized step operator at state `u`:
/// `1/dt - G (1 - 2u)`.
pub(crate) fn jacobian_shift(growth: &[f64], u: &[f64], inv_dt: f64) -> Vec<f64> {
    growth
        .iter()
        .zip(u)
        .map(|(&g, &u)| inv_dt - g * (1.0 - 2.0 * u))
        .collect()
}

/// March the forward model from `u0` over `time_grid`, storing every snapshot.
pub fn solve_forward(
    params: &ParamPair,
    u0: &ScalarField,
    time_grid: &TimeGrid,
) -> Result<StateTrajectory> {
    u0.check_grid(&params.d)?;
    params.validate_params()?;
    check_range(u0, 0)?;
    let op = DiffusionOperator::new(&params.d);
    let dt = time_grid.dt();
    let mut snapshots = Vec::with_capacity(time_grid.steps() + 1);
    snapshots.push(u0.clone());
    for k in 1..=time_grid.steps() {
        let next = newton_step(&op, params.g.values(), &snapshots[k - 1], dt, k)?;
        check_range(&next, k)?;
        snapshots.push(next);
    }
    Ok(StateTrajectory {
        time_grid: *time_grid,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use std::sync::Arc;

    fn grid() -> Arc<Grid2D> {
        Arc::new(Grid2D::disk(12, 12, 5.0, 1.0, 1.0).unwrap())
    }

    fn params(grid: &Arc<Grid2D>, d: f64, g: f64) -> ParamPair {
        ParamPair::new(
            ScalarField::constant(grid.clone(), d),
            ScalarField::constant(grid.clone(), g),
        )
        .unwrap()
    }

    /// Scalar Newton on (u - c)/dt = g (1 - u) u.
    /// Positive root of `a u^2 + (1 - a) u - c = 0` with `a = g dt`.
    fn scalar_logistic_step(c: f64, g: f64, dt: f64) -> f64 {
        let a = g * dt;
        if a == 0.0 {
            return c;
        }
        (a - 1.0 + ((1.0 - a).powi(2) + 4.0 * a * c).sqrt()) / (2.0 * a)
    }

    #[test]
    fn no_dynamics_is_identity() {
        let g = grid();
        let u = ScalarField::from_fn(g.clone(), |x, y| {
            0.5 + 0.4 * (0.3 * x).sin() * (0.2 * y).cos()
        });
        let out = step_implicit(&u, &params(&g, 0.0, 0.0), 0.3).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn uniform_reaction_matches_scalar_root() {
        let g = grid();
        let u = ScalarField::constant(g.clone(), 0.2);
        let out = step_implicit(&u, &params(&g, 0.0, 0.8), 0.5).unwrap();
        let expect = scalar_logistic_step(0.2, 0.8, 0.5);
        for &v in out.values() {
            assert!((v - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn stiff_reaction_escapes_spurious_residual_minimum() {
        // G dt = 2.25 and u_prev at the minimum of the scalar residual, where
        // the Jacobian vanishes
        let g = grid();
        let (growth, dt) = (2.25, 1.0);
        let u_prev = (growth * dt - 1.0) / (2.0 * growth * dt);
        let u = ScalarField::constant(g.clone(), u_prev);
        let out = step_implicit(&u, &params(&g, 0.0, growth), dt).unwrap();
        let expect = scalar_logistic_step(u_prev, growth, dt);
        for &v in out.values() {
            assert!((v - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn pure_diffusion_conserves_mass() {
        let g = grid();
        let u = ScalarField::from_fn(g.clone(), |x, y| {
            (-((x - 6.0).powi(2) + (y - 5.0).powi(2)) / 4.0).exp()
        });
        let d = ScalarField::from_fn(g.clone(), |x, _| 0.5 + 0.1 * x);
        let p = ParamPair::new(d, ScalarField::zeros(g.clone())).unwrap();
        let out = step_implicit(&u, &p, 0.7).unwrap();
        let (m0, m1) = (u.integral(), out.integral());
        assert!((m1 - m0).abs() <= 1e-10 * m0);
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = grid();
        let p = params(&g, 1.0, 0.5);
        let traj = solve_forward(
            &p,
            &ScalarField::zeros(g.clone()),
            &TimeGrid::new(5.0, 10).unwrap(),
        )
        .unwrap();
        assert_eq!(traj.snapshots().len(), 11);
        assert!(traj
            .snapshots()
            .iter()
            .all(|s| s.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid();
        let u = ScalarField::constant(g.clone(), 0.5);
        assert!(step_implicit(&u, &params(&g, -1.0, 0.0), 0.1).is_err());
        assert!(step_implicit(&u, &params(&g, 1.0, 0.0), 0.0).is_err());
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let bad = ScalarField::constant(g.clone(), 1.5);
        assert!(solve_forward(&params(&g, 1.0, 0.0), &bad, &tg).is_err());
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn time_grid_ends_at_final_time() {
        let tg = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(tg.time(3), 0.7);
        assert_eq!(tg.time(0), 0.0);
    }
}
