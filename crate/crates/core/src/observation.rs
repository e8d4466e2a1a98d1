//! Observations and the data misfit.
//!
//! Observations are full (optionally masked) snapshots of the state at a
//! set of time-step indices. In time the observation operator is a sum of
//! point evaluations with unit weight, so the misfit is a plain sum over the
//! observed steps and the adjoint source is injected at exactly those steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{dot, ParamPair, ScalarField};
use crate::forward::{solve_forward, StateTrajectory, TimeGrid};

/// One observed snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step: usize,
    pub data: ScalarField,
    /// Cells that are observed. `None` observes the whole domain.
    pub support: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    observations: Vec<Observation>,
    sigma_noise: f64,
}

impl ObservationSet {
    pub fn new(observations: Vec<Observation>, sigma_noise: f64) -> Result<Self> {
        if !(sigma_noise > 0.0 && sigma_noise.is_finite()) {
            return Err(Error::Observation(format!(
                "sigma_noise must be > 0 (got {sigma_noise})"
            )));
        }
        for w in observations.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::Observation(
                    "observation steps must be strictly increasing".into(),
                ));
            }
            w[1].data.check_grid(&w[0].data)?;
        }
        for o in &observations {
            if let Some(s) = &o.support {
                if s.len() != o.data.len() {
                    return Err(Error::Observation(format!(
                        "support mask at step {} has wrong length",
                        o.step
                    )));
                }
            }
        }
        Ok(ObservationSet {
            observations,
            sigma_noise,
        })
    }

    /// Observation set with nothing observed.
    pub fn empty(sigma_noise: f64) -> Result<Self> {
        Self::new(Vec::new(), sigma_noise)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn sigma_noise(&self) -> f64 {
        self.sigma_noise
    }

    pub fn steps(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.step).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn at_step(&self, step: usize) -> Option<&Observation> {
        self.observations
            .binary_search_by_key(&step, |o| o.step)
            .ok()
            .map(|i| &self.observations[i])
    }

    /// Same data, different noise weight.
    pub fn with_sigma(&self, sigma_noise: f64) -> Result<Self> {
        Self::new(self.observations.clone(), sigma_noise)
    }

    pub(crate) fn check_against(&self, traj: &StateTrajectory) -> Result<()> {
        let nt = traj.time_grid().steps();
        for o in &self.observations {
            if o.step > nt {
                return Err(Error::Observation(format!(
                    "observation step {} beyond final step {nt}",
                    o.step
                )));
            }
            o.data.check_grid(traj.snapshot(0))?;
        }
        Ok(())
    }
}

/// `u - d` restricted to the observed cells.
fn masked_residual(u: &ScalarField, obs: &Observation) -> Vec<f64> {
    let mut r: Vec<f64> = u
        .values()
        .iter()
        .zip(obs.data.values())
        .map(|(a, b)| a - b)
        .collect();
    if let Some(support) = &obs.support {
        for (v, &keep) in r.iter_mut().zip(support) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    r
}

/// `1/(2 sigma^2) * sum_k inner(u_k - d_k, u_k - d_k)` over observed steps.
pub fn misfit_cost(traj: &StateTrajectory, obs: &ObservationSet) -> Result<f64> {
    obs.check_against(traj)?;
    let area = traj.snapshot(0).grid().cell_area();
    let total: f64 = obs
        .observations
        .iter()
        .map(|o| {
            let r = masked_residual(traj.snapshot(o.step), o);
            dot(&r, &r) * area
        })
        .sum();
    Ok(0.5 * total / (obs.sigma_noise * obs.sigma_noise))
}

/// `(1/sigma^2) B*B(u - d)` at one step; zero away from observation steps.
pub fn obs_adjoint_source(
    traj: &StateTrajectory,
    obs: &ObservationSet,
    step: usize,
) -> Result<ScalarField> {
    let u = traj.snapshot(step);
    match obs.at_step(step) {
        None => Ok(ScalarField::zeros(u.grid().clone())),
        Some(o) => {
            o.data.check_grid(u)?;
            let w = 1.0 / (obs.sigma_noise * obs.sigma_noise);
            let r = masked_residual(u, o).into_iter().map(|v| w * v).collect();
            Ok(ScalarField::from_vec_unchecked(u.grid().clone(), r))
        }
    }
}

/// Linearized observation source `(1/sigma^2) B*B uhat` at one step.
pub(crate) fn incremental_source(
    obs: &ObservationSet,
    step: usize,
    uhat: &[f64],
) -> Option<Vec<f64>> {
    let o = obs.at_step(step)?;
    let w = 1.0 / (obs.sigma_noise * obs.sigma_noise);
    let mut s: Vec<f64> = uhat.iter().map(|v| w * v).collect();
    if let Some(support) = &o.support {
        for (v, &keep) in s.iter_mut().zip(support) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    Some(s)
}

/// Noise sequence for synthetic data: i.i.d. `N(0, sigma^2)` per cell, one
/// observation after another, from a ChaCha8 stream seeded by `seed`.
pub fn noise_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Run the forward model at `params_true` and record snapshots with added
/// Gaussian noise of standard deviation `sigma`.
///
/// The misfit weight `sigma_noise` is separate from `sigma` so that
/// noiseless data (`sigma = 0`) still yields a valid observation set.
pub fn generate_synthetic(
    params_true: &ParamPair,
    u0: &ScalarField,
    time_grid: &TimeGrid,
    obs_steps: &[usize],
    sigma: f64,
    sigma_noise: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Observation(format!(
            "noise level must be >= 0 (got {sigma})"
        )));
    }
    if obs_steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Observation(
            "observation steps must be strictly increasing".into(),
        ));
    }
    if let Some(&last) = obs_steps.last() {
        if last > time_grid.steps() {
            return Err(Error::Observation(format!(
                "observation step {last} beyond final step {}",
                time_grid.steps()
            )));
        }
    }
    let traj = solve_forward(params_true, u0, time_grid)?;
    let mut rng = noise_stream(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid normal");
    let observations = obs_steps
        .iter()
        .map(|&step| {
            let mut data = traj.snapshot(step).clone();
            if sigma > 0.0 {
                for v in data.values_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
            Observation {
                step,
                data,
                support: None,
            }
        })
        .collect();
    ObservationSet::new(observations, sigma_noise)
}
