#![allow(dead_code)]

use std::sync::Arc;

use tumorcal::synthetic::{domain_center, gaussian_bump, smooth_random_field};
use tumorcal::{
    generate_synthetic, FieldPair, Grid2D, ParamPair, Problem, RegOperator, ScalarField, TimeGrid,
};

pub const D_MEAN: f64 = 1.0;
pub const G_MEAN: f64 = 0.3;
pub const TRUTH_SEEDS: (u64, u64) = (11, 12);

/// Physical side length of the square bounding box.
pub const SIDE: f64 = 32.0;
pub const FINAL_TIME: f64 = 8.0;

/// `n x n` disk covering the fixed physical box, radius `0.375 * SIDE`.
pub fn disk(n: usize) -> Arc<Grid2D> {
    let h = SIDE / n as f64;
    Arc::new(Grid2D::disk(n, n, 0.375 * n as f64, h, h).unwrap())
}

pub fn truth(grid: &Arc<Grid2D>) -> ParamPair {
    ParamPair::new(
        smooth_random_field(grid, D_MEAN, 0.25, TRUTH_SEEDS.0),
        smooth_random_field(grid, G_MEAN, 0.25, TRUTH_SEEDS.1),
    )
    .unwrap()
}

pub fn initial_state(grid: &Arc<Grid2D>) -> ScalarField {
    gaussian_bump(grid, domain_center(grid), 2.0, 0.5)
}

pub struct Setup {
    pub grid: Arc<Grid2D>,
    pub truth: ParamPair,
    pub problem: Problem,
}

/// Inverse-crime problem on an `n x n` discretization of one fixed physical
/// domain, so different `n` approximate the same continuous problem.
/// Smoothing weights are physical constants, not multiples of `h^2`.
pub fn setup(
    n: usize,
    steps: usize,
    obs_steps: &[usize],
    noise_std: f64,
    means_are_truth: bool,
) -> Setup {
    let grid = disk(n);
    let truth = truth(&grid);
    let u0 = initial_state(&grid);
    let tg = TimeGrid::new(FINAL_TIME, steps).unwrap();
    let obs = generate_synthetic(&truth, &u0, &tg, obs_steps, noise_std, 0.05, 2024).unwrap();
    let (md, mg) = if means_are_truth {
        (truth.d.clone(), truth.g.clone())
    } else {
        (
            ScalarField::constant(grid.clone(), D_MEAN),
            ScalarField::constant(grid.clone(), G_MEAN),
        )
    };
    let reg_d = RegOperator::new(0.1, 0.1, md).unwrap();
    let reg_g = RegOperator::new(0.1, 0.1, mg).unwrap();
    let problem = Problem::new(u0, tg, obs, reg_d, reg_g).unwrap();
    Setup {
        grid,
        truth,
        problem,
    }
}

/// The derivative-check configuration: 32x32 disk, 20 steps, two noisy
/// observations.
pub fn check_setup() -> Setup {
    setup(32, 20, &[10, 20], 0.01, false)
}

/// A smooth base point away from the truth.
pub fn base_point(grid: &Arc<Grid2D>) -> FieldPair {
    ParamPair::new(
        smooth_random_field(grid, 0.8, 0.2, 21),
        smooth_random_field(grid, 0.35, 0.2, 22),
    )
    .unwrap()
}
