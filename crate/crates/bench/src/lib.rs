//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use tumorcal::synthetic::{domain_center, gaussian_bump, smooth_random_field};
use tumorcal::{
    generate_synthetic, Grid2D, ParamPair, Problem, RegOperator, ScalarField, TimeGrid,
};

/// Inverse-crime problem on an `n x n` disk with `steps` time steps and
/// observations at the midpoint and the end, plus a base point away from
/// the truth.
pub fn fixture(n: usize, steps: usize) -> (Problem, ParamPair) {
    let h = 32.0 / n as f64;
    let grid = Arc::new(Grid2D::disk(n, n, 0.375 * n as f64, h, h).expect("valid disk"));
    let truth = ParamPair::new(
        smooth_random_field(&grid, 1.0, 0.25, 11),
        smooth_random_field(&grid, 0.3, 0.25, 12),
    )
    .expect("same grid");
    let u0 = gaussian_bump(&grid, domain_center(&grid), 2.0, 0.5);
    let tg = TimeGrid::new(8.0, steps).expect("valid time grid");
    let obs = generate_synthetic(&truth, &u0, &tg, &[steps / 2, steps], 0.01, 0.05, 1)
        .expect("forward solve");
    let reg = |mean: f64| {
        RegOperator::new(0.1, 0.1, ScalarField::constant(grid.clone(), mean)).expect("valid")
    };
    let problem = Problem::new(u0, tg, obs, reg(1.0), reg(0.3)).expect("consistent problem");
    let base = ParamPair::new(
        smooth_random_field(&grid, 0.8, 0.2, 21),
        smooth_random_field(&grid, 0.35, 0.2, 22),
    )
    .expect("same grid");
    (problem, base)
}
