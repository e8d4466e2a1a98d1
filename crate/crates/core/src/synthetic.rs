//! Field generators for synthetic experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::{FieldPair, ScalarField};
use crate::grid::Grid2D;

const SMOOTH_MODES: usize = 4;

/// Smooth random field `mean * (1 + rel_amplitude * s(x, y))` where `s` is a
/// sum of a few long-wavelength plane waves normalized to `max |s| = 1` over
/// the active cells.
pub fn smooth_random_field(
    grid: &Arc<Grid2D>,
    mean: f64,
    rel_amplitude: f64,
    seed: u64,
) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = grid.nx() as f64 * grid.hx();
    let ly = grid.ny() as f64 * grid.hy();
    let modes: Vec<(f64, f64, f64, f64)> = (0..SMOOTH_MODES)
        .map(|_| {
            let sx = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let kx = sx * 2.0 * PI * rng.gen_range(0.3..1.2) / lx;
            let ky = 2.0 * PI * rng.gen_range(0.3..1.2) / ly;
            let phase = rng.gen_range(0.0..2.0 * PI);
            let amp = rng.gen_range(0.5..1.0);
            (kx, ky, phase, amp)
        })
        .collect();
    let shape = ScalarField::from_fn(grid.clone(), |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos())
            .sum()
    });
    let scale = shape.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    shape.map(|s| mean * (1.0 + rel_amplitude * s / scale))
}

/// `amplitude * exp(-|x - center|^2 / (2 width^2))` sampled at cell centers.
pub fn gaussian_bump(
    grid: &Arc<Grid2D>,
    center: (f64, f64),
    width: f64,
    amplitude: f64,
) -> ScalarField {
    ScalarField::from_fn(grid.clone(), |x, y| {
        let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
        amplitude * (-r2 / (2.0 * width * width)).exp()
    })
}

/// Center of the grid's bounding box.
pub fn domain_center(grid: &Grid2D) -> (f64, f64) {
    (
        0.5 * grid.nx() as f64 * grid.hx(),
        0.5 * grid.ny() as f64 * grid.hy(),
    )
}

/// i.i.d. standard normal values per cell, D component first.
pub fn white_noise_pair(grid: &Arc<Grid2D>, seed: u64) -> FieldPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.num_active();
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let d = draw();
    let g = draw();
    FieldPair {
        d: ScalarField::from_vec_unchecked(grid.clone(), d),
        g: ScalarField::from_vec_unchecked(grid.clone(), g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_field_stays_in_band() {
        let grid = Arc::new(Grid2D::disk(32, 32, 12.0, 1.0, 1.0).unwrap());
        let f = smooth_random_field(&grid, 2.0, 0.25, 3);
        assert!(f.min() >= 2.0 * 0.75 - 1e-12);
        assert!(f.max() <= 2.0 * 1.25 + 1e-12);
        assert_eq!(f, smooth_random_field(&grid, 2.0, 0.25, 3));
        assert_ne!(f, smooth_random_field(&grid, 2.0, 0.25, 4));
    }

    #[test]
    fn white_noise_is_deterministic() {
        let grid = Arc::new(Grid2D::square(8, 8, 1.0, 1.0).unwrap());
        assert_eq!(white_noise_pair(&grid, 9), white_noise_pair(&grid, 9));
    }

    #[test]
    fn bump_peaks_at_center() {
        let grid = Arc::new(Grid2D::square(9, 9, 1.0, 1.0).unwrap());
        let b = gaussian_bump(&grid, domain_center(&grid), 1.5, 0.5);
        let k = grid.active_index(4, 4).unwrap();
        assert_eq!(b.values()[k], 0.5);
        assert_eq!(b.max(), 0.5);
    }
}
