//! Discrete differential operators on masked grids.
//!
//! The diffusion operator is a conservative cell-centered finite-volume
//! stencil. Each interior face carries the arithmetic mean of the two
//! adjacent diffusivities; boundary faces carry no flux, which is the
//! discrete form of the homogeneous Neumann condition.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;

/// The diffusion operator `u -> div(D grad u)` for a fixed diffusivity,
/// stored as one transmissibility per interior face.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    grid: Arc<Grid2D>,
    coeffs: Vec<f64>,
}

impl DiffusionOperator {
    /// Assemble face coefficients from a cell diffusivity. No sign check: the
    /// same assembly is used for diffusivity increments, which may be negative.
    pub fn new(d: &ScalarField) -> Self {
        let grid = d.grid().clone();
        let dv = d.values();
        let coeffs = grid
            .faces()
            .iter()
            .map(|f| 0.5 * (dv[f.lo] + dv[f.hi]) * f.inv_h2)
            .collect();
        DiffusionOperator { grid, coeffs }
    }

    /// Constant diffusivity `gamma` on every face.
    pub fn uniform(grid: Arc<Grid2D>, gamma: f64) -> Self {
        let coeffs = grid.faces().iter().map(|f| gamma * f.inv_h2).collect();
        DiffusionOperator { grid, coeffs }
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    /// `out = L u`
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.accumulate(1.0, u, out);
    }

    /// `out += a * L u`
    pub fn accumulate(&self, a: f64, u: &[f64], out: &mut [f64]) {
        for (f, &c) in self.grid.faces().iter().zip(&self.coeffs) {
            let flux = a * c * (u[f.hi] - u[f.lo]);
            out[f.lo] += flux;
            out[f.hi] -= flux;
        }
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u.values(), &mut out);
        ScalarField::from_vec_unchecked(self.grid.clone(), out)
    }

    /// Diagonal entries of the operator matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.grid.num_active()];
        for (f, &c) in self.grid.faces().iter().zip(&self.coeffs) {
            diag[f.lo] -= c;
            diag[f.hi] -= c;
        }
        diag
    }

    /// Face coefficients in the order of [`Grid2D::faces`].
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

/// `div(D grad u)` with zero flux through the domain boundary.
pub fn apply_diffusion(d: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    d.check_grid(u)?;
    if d.min() < 0.0 {
        return Err(Error::InvalidParameter(
            "diffusivity must be nonnegative".into(),
        ));
    }
    Ok(DiffusionOperator::new(d).apply(u))
}

/// Elliptic regularization operator `A m = -div(gamma grad m) + delta m`
/// with homogeneous Neumann boundary condition.
pub fn apply_elliptic(gamma: f64, delta: f64, m: &ScalarField) -> Result<ScalarField> {
    check_elliptic(gamma, delta)?;
    let mut out = vec![0.0; m.len()];
    elliptic_into(gamma, delta, m.grid(), m.values(), &mut out);
    Ok(ScalarField::from_vec_unchecked(m.grid().clone(), out))
}

pub(crate) fn check_elliptic(gamma: f64, delta: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be > 0 (got {gamma})"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delta must be >= 0 (got {delta})"
        )));
    }
    Ok(())
}

pub(crate) fn elliptic_into(gamma: f64, delta: f64, grid: &Grid2D, m: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(m) {
        *o = delta * v;
    }
    for f in grid.faces() {
        let flux = gamma * f.inv_h2 * (m[f.hi] - m[f.lo]);
        out[f.lo] -= flux;
        out[f.hi] += flux;
    }
}

/// Derivative of `-inner(p, div(D grad u))` with respect to the cell
/// diffusivity, as a field in the L2 inner product.
///
/// This is the discrete `grad u . grad p`: each face contributes
/// `(u_hi - u_lo)(p_hi - p_lo) / h^2`, split equally between its two cells.
pub fn diffusion_pairing(u: &ScalarField, p: &ScalarField) -> Result<ScalarField> {
    u.check_grid(p)?;
    let mut out = vec![0.0; u.len()];
    pairing_accumulate(u.grid(), 1.0, u.values(), p.values(), &mut out);
    Ok(ScalarField::from_vec_unchecked(u.grid().clone(), out))
}

/// `out += a * pairing(u, p)`
pub(crate) fn pairing_accumulate(grid: &Grid2D, a: f64, u: &[f64], p: &[f64], out: &mut [f64]) {
    for f in grid.faces() {
        let c = 0.5 * a * f.inv_h2 * (u[f.hi] - u[f.lo]) * (p[f.hi] - p[f.lo]);
        out[f.lo] += c;
        out[f.hi] += c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Arc<Grid2D>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
        let v = (0..grid.num_active())
            .map(|_| rng.gen_range(lo..hi))
            .collect();
        ScalarField::new(grid.clone(), v).unwrap()
    }

    #[test]
    fn constant_state_has_no_flux() {
        let grid = Arc::new(Grid2D::disk(10, 10, 4.0, 1.0, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_field(&grid, &mut rng, 0.1, 2.0);
        let u = ScalarField::constant(grid, 0.7);
        let out = apply_diffusion(&d, &u).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cell_checkerboard() {
        let grid = Arc::new(Grid2D::square(2, 1, 1.0, 1.0).unwrap());
        let (a, b) = (0.3, 1.7);
        let d = ScalarField::constant(grid.clone(), 1.0);
        let u = ScalarField::new(grid, vec![a, b]).unwrap();
        let out = apply_diffusion(&d, &u).unwrap();
        assert_eq!(out.values(), &[b - a, a - b]);
    }

    #[test]
    fn diffusion_conserves_and_is_symmetric() {
        let grid = Arc::new(Grid2D::disk(24, 20, 9.0, 0.5, 0.8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let d = random_field(&grid, &mut rng, 0.01, 3.0);
            let u = random_field(&grid, &mut rng, -1.0, 1.0);
            let v = random_field(&grid, &mut rng, -1.0, 1.0);
            let lu = apply_diffusion(&d, &u).unwrap();
            assert!(lu.integral().abs() <= 1e-12 * u.norm().max(1.0));
            let lv = apply_diffusion(&d, &v).unwrap();
            let a = inner(&lu, &v).unwrap();
            let b = inner(&u, &lv).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn elliptic_on_constants() {
        let grid = Arc::new(Grid2D::disk(12, 12, 5.0, 1.0, 1.0).unwrap());
        let m = ScalarField::constant(grid, 2.5);
        let out = apply_elliptic(0.7, 0.3, &m).unwrap();
        assert!(out.values().iter().all(|&v| (v - 0.75).abs() < 1e-15));
        let out = apply_elliptic(0.7, 0.0, &m).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elliptic_is_symmetric() {
        let grid = Arc::new(Grid2D::disk(16, 16, 6.5, 1.0, 0.5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_field(&grid, &mut rng, -1.0, 1.0);
        let w = random_field(&grid, &mut rng, -1.0, 1.0);
        let av = apply_elliptic(0.4, 0.2, &v).unwrap();
        let aw = apply_elliptic(0.4, 0.2, &w).unwrap();
        let a = inner(&av, &w).unwrap();
        let b = inner(&v, &aw).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn elliptic_spike_matches_dense_neumann_laplacian() {
        // Dense 9x9 matrix of the 5-point Neumann Laplacian, assembled by
        // neighbor enumeration on the 3x3 grid.
        let n = 3;
        let mut dense = [[0.0f64; 9]; 9];
        for j in 0..n {
            for i in 0..n {
                let row = j * n + i;
                let nbrs = [
                    (i as i64 - 1, j as i64),
                    (i as i64 + 1, j as i64),
                    (i as i64, j as i64 - 1),
                    (i as i64, j as i64 + 1),
                ];
                for (a, b) in nbrs {
                    if a >= 0 && b >= 0 && a < n as i64 && b < n as i64 {
                        let col = b as usize * n + a as usize;
                        dense[row][col] -= 1.0;
                        dense[row][row] += 1.0;
                    }
                }
            }
        }
        let grid = Arc::new(Grid2D::square(3, 3, 1.0, 1.0).unwrap());
        for spike in 0..9 {
            let mut v = vec![0.0; 9];
            v[spike] = 1.0;
            let m = ScalarField::new(grid.clone(), v).unwrap();
            let out = apply_elliptic(1.0, 0.0, &m).unwrap();
            for (v, row) in out.values().iter().zip(&dense) {
                assert_eq!(*v, row[spike]);
            }
        }
    }

    #[test]
    fn elliptic_rejects_bad_constants() {
        let grid = Arc::new(Grid2D::square(2, 2, 1.0, 1.0).unwrap());
        let m = ScalarField::zeros(grid);
        assert!(apply_elliptic(0.0, 0.1, &m).is_err());
        assert!(apply_elliptic(1.0, -0.1, &m).is_err());
    }

    #[test]
    fn pairing_is_derivative_of_diffusion_form() {
        // d/dD of -<p, L(D) u> in direction e: finite differences are exact
        // because the form is linear in D.
        let grid = Arc::new(Grid2D::disk(10, 12, 4.5, 0.7, 1.1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_field(&grid, &mut rng, 0.5, 1.5);
        let e = random_field(&grid, &mut rng, -1.0, 1.0);
        let u = random_field(&grid, &mut rng, -1.0, 1.0);
        let p = random_field(&grid, &mut rng, -1.0, 1.0);
        let form = |d: &ScalarField| -inner(&p, &DiffusionOperator::new(d).apply(&u)).unwrap();
        let mut d2 = d.clone();
        d2.axpy(1.0, &e);
        let fd = form(&d2) - form(&d);
        let an = inner(&diffusion_pairing(&u, &p).unwrap(), &e).unwrap();
        assert!((fd - an).abs() <= 1e-12 * an.abs().max(1.0));
    }
}
