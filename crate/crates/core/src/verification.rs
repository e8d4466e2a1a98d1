//! Finite-difference verification of gradients and Hessian actions.
//!
//! Both checks use one-sided differences along a white-noise direction, so
//! the residual `r(eps)` decays linearly until roundoff takes over at small
//! `eps`. The report keeps the whole sweep; the slope is fitted only over
//! the configured window.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FieldPair;
use crate::optimizer::ReducedObjective;
use crate::synthetic::white_noise_pair;

/// Slope fit window.
pub const FIT_WINDOW: (f64, f64) = (1e-5, 1e-2);

/// Default sweep `1e-1, 1e-2, ..., 1e-10`.
pub fn default_epsilons() -> Vec<f64> {
    (1..=10).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdCheckReport {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `log r` against `log eps` over [`FIT_WINDOW`].
    pub slope: f64,
    pub seed: u64,
}

impl FdCheckReport {
    fn new(epsilons: Vec<f64>, residuals: Vec<f64>, seed: u64) -> Self {
        let slope = fit_slope(&epsilons, &residuals, FIT_WINDOW.0, FIT_WINDOW.1);
        FdCheckReport {
            epsilons,
            residuals,
            slope,
            seed,
        }
    }

    /// Ratios `r(eps_i) / r(eps_{i+1})` between successive sweep entries.
    pub fn ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// Longest run of successive ratios inside `[lo, hi]`, in decades.
    pub fn linear_decades(&self, lo: f64, hi: f64) -> usize {
        let mut best = 0;
        let mut run = 0;
        for r in self.ratios() {
            if r >= lo && r <= hi {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    }

    /// `epsilon,r` rows, one per sweep entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epsilon,r")?;
        for (e, r) in self.epsilons.iter().zip(&self.residuals) {
            writeln!(out, "{e:e},{r:e}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Least-squares slope of `log r` against `log eps` for `eps` in `[lo, hi]`.
pub fn fit_slope(epsilons: &[f64], residuals: &[f64], lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(residuals)
        .filter(|(&e, &r)| e >= lo * (1.0 - 1e-12) && e <= hi * (1.0 + 1e-12) && r > 0.0)
        .map(|(e, r)| (e.log10(), r.log10()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon sweep".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter(
            "epsilons must lie in (0, 1)".into(),
        ));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// `r(eps) = |(J(x0 + eps d) - J(x0))/eps - <g(x0), d>|` for a white-noise
/// direction `d` drawn from `seed`.
pub fn fd_gradient_check(
    objective: &ReducedObjective,
    x0: &FieldPair,
    epsilons: &[f64],
    seed: u64,
) -> Result<FdCheckReport> {
    check_epsilons(epsilons)?;
    let lin = objective.linearize(x0)?;
    let j0 = lin.eval.cost.total();
    let dir = white_noise_pair(x0.grid(), seed);
    let slope = lin.grad.inner(&dir);
    let residuals = epsilons
        .par_iter()
        .map(|&eps| {
            let j = objective.cost(&x0.plus(eps, &dir))?;
            Ok(((j - j0) / eps - slope).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FdCheckReport::new(epsilons.to_vec(), residuals, seed))
}

/// `r(eps) = ||(g(x0 + eps d) - g(x0))/eps - H(x0) d||` in the joint norm.
pub fn fd_hessian_check(
    objective: &ReducedObjective,
    x0: &FieldPair,
    epsilons: &[f64],
    seed: u64,
) -> Result<FdCheckReport> {
    check_epsilons(epsilons)?;
    let lin = objective.linearize(x0)?;
    let dir = white_noise_pair(x0.grid(), seed);
    let hd = objective.hessian_apply(&lin, &dir)?;
    let residuals = epsilons
        .par_iter()
        .map(|&eps| {
            let g = objective.gradient(&x0.plus(eps, &dir))?;
            let mut diff = g;
            diff.axpy(-1.0, &lin.grad);
            diff.scale(1.0 / eps);
            diff.axpy(-1.0, &hd);
            Ok(diff.norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FdCheckReport::new(epsilons.to_vec(), residuals, seed))
}

/// Largest `|<Hv, w> - <v, Hw>| / (||v|| ||w||)` over `n_pairs` white-noise pairs.
pub fn hessian_symmetry_check(
    objective: &ReducedObjective,
    x0: &FieldPair,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::InvalidParameter(
            "need at least one direction pair".into(),
        ));
    }
    let lin = objective.linearize(x0)?;
    let grid = x0.grid();
    let asym = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let v = white_noise_pair(grid, seed.wrapping_add(2 * i as u64));
            let w = white_noise_pair(grid, seed.wrapping_add(2 * i as u64 + 1));
            let hv = objective.hessian_apply(&lin, &v)?;
            let hw = objective.hessian_apply(&lin, &w)?;
            Ok((hv.inner(&w) - v.inner(&hw)).abs() / (v.norm() * w.norm()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(asym.into_iter().fold(0.0, f64::max))
}
