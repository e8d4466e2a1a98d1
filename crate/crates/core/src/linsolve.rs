//! Linear solvers for the implicit step operator.
//!
//! Every linear system solved by this crate has the form
//! `(diag(c) - L) x = b`, where `L` is a diffusion operator and `c` a
//! cellwise shift. The matrix is symmetric; it is positive definite whenever
//! `c > 0`, which covers all reasonable time steps. Jacobi-preconditioned CG
//! is tried first and MINRES takes over if CG meets nonpositive curvature or
//! stalls.

use crate::error::{Error, Result};
use crate::field::dot;
use crate::operators::DiffusionOperator;

/// Relative residual tolerance for step solves.
pub const LINEAR_RTOL: f64 = 1e-12;

/// `x -> diag(shift) x - L x`
#[derive(Debug, Clone)]
pub struct StepOperator<'a> {
    diffusion: &'a DiffusionOperator,
    shift: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> StepOperator<'a> {
    pub fn new(diffusion: &'a DiffusionOperator, shift: Vec<f64>) -> Self {
        let ldiag = diffusion.diagonal();
        let diag = shift.iter().zip(&ldiag).map(|(s, l)| s - l).collect();
        StepOperator {
            diffusion,
            shift,
            diag,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &s), &v) in out.iter_mut().zip(&self.shift).zip(x) {
            *o = s * v;
        }
        self.diffusion.accumulate(-1.0, x, out);
    }

    /// Solve `A x = b` to [`LINEAR_RTOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let max_iters = 10 * n + 100;
        if let Some(x) = self.pcg(b, LINEAR_RTOL, max_iters) {
            return Ok(x);
        }
        log::debug!("CG failed on step operator, falling back to MINRES");
        self.minres(b, LINEAR_RTOL, 4 * max_iters)
    }

    /// Jacobi-preconditioned CG. `None` on breakdown or stall.
    fn pcg(&self, b: &[f64], rtol: f64, max_iters: usize) -> Option<Vec<f64>> {
        let n = b.len();
        if self.diag.iter().any(|&d| d <= 0.0) {
            return None;
        }
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Some(x);
        }
        let target = rtol * bnorm;
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for _ in 0..max_iters {
            self.apply(&p, &mut ap);
            let curv = dot(&p, &ap);
            if !(curv > 0.0) {
                return None;
            }
            let alpha = rz / curv;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= target {
                return Some(x);
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        None
    }

    /// Unpreconditioned MINRES for symmetric, possibly indefinite systems.
    fn minres(&self, b: &[f64], rtol: f64, max_iters: usize) -> Result<Vec<f64>> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let beta1 = dot(b, b).sqrt();
        if beta1 == 0.0 {
            return Ok(x);
        }
        let mut r1 = b.to_vec();
        let mut r2 = b.to_vec();
        let mut y = b.to_vec();
        let mut v = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let (mut oldb, mut beta) = (0.0, beta1);
        let (mut dbar, mut epsln) = (0.0, 0.0);
        let mut phibar = beta1;
        let (mut cs, mut sn) = (-1.0f64, 0.0f64);

        for itn in 1..=max_iters {
            let s = 1.0 / beta;
            for i in 0..n {
                v[i] = s * y[i];
            }
            self.apply(&v, &mut y);
            if itn >= 2 {
                let f = beta / oldb;
                for i in 0..n {
                    y[i] -= f * r1[i];
                }
            }
            let alfa = dot(&v, &y);
            let f = alfa / beta;
            for i in 0..n {
                y[i] -= f * r2[i];
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            oldb = beta;
            beta = dot(&r2, &r2).sqrt();

            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;

            std::mem::swap(&mut w1, &mut w2);
            std::mem::swap(&mut w2, &mut w);
            for i in 0..n {
                w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
                x[i] += phi * w[i];
            }
            if phibar <= rtol * beta1 || beta == 0.0 {
                return Ok(x);
            }
        }
        Err(Error::LinearSolve(format!(
            "MINRES reached {max_iters} iterations with relative residual {:.3e}",
            phibar / beta1
        )))
    }
}
