//! Tikhonov regularization `R(m) = 1/2 ||A (m - mean)||^2` with the elliptic
//! operator `A = -div(gamma grad .) + delta`.

use crate::error::{Error, Result};
use crate::field::{dot, ScalarField};
use crate::operators::{check_elliptic, elliptic_into};

#[derive(Debug, Clone, PartialEq)]
pub struct RegOperator {
    gamma: f64,
    delta: f64,
    mean: ScalarField,
}

impl RegOperator {
    pub fn new(gamma: f64, delta: f64, mean: ScalarField) -> Result<Self> {
        check_elliptic(gamma, delta)?;
        Ok(RegOperator { gamma, delta, mean })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mean(&self) -> &ScalarField {
        &self.mean
    }

    /// `A m`
    pub fn apply(&self, m: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; m.len()];
        elliptic_into(self.gamma, self.delta, m.grid(), m.values(), &mut out);
        ScalarField::from_vec_unchecked(m.grid().clone(), out)
    }

    /// `A^2 m`
    pub fn apply_squared(&self, m: &ScalarField) -> ScalarField {
        self.apply(&self.apply(m))
    }

    /// Solve `A x = b` by CG; requires `delta > 0` (otherwise `A` is singular).
    pub fn solve(&self, b: &ScalarField) -> Result<ScalarField> {
        if self.delta <= 0.0 {
            return Err(Error::InvalidParameter(
                "regularization operator is singular when delta = 0".into(),
            ));
        }
        let grid = b.grid();
        let n = b.len();
        let rhs = b.values();
        let bnorm = dot(rhs, rhs).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(ScalarField::zeros(grid.clone()));
        }
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        for _ in 0..(10 * n + 100) {
            elliptic_into(self.gamma, self.delta, grid, &p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= 1e-12 * bnorm {
                return Ok(ScalarField::from_vec_unchecked(grid.clone(), x));
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        Err(Error::LinearSolve(
            "regularization solve did not converge".into(),
        ))
    }
}

/// `1/2 inner(A(m - mean), A(m - mean))`
pub fn reg_cost(m: &ScalarField, op: &RegOperator) -> Result<f64> {
    let diff = m.zip_map(&op.mean, |a, b| a - b)?;
    let a = op.apply(&diff);
    Ok(0.5 * a.norm().powi(2))
}

/// `A^2 (m - mean)`
pub fn reg_grad(m: &ScalarField, op: &RegOperator) -> Result<ScalarField> {
    let diff = m.zip_map(&op.mean, |a, b| a - b)?;
    Ok(op.apply_squared(&diff))
}

/// `A^2 mhat`; exact because the functional is quadratic.
pub fn reg_hess_apply(mhat: &ScalarField, op: &RegOperator) -> Result<ScalarField> {
    mhat.check_grid(&op.mean)?;
    Ok(op.apply_squared(mhat))
}
