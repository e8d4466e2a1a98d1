//! Cell-centered scalar fields and parameter pairs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// One real value per active cell of a shared grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl ScalarField {
    pub fn new(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_active() {
            return Err(Error::InvalidField(format!(
                "{} values for {} active cells",
                values.len(),
                grid.num_active()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at cell {k}")));
        }
        Ok(ScalarField { grid, values })
    }

    /// Wraps values without validation; callers guarantee length and finiteness.
    pub(crate) fn from_vec_unchecked(grid: Arc<Grid2D>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_active());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<Grid2D>, value: f64) -> Self {
        let n = grid.num_active();
        ScalarField {
            grid,
            values: vec![value; n],
        }
    }

    /// Field sampled at active cell centers.
    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.num_active())
            .map(|k| {
                let (x, y) = grid.cell_center(k);
                f(x, y)
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert!(self.same_grid(x));
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Area-weighted integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Discrete L2 norm, `sqrt(inner(f, f))`.
    pub fn norm(&self) -> f64 {
        (dot(&self.values, &self.values) * self.grid.cell_area()).sqrt()
    }
}

/// Discrete L2 inner product: midpoint quadrature of the integral of `f * g`.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.check_grid(g)?;
    Ok(dot(&f.values, &g.values) * f.grid.cell_area())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A pair of fields `(D, G)` on one grid.
///
/// Used both for model parameters (diffusivity `d`, proliferation rate `g`)
/// and for gradients and search directions, which live in the same space.
/// The joint inner product is the sum of the componentwise ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub d: ScalarField,
    pub g: ScalarField,
}

/// Diffusivity (mm^2/day) and proliferation rate (1/day).
pub type ParamPair = FieldPair;
/// Gradient (or Hessian action) with respect to `(D, G)`.
pub type GradientPair = FieldPair;

impl FieldPair {
    pub fn new(d: ScalarField, g: ScalarField) -> Result<Self> {
        d.check_grid(&g)?;
        Ok(FieldPair { d, g })
    }

    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        FieldPair {
            d: ScalarField::zeros(grid.clone()),
            g: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        self.d.grid()
    }

    pub fn inner(&self, other: &FieldPair) -> f64 {
        let w = self.d.grid().cell_area();
        (dot(self.d.values(), other.d.values()) + dot(self.g.values(), other.g.values())) * w
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn axpy(&mut self, a: f64, x: &FieldPair) {
        self.d.axpy(a, &x.d);
        self.g.axpy(a, &x.g);
    }

    pub fn scale(&mut self, a: f64) {
        self.d.scale(a);
        self.g.scale(a);
    }

    pub fn scaled(&self, a: f64) -> FieldPair {
        FieldPair {
            d: self.d.scaled(a),
            g: self.g.scaled(a),
        }
    }

    /// `self + a * x`
    pub fn plus(&self, a: f64, x: &FieldPair) -> FieldPair {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.d
            .values()
            .iter()
            .chain(self.g.values())
            .all(|v| v.is_finite())
    }

    /// Checks the diffusivity is nonnegative and both fields are finite.
    pub fn validate_params(&self) -> Result<()> {
        self.d.check_grid(&self.g)?;
        if !self.is_finite() {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.d.min() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "diffusivity must be nonnegative (min = {:e})",
                self.d.min()
            )));
        }
        Ok(())
    }
}
