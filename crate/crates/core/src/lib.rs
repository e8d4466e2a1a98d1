//! Calibration of a heterogeneous Fisher-KPP tumor growth model.
//!
//! The model `du/dt = div(D grad u) + G u (1 - u)` is discretized with
//! cell-centered finite volumes on a masked uniform grid and implicit Euler
//! in time. Diffusivity `D` and growth rate `G` are recovered from snapshots
//! of `u` by minimizing a Tikhonov-regularized least-squares misfit with
//! inexact Newton-CG. Gradients come from a discrete adjoint and Hessian
//! actions from second-order adjoints, so both are exact for the discrete
//! objective and can be checked against finite differences.
//!
//! ```
//! use std::sync::Arc;
//! use tumorcal::{Grid2D, ParamPair, ScalarField, TimeGrid, solve_forward};
//!
//! let grid = Arc::new(Grid2D::disk(16, 16, 7.5, 1.0, 1.0).unwrap());
//! let params = ParamPair::new(
//!     ScalarField::constant(grid.clone(), 1.0),
//!     ScalarField::constant(grid.clone(), 0.3),
//! )
//! .unwrap();
//! let u0 = ScalarField::constant(grid, 0.1);
//! let traj = solve_forward(&params, &u0, &TimeGrid::new(1.0, 10).unwrap()).unwrap();
//! assert!(traj.final_state().max() > 0.1);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod config;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod hessian;
pub mod io;
pub mod linsolve;
pub mod observation;
pub mod operators;
pub mod optimizer;
pub mod problem;
pub mod regularization;
pub mod synthetic;
pub mod verification;

pub use adjoint::{assemble_gradient, solve_adjoint, total_cost, AdjointTrajectory, CostBreakdown};
pub use config::{Experiment, FieldSpec, GridSpec, InitialSpec, RunConfig};
pub use error::{Error, Result};
pub use field::{inner, FieldPair, GradientPair, ParamPair, ScalarField};
pub use forward::{solve_forward, step_implicit, StateTrajectory, TimeGrid};
pub use grid::{build_grid, Grid2D};
pub use hessian::{apply_hessian, apply_hessian_pair, HessianContext, HessianOptions};
pub use observation::{generate_synthetic, misfit_cost, Observation, ObservationSet};
pub use operators::{apply_diffusion, apply_elliptic, diffusion_pairing, DiffusionOperator};
pub use optimizer::{
    armijo_linesearch, cg_steihaug, newton_cg, CalibrationResult, CgExit, CgOutcome,
    IterationRecord, NewtonCgConfig, ParamMode, ReducedObjective, StopReason,
};
pub use problem::{Evaluation, Problem};
pub use regularization::{reg_cost, reg_grad, reg_hess_apply, RegOperator};
pub use verification::{
    fd_gradient_check, fd_hessian_check, hessian_symmetry_check, FdCheckReport,
};
