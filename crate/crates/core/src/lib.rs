//! Simulation toolkit for the stochastic heat equation
//! `du = (1/2) Lap u dt + b(u) dt + sigma(u) W1(dt, x)` driven by spatially
//! correlated Gaussian noise.
//!
//! The crate provides covariance kernels and their Gram factorizations,
//! noise lattices, an exponential-Euler mild-solution solver with Picard
//! iteration, Feynman-Kac Monte Carlo estimators for the linear equation,
//! Malliavin-norm and density diagnostics, and Hölder-exponent regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod feynman_kac;
pub mod field;
pub mod grid;
pub mod grid_solver;
pub mod io;
pub mod kernel;
pub mod malliavin;
pub mod rng;
pub mod semigroup;
pub mod stats;

pub use analysis::{holder_exponent_space, holder_exponent_time, moment_sup, HolderReport, MomentSup, Variable};
pub use coefficients::{Coefficients, ScalarFn};
pub use error::{Error, Result};
pub use feynman_kac::{fk_estimate, fk_solve_linear, FkEstimate, SemimartingaleModel};
pub use field::{sample_brownian_path, sample_noise_lattice, BrownianPath, NoiseLattice};
pub use grid::{Point, SpaceGrid, TimeGrid};
pub use grid_solver::{picard_solve, solve_mild, FieldSolution, MildSolver, Recording};
pub use kernel::{check_h1a, GramFactor, Kernel, KernelKind, Spectral};
pub use malliavin::{density_kde, malliavin_norm, Bandwidth, DensityEstimate, MalliavinEstimate};
pub use rng::Stream;
pub use semigroup::{heat_semigroup_apply, HeatSemigroup};
