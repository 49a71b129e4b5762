//! Spatial covariance kernels `q(x, y)`, their Gram matrices on a grid, and
//! the eigen square root used to sample correlated noise.
//!
//! Two different conditions on `q` are called "(H1)" in the literature this
//! crate follows: a growth bound on the local characteristics of the
//! driving semimartingale (checked by [`check_growth`]) and the integrated
//! double heat-kernel convolution bound with exponent `gamma` (checked by
//! [`check_h1a`]). The continuum square root `c(xi, y)` is only ever
//! realized through the discrete eigen factor, so its growth is not tracked.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::SpaceGrid;
use crate::stats::linear_fit;

/// Stationary kernels given through a concrete spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Spectral {
    /// `variance * exp(-|x-y|^2 / (2 l^2))`, Gaussian spectral measure.
    Gaussian { variance: f64, length_scale: f64 },
    /// `variance * exp(-|x-y| / l)`, Cauchy spectral measure in d=1.
    Exponential { variance: f64, length_scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Constant {
        q0: f64,
    },
    HomogeneousSpectral(Spectral),
    /// Mixed second derivative of the bifractional Brownian covariance,
    /// `2^-K d^2/dxdy ((|x|^2H + |y|^2H)^K - |x-y|^2HK)`. One dimension only.
    BifractionalDerivative {
        h: f64,
        k: f64,
    },
    /// Heat-kernel approximation of the delta function, `p_{eps^2}(x - y)`.
    WhiteApprox {
        eps: f64,
    },
}

/// A covariance kernel together with its declared exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    /// Growth exponent: `|q(x,y)| <= C (1 + |x|^beta + |y|^beta)`.
    pub beta: f64,
    /// Hoelder exponent of `q`.
    pub gamma0: f64,
    /// Power-law rate of the double heat-kernel convolution of `|q|`.
    pub gamma: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, beta: f64, gamma0: f64, gamma: f64) -> Result<Self> {
        let k = Self { kind, beta, gamma0, gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn constant(q0: f64) -> Result<Self> {
        Self::new(KernelKind::Constant { q0 }, 0.0, 1.0, 0.0)
    }

    pub fn gaussian(variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelKind::HomogeneousSpectral(Spectral::Gaussian { variance, length_scale }), 0.0, 1.0, 0.0)
    }

    pub fn exponential(variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelKind::HomogeneousSpectral(Spectral::Exponential { variance, length_scale }), 0.0, 1.0, 0.0)
    }

    /// Smoothed white noise in d=1; declared `gamma = -1/2`.
    pub fn white_approx(eps: f64) -> Result<Self> {
        Self::new(KernelKind::WhiteApprox { eps }, 0.0, 1.0, -0.5)
    }

    /// Bifractional kernel with `gamma = HK - 1` and `beta = max(2HK - 2, 0) = 0`.
    pub fn bifractional(h: f64, k: f64) -> Result<Self> {
        Self::new(KernelKind::BifractionalDerivative { h, k }, 0.0, 2.0 * h * k - 1.0, h * k - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..2.0).contains(&self.beta) {
            return Err(invalid(format!("beta must lie in [0, 2), got {}", self.beta)));
        }
        if !(self.gamma > -1.0) {
            return Err(invalid(format!("gamma must exceed -1, got {}", self.gamma)));
        }
        if !(self.gamma0 > 0.0) {
            return Err(invalid(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        match self.kind {
            KernelKind::Constant { q0 } => {
                if !(q0 >= 0.0) || !q0.is_finite() {
                    return Err(invalid(format!("constant kernel needs q0 >= 0, got {q0}")));
                }
            }
            KernelKind::HomogeneousSpectral(Spectral::Gaussian { variance, length_scale })
            | KernelKind::HomogeneousSpectral(Spectral::Exponential { variance, length_scale }) => {
                if !(variance > 0.0) || !(length_scale > 0.0) {
                    return Err(invalid("spectral kernel needs positive variance and length_scale"));
                }
            }
            KernelKind::WhiteApprox { eps } => {
                if !(eps > 0.0) {
                    return Err(invalid(format!("white-noise approximation needs eps > 0, got {eps}")));
                }
            }
            KernelKind::BifractionalDerivative { h, k } => {
                if !(h > 0.0 && h < 1.0) {
                    return Err(invalid(format!("bifractional H must lie in (0,1), got {h}")));
                }
                if !(k > 0.0 && k <= 1.0) {
                    return Err(invalid(format!("bifractional K must lie in (0,1], got {k}")));
                }
                if !(2.0 * h * k > 1.0) {
                    return Err(invalid(format!("bifractional kernel needs 2HK > 1, got {}", 2.0 * h * k)));
                }
                if (self.gamma - (h * k - 1.0)).abs() > 1e-12 {
                    return Err(invalid(format!(
                        "bifractional kernel has gamma = HK - 1 = {}, declared {}",
                        h * k - 1.0,
                        self.gamma
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest spatial dimension the kernel is defined in.
    pub fn max_dim(&self) -> usize {
        match self.kind {
            KernelKind::BifractionalDerivative { .. } => 1,
            _ => 2,
        }
    }

    /// `q(x, y)`. Exactly symmetric in its arguments.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.kind {
            KernelKind::Constant { q0 } => Ok(q0),
            KernelKind::HomogeneousSpectral(Spectral::Gaussian { variance, length_scale }) => {
                Ok(variance * (-0.5 * dist2(x, y) / (length_scale * length_scale)).exp())
            }
            KernelKind::HomogeneousSpectral(Spectral::Exponential { variance, length_scale }) => {
                Ok(variance * (-dist2(x, y).sqrt() / length_scale).exp())
            }
            KernelKind::WhiteApprox { eps } => {
                let d = x.len() as i32;
                let var = eps * eps;
                Ok((2.0 * PI * var).powi(-d).sqrt() * (-0.5 * dist2(x, y) / var).exp())
            }
            KernelKind::BifractionalDerivative { h, k } => {
                let (a, b) = (x[0], y[0]);
                if a == 0.0 || b == 0.0 || a == b || !a.is_finite() || !b.is_finite() {
                    return Err(Error::SingularPoint { x: x.to_vec(), y: y.to_vec() });
                }
                Ok(bifractional_density(h, k, a, b))
            }
        }
    }

    /// `q(x, x)`; fails where the diagonal is singular.
    pub fn diagonal(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            KernelKind::BifractionalDerivative { .. } => Err(Error::SingularPoint { x: x.to_vec(), y: x.to_vec() }),
            _ => self.eval(x, x),
        }
    }

    /// Whether `q(x, x) > 0`. A singular diagonal counts as positive: the
    /// bifractional kernel diverges to `+inf` there.
    pub fn diagonal_positive(&self, x: &[f64]) -> bool {
        match self.kind {
            KernelKind::BifractionalDerivative { .. } => true,
            _ => self.diagonal(x).map(|v| v > 0.0).unwrap_or(false),
        }
    }
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// The bifractional covariance `R(x, y) = 2^-K ((|x|^2H + |y|^2H)^K - |x-y|^2HK)`.
pub fn bifractional_covariance(h: f64, k: f64, x: f64, y: f64) -> f64 {
    let s = x.abs().powf(2.0 * h) + y.abs().powf(2.0 * h);
    2f64.powf(-k) * (s.powf(k) - (x - y).abs().powf(2.0 * h * k))
}

/// Closed-form mixed partial of [`bifractional_covariance`] off the singular set.
fn bifractional_density(h: f64, k: f64, x: f64, y: f64) -> f64 {
    let s = x.abs().powf(2.0 * h) + y.abs().powf(2.0 * h);
    let cross = x.abs().powf(2.0 * h - 1.0) * y.abs().powf(2.0 * h - 1.0) * x.signum() * y.signum();
    let hk2 = 2.0 * h * k;
    let smooth = 4.0 * h * h * k * (k - 1.0) * s.powf(k - 2.0) * cross;
    let singular = hk2 * (hk2 - 1.0) * (x - y).abs().powf(hk2 - 2.0);
    2f64.powf(-k) * (smooth + singular)
}

/// Exact integral of the bifractional kernel over `[a1,b1] x [a2,b2]`.
fn bifractional_cell_integral(h: f64, k: f64, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    let r = |x, y| bifractional_covariance(h, k, x, y);
    (r(b1, b2) - r(a1, b2)) - (r(b1, a2) - r(a1, a2))
}

/// Gram matrix of a kernel on a grid, scaled by the cell volume.
#[derive(Debug, Clone)]
pub struct Gram {
    pub grid: SpaceGrid,
    pub matrix: DMatrix<f64>,
}

/// Assembles `M_ij = q(z_i, z_j) * dV`.
///
/// The bifractional kernel is singular on the diagonal, so for it every
/// entry is the exact cell average, `M_ij = (1/dV) * int_{cell i x cell j} q`,
/// which is the covariance of cell increments of the bifractional process
/// and therefore positive semidefinite.
pub fn assemble_gram(kernel: &Kernel, grid: &SpaceGrid) -> Result<Gram> {
    if grid.dim() > kernel.max_dim() {
        return Err(invalid(format!("{:?} kernel is not defined in dimension {}", kernel.kind, grid.dim())));
    }
    let n = grid.len();
    let dv = grid.cell_volume();
    let nodes = grid.nodes();
    let d = grid.dim();

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| match kernel.kind {
                    KernelKind::BifractionalDerivative { h, k } => {
                        let half = 0.5 * dv;
                        let (xi, xj) = (nodes[i][0], nodes[j][0]);
                        Ok(bifractional_cell_integral(h, k, xi - half, xi + half, xj - half, xj + half) / dv)
                    }
                    _ => kernel.eval(&nodes[i][..d], &nodes[j][..d]).map(|q| q * dv),
                })
                .collect()
        })
        .collect();

    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row?.into_iter().enumerate() {
            let j = i + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    for i in 0..n {
        if !(m[(i, i)] >= 0.0) {
            return Err(invalid(format!("negative kernel diagonal {} at node {i}", m[(i, i)])));
        }
    }
    Ok(Gram { grid: grid.clone(), matrix: m })
}

/// Eigen square root `C` of a Gram matrix, `C C^T ~ M`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    pub grid: SpaceGrid,
    pub gram: DMatrix<f64>,
    /// `n x r`, columns `sqrt(lambda_k) e_k` for the retained eigenvalues.
    pub factor: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Number of negative eigenvalues set to zero.
    pub eigen_clip_count: usize,
    /// `max |C C^T - M|`.
    pub reconstruction_error: f64,
    pub clip_tol: f64,
}

/// Eigendecomposition with eigenvalues below `clip_tol * lambda_max` set to zero.
pub fn factorize_sqrt(gram: Gram, clip_tol: f64) -> Result<GramFactor> {
    let n = gram.matrix.nrows();
    if gram.matrix.ncols() != n {
        return Err(invalid("Gram matrix must be square"));
    }
    let eig = SymmetricEigen::new(gram.matrix.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lambda_max > 0.0) {
        return Err(Error::AllEigenvaluesClipped { max_eigenvalue: lambda_max });
    }
    let cutoff = clip_tol * lambda_max;
    let mut order: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > cutoff).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigen_clip_count = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();

    let r = order.len();
    let mut c = DMatrix::zeros(n, r);
    let mut kept = Vec::with_capacity(r);
    for (col, &k) in order.iter().enumerate() {
        let lam = eig.eigenvalues[k];
        kept.push(lam);
        let s = lam.sqrt();
        for i in 0..n {
            c[(i, col)] = s * eig.eigenvectors[(i, k)];
        }
    }
    let recon = &c * c.transpose();
    let reconstruction_error = (recon - &gram.matrix).amax();
    Ok(GramFactor {
        grid: gram.grid,
        gram: gram.matrix,
        factor: c,
        eigenvalues: kept,
        eigen_clip_count,
        reconstruction_error,
        clip_tol,
    })
}

impl GramFactor {
    pub fn build(kernel: &Kernel, grid: &SpaceGrid, clip_tol: f64) -> Result<Self> {
        factorize_sqrt(assemble_gram(kernel, grid)?, clip_tol)
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `C C^T`, the PSD projection of the Gram matrix.
    pub fn projected_gram(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Covariance of the noise density at the nodes, `C C^T / dV`.
    pub fn density_covariance(&self) -> DMatrix<f64> {
        self.projected_gram() / self.grid.cell_volume()
    }

    /// Diagonal of [`Self::density_covariance`].
    pub fn density_variance(&self) -> Vec<f64> {
        let dv = self.grid.cell_volume();
        self.factor.row_iter().map(|r| r.norm_squared() / dv).collect()
    }
}

/// Outcome of [`check_h1a`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1aReport {
    /// Regression slope of `log sup_x I(t)` against `log t`.
    pub gamma: f64,
    pub times: Vec<f64>,
    /// `sup_x int int p_t(x-z1) p_t(x-z2) |q(z1,z2)| dz1 dz2` per time.
    pub sups: Vec<f64>,
    /// Number of interior nodes the supremum was taken over.
    pub interior_nodes: usize,
}

/// Quadrature weights `p_t(x - z_j) dV` for a single evaluation node.
fn heat_weights(grid: &SpaceGrid, x: &[f64], t: f64) -> Vec<f64> {
    let dv = grid.cell_volume();
    let d = grid.dim() as i32;
    let norm = (2.0 * PI * t).powi(-d).sqrt();
    (0..grid.len())
        .map(|j| {
            let z = grid.node(j);
            norm * (-0.5 * dist2(x, &z[..grid.dim()]) / t).exp() * dv
        })
        .collect()
}

/// Nodes at least `margin` away from every face of the box.
fn interior_nodes(grid: &SpaceGrid, margin: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let x = grid.node(i);
            grid.axes().iter().zip(x.iter()).all(|(a, &c)| c - a.lower >= margin && a.upper - c >= margin)
        })
        .collect()
}

/// `sup_x` of the double convolution at each time, over the given nodes.
fn double_convolution_sups(grid: &SpaceGrid, abs_gram: &DMatrix<f64>, nodes: &[usize], times: &[f64]) -> Vec<f64> {
    let dv = grid.cell_volume();
    let d = grid.dim();
    times
        .iter()
        .map(|&t| {
            let mut w = DMatrix::zeros(grid.len(), nodes.len());
            for (c, &i) in nodes.iter().enumerate() {
                let x = grid.node(i);
                let col = heat_weights(grid, &x[..d], t);
                for (j, v) in col.into_iter().enumerate() {
                    w[(j, c)] = v;
                }
            }
            let qw = abs_gram * &w;
            (0..nodes.len()).map(|c| w.column(c).dot(&qw.column(c)) / dv).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Estimates the small-time exponent `gamma` by grid quadrature of the double
/// heat-kernel convolution of `|q|` and a log-log regression over `times`.
///
/// The supremum runs over nodes at least `5 sqrt(t_max)` from the box faces.
/// The smallest time is recomputed on a grid with half the resolution; a
/// relative change above 50% is reported as [`Error::NonFiniteQuadrature`].
pub fn check_h1a(kernel: &Kernel, grid: &SpaceGrid, times: &[f64]) -> Result<H1aReport> {
    if times.len() < 8 {
        return Err(invalid(format!("check_h1a needs at least 8 times, got {}", times.len())));
    }
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(invalid("check_h1a times must be positive"));
    }
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    if t_max / t_min < 10.0 {
        return Err(invalid("check_h1a times must span at least one decade"));
    }
    let margin = 5.0 * t_max.sqrt();
    let nodes = interior_nodes(grid, margin);
    if nodes.is_empty() {
        return Err(invalid(format!("no node lies {margin:.3} inside the box; widen the grid")));
    }
    let gram = assemble_gram(kernel, grid)?;
    let abs_gram = gram.matrix.abs();
    let sups = double_convolution_sups(grid, &abs_gram, &nodes, times);
    if let Some(bad) = sups.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(Error::NonFiniteQuadrature(format!("double convolution evaluated to {bad}")));
    }

    let coarse_points: Vec<usize> = grid.axes().iter().map(|a| a.points.div_ceil(2).max(2)).collect();
    let coarse = grid.with_points(&coarse_points)?;
    let coarse_nodes = interior_nodes(&coarse, margin);
    if !coarse_nodes.is_empty() {
        let cg = assemble_gram(kernel, &coarse)?.matrix.abs();
        let fine = sups[times.iter().position(|&t| t == t_min).unwrap()];
        let c = double_convolution_sups(&coarse, &cg, &coarse_nodes, &[t_min])[0];
        if !c.is_finite() || ((c - fine) / fine).abs() > 0.5 {
            return Err(Error::NonFiniteQuadrature(format!(
                "at t={t_min:e} the quadrature moved from {c:e} to {fine:e} under refinement"
            )));
        }
    }

    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let (gamma, _) = linear_fit(&lx, &ly);
    Ok(H1aReport { gamma, times: times.to_vec(), sups, interior_nodes: nodes.len() })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GrowthReport {
    pub bounded: bool,
    /// `max |q(x,y)| / (1 + |x|^beta + |y|^beta)` over non-singular grid pairs.
    pub constant: f64,
    pub beta: f64,
}

/// Checks the growth bound with the kernel's declared `beta`.
pub fn check_growth(kernel: &Kernel, grid: &SpaceGrid) -> GrowthReport {
    let d = grid.dim();
    let nodes = grid.nodes();
    let beta = kernel.beta;
    let norm = |p: &[f64]| p.iter().map(|c| c * c).sum::<f64>().sqrt();
    let constant = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut m = 0.0f64;
            for j in 0..nodes.len() {
                let (x, y) = (&nodes[i][..d], &nodes[j][..d]);
                match kernel.eval(x, y) {
                    Ok(q) => {
                        let r = q.abs() / (1.0 + norm(x).powf(beta) + norm(y).powf(beta));
                        m = if r.is_nan() { f64::INFINITY } else { m.max(r) };
                    }
                    Err(_) => continue,
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    GrowthReport { bounded: constant.is_finite(), constant, beta }
}
