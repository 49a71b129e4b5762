//! Malliavin-norm diagnostics for the law of `u(t, x)`.
//!
//! `F = ||D u(t,x)||^2 = int_0^t H(s) ds` with
//!
//! `H(s) = E^{B, B~}[ q(x + B_{t-s}, x + B~_{t-s}) sigma(u(s, x + B_{t-s}))
//!          sigma(u(s, x + B~_{t-s})) exp(Y(s,t;B) + Y(s,t;B~)) ]`
//!
//! where `Y(s,t;B) = sum_r [ b'(u) dt + sigma'(u) dW1 - 1/2 sigma'(u)^2 q(y,y) dt ]`
//! along `y_r = x + B_{t-s} - B_{r-s}`, evaluated on a precomputed grid
//! solution and the lattice that produced it. The compensator is taken at
//! `(r, x + B_{t-s} - B_{r-s})`, matching the Feynman-Kac weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::Coefficients;
use crate::error::{invalid, Error, Result};
use crate::field::{fill_brownian, NoiseLattice};
use crate::grid::{Point, SpaceGrid};
use crate::grid_solver::FieldSolution;
use crate::kernel::{assemble_gram, Kernel};
use crate::rng::{rng, Stream};
use crate::stats::{mean_and_std_error, pairwise_sum, quantile_sorted, sample_std, trapezoid_weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nondegeneracy {
    pub holds: bool,
    pub witness: Option<Point>,
}

/// First grid node with `q(x0, x0) > 0` and `sigma(u0(x0)) != 0`.
pub fn nondegeneracy_check(kernel: &Kernel, coeffs: &Coefficients, grid: &SpaceGrid) -> Nondegeneracy {
    let d = grid.dim();
    let witness = (0..grid.len()).map(|i| grid.node(i)).find(|x| {
        let x = &x[..d];
        kernel.diagonal_positive(x) && coeffs.diffusion.eval(coeffs.u0(x)) != 0.0
    });
    Nondegeneracy { holds: witness.is_some(), witness }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HSample {
    pub s: f64,
    pub value: f64,
    pub std_error: f64,
}

/// `q(y, y)` either from the kernel or, for a singular diagonal, from the
/// cell-averaged Gram diagonal interpolated on the grid.
enum Diagonal<'a> {
    Kernel(&'a Kernel),
    Nodal(&'a SpaceGrid, Vec<f64>),
}

impl Diagonal<'_> {
    fn new<'a>(kernel: &'a Kernel, grid: &'a SpaceGrid) -> Result<Diagonal<'a>> {
        let probe = grid.node(0);
        if kernel.diagonal(&probe[..grid.dim()]).is_ok() {
            return Ok(Diagonal::Kernel(kernel));
        }
        let g = assemble_gram(kernel, grid)?;
        let dv = grid.cell_volume();
        Ok(Diagonal::Nodal(grid, (0..grid.len()).map(|i| g.matrix[(i, i)] / dv).collect()))
    }

    fn at(&self, y: &[f64]) -> Result<f64> {
        match self {
            Diagonal::Kernel(k) => k.diagonal(y),
            Diagonal::Nodal(g, v) => g.interpolate(v, y).ok_or_else(|| Error::OutOfBox { point: y.to_vec() }),
        }
    }

    /// `q(a, b)`, with the diagonal rule when the points coincide.
    fn pair(&self, kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
        if a == b {
            self.at(a)
        } else {
            kernel.eval(a, b)
        }
    }
}

struct HContext<'a> {
    kernel: &'a Kernel,
    coeffs: &'a Coefficients,
    solution: &'a FieldSolution,
    lattice: &'a NoiseLattice,
    diagonal: Diagonal<'a>,
    x: &'a [f64],
    dim: usize,
}

impl HContext<'_> {
    /// `Y(s,t;B)` for the path `positions` (`len + 1` samples) starting at step `j`.
    fn log_weight(&self, positions: &[f64], j: usize, len: usize) -> Result<f64> {
        let dim = self.dim;
        let dt = self.lattice.time_grid.dt();
        let end = &positions[len * dim..(len + 1) * dim];
        let mut y = [0.0; 2];
        let mut acc = 0.0;
        for step in 0..len {
            for c in 0..dim {
                y[c] = self.x[c] + end[c] - positions[step * dim + c];
            }
            let y = &y[..dim];
            let r = j + step;
            let u = self.solution.interpolate_at_step(r, y)?;
            let ds = self.coeffs.diffusion.derivative(u);
            let db = self.coeffs.drift.derivative(u);
            let dw = self
                .lattice
                .space_grid
                .interpolate(self.lattice.row(r), y)
                .ok_or_else(|| Error::OutOfBox { point: y.to_vec() })?;
            acc += db * dt + ds * dw - 0.5 * ds * ds * self.diagonal.at(y)? * dt;
        }
        Ok(acc)
    }

    fn sample(&self, j: usize, len: usize, pb: &[f64], pt: &[f64]) -> Result<(f64, f64)> {
        let dim = self.dim;
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        for c in 0..dim {
            a[c] = self.x[c] + pb[len * dim + c];
            b[c] = self.x[c] + pt[len * dim + c];
        }
        let (a, b) = (&a[..dim], &b[..dim]);
        let sig =
            |p: &[f64]| -> Result<f64> { Ok(self.coeffs.diffusion.eval(self.solution.interpolate_at_step(j, p)?)) };
        let g = self.diagonal.pair(self.kernel, a, b)? * sig(a)? * sig(b)?;
        let lw = self.log_weight(pb, j, len)? + self.log_weight(pt, j, len)?;
        Ok((lw, g))
    }
}

fn check_inputs(solution: &FieldSolution, lattice: &NoiseLattice, x: &[f64]) -> Result<()> {
    if solution.space_grid != lattice.space_grid || solution.time_grid != lattice.time_grid {
        return Err(invalid("grid solution must be a full recording on the lattice grids"));
    }
    if x.len() != lattice.space_grid.dim() {
        return Err(invalid("point dimension does not match the grid"));
    }
    Ok(())
}

/// Monte Carlo estimate of `H(s)` from `n_paths` independent pairs `(B, B~)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_h(
    s: f64,
    t: f64,
    x: &[f64],
    kernel: &Kernel,
    coeffs: &Coefficients,
    solution: &FieldSolution,
    lattice: &NoiseLattice,
    n_paths: usize,
    seed: u64,
) -> Result<HSample> {
    check_inputs(solution, lattice, x)?;
    let tg = lattice.time_grid;
    let j = tg.index_of(s).ok_or_else(|| invalid(format!("s={s} is not a grid time")))?;
    let m = tg.index_of(t).ok_or_else(|| invalid(format!("t={t} is not a grid time")))?;
    if j >= m {
        return Err(invalid(format!("estimate_h needs s < t, got s={s}, t={t}")));
    }
    if n_paths < 2 {
        return Err(invalid("estimate_h needs at least two path pairs"));
    }
    let ctx = HContext {
        kernel,
        coeffs,
        solution,
        lattice,
        diagonal: Diagonal::new(kernel, &lattice.space_grid)?,
        x,
        dim: x.len(),
    };
    let len = m - j;
    let dt = tg.dt();
    let samples: Vec<Result<Option<(f64, f64)>>> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(pb, pt), i| {
                fill_brownian(&mut rng(seed, Stream::Brownian, i as u64), ctx.dim, len, dt, pb);
                fill_brownian(&mut rng(seed, Stream::BrownianTilde, i as u64), ctx.dim, len, dt, pt);
                match ctx.sample(j, len, pb, pt) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::OutOfBox { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            },
        )
        .collect();
    let mut accepted = Vec::with_capacity(n_paths);
    for r in samples {
        if let Some(v) = r? {
            accepted.push(v);
        }
    }
    let rejected = n_paths - accepted.len();
    if rejected as f64 > 0.01 * n_paths as f64 || accepted.len() < 2 {
        return Err(Error::BoxTooSmall { rejected, total: n_paths });
    }
    let shift = accepted.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = accepted.iter().map(|v| (v.0 - shift).exp()).collect();
    let sw = pairwise_sum(&w);
    let ess = sw * sw / pairwise_sum(&w.iter().map(|v| v * v).collect::<Vec<_>>());
    if !(ess >= 10.0) {
        return Err(Error::DegenerateWeights { ess });
    }
    let vals: Vec<f64> = accepted.iter().zip(&w).map(|(v, w)| v.1 * w).collect();
    let (mean, se) = mean_and_std_error(&vals);
    let scale = shift.exp();
    Ok(HSample { s, value: mean * scale, std_error: se * scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalliavinEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    /// `H(s)` on the s-grid followed by the limit `H(t) = q(x,x) sigma(u(t,x))^2`.
    pub h_values: Vec<HSample>,
    /// Trapezoid rule over `h_values`.
    pub f_estimate: f64,
    /// Sum of trapezoid-weighted standard errors; an upper bound whatever
    /// the correlation between the `H(s)` estimates.
    pub f_std_error: f64,
    /// `|T_h - T_2h|`, the change from dropping every other s-node.
    pub integration_error: f64,
    /// `integration_error + 3 sqrt(2) f_std_error`.
    pub error_bound: f64,
    pub n_paths: usize,
}

impl MalliavinEstimate {
    pub fn z_score(&self) -> f64 {
        if self.f_std_error > 0.0 {
            self.f_estimate / self.f_std_error
        } else if self.f_estimate > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// `F = int_0^t H(s) ds` by the trapezoid rule on `s_grid` plus the endpoint
/// limit at `s = t`. All `H(s)` share the seed, so the estimates use common
/// random numbers.
#[allow(clippy::too_many_arguments)]
pub fn malliavin_norm(
    t: f64,
    x: &[f64],
    kernel: &Kernel,
    coeffs: &Coefficients,
    solution: &FieldSolution,
    lattice: &NoiseLattice,
    s_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MalliavinEstimate> {
    check_inputs(solution, lattice, x)?;
    if s_grid.len() < 8 {
        return Err(invalid(format!("s-grid needs at least 8 points, got {}", s_grid.len())));
    }
    if s_grid[0] != 0.0 || s_grid.windows(2).any(|w| !(w[1] > w[0])) || *s_grid.last().unwrap() >= t {
        return Err(invalid("s-grid must start at 0, increase strictly and stay below t"));
    }
    let mut h_values = s_grid
        .iter()
        .map(|&s| estimate_h(s, t, x, kernel, coeffs, solution, lattice, n_paths, seed))
        .collect::<Result<Vec<_>>>()?;

    let m = lattice.time_grid.index_of(t).ok_or_else(|| invalid(format!("t={t} is not a grid time")))?;
    let diag = Diagonal::new(kernel, &lattice.space_grid)?.at(x)?;
    let sig = coeffs.diffusion.eval(solution.interpolate_at_step(m, x)?);
    h_values.push(HSample { s: t, value: diag * sig * sig, std_error: 0.0 });

    let ss: Vec<f64> = h_values.iter().map(|h| h.s).collect();
    let w = trapezoid_weights(&ss);
    let f_estimate = pairwise_sum(&w.iter().zip(&h_values).map(|(w, h)| w * h.value).collect::<Vec<_>>());
    let f_std_error = pairwise_sum(&w.iter().zip(&h_values).map(|(w, h)| w * h.std_error).collect::<Vec<_>>());

    let last = h_values.len() - 1;
    let coarse: Vec<usize> = (0..=last).filter(|&i| i % 2 == 0 || i == last).collect();
    let cs: Vec<f64> = coarse.iter().map(|&i| ss[i]).collect();
    let cw = trapezoid_weights(&cs);
    let coarse_f: f64 = cw.iter().zip(&coarse).map(|(w, &i)| w * h_values[i].value).sum();
    let integration_error = (f_estimate - coarse_f).abs();

    Ok(MalliavinEstimate {
        t,
        x: x.to_vec(),
        h_values,
        f_estimate,
        f_std_error,
        integration_error,
        error_bound: integration_error + 3.0 * 2f64.sqrt() * f_std_error,
        n_paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// `0.9 min(sd, IQR / 1.34) n^(-1/5)`
    Silverman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
    pub eval_grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        crate::stats::trapezoid(&self.eval_grid, &self.density)
    }
}

pub const MIN_KDE_SAMPLES: usize = 100;

pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let sd = sample_std(samples);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (samples.len() as f64).powf(-0.2)
}

/// `points` nodes spanning the samples plus five bandwidths on each side.
pub fn default_eval_grid(samples: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 5.0 * bandwidth;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 5.0 * bandwidth;
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

pub fn resolve_bandwidth(samples: &[f64], bandwidth: Bandwidth) -> Result<f64> {
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Silverman => silverman_bandwidth(samples),
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(h)
}

/// Gaussian kernel density estimate, normalized to unit trapezoid mass on `eval_grid`.
pub fn density_kde(samples: &[f64], bandwidth: Bandwidth, eval_grid: &[f64]) -> Result<DensityEstimate> {
    if samples.len() < MIN_KDE_SAMPLES {
        return Err(Error::TooFewSamples { got: samples.len(), need: MIN_KDE_SAMPLES });
    }
    if eval_grid.len() < 2 || eval_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("evaluation grid must have at least two increasing points"));
    }
    let h = resolve_bandwidth(samples, bandwidth)?;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * samples.len() as f64);
    let mut density: Vec<f64> = eval_grid
        .par_iter()
        .map(|&u| {
            let terms: Vec<f64> = samples.iter().map(|&s| (-0.5 * ((u - s) / h).powi(2)).exp()).collect();
            norm * pairwise_sum(&terms)
        })
        .collect();
    let mass = crate::stats::trapezoid(eval_grid, &density);
    if !(mass > 0.0) {
        return Err(invalid("evaluation grid carries no density mass"));
    }
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(DensityEstimate { samples: samples.to_vec(), bandwidth: h, eval_grid: eval_grid.to_vec(), density })
}
