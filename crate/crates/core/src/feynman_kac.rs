//! Monte Carlo evaluation of the Feynman-Kac representation
//!
//! `V(t,x) = E^B[ h(x + B_t) exp( int_0^t F(dr, x + B_t - B_r)
//!                               - 1/2 int_0^t abar(r, x + B_t - B_r) dr ) ]`
//!
//! for a semimartingale field `F` built from a noise lattice (quenched) or
//! from a spatially flat Gaussian noise with constant covariance `q0`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{fill_brownian, BrownianPath, NoiseLattice};
use crate::grid::{Point, TimeGrid};
use crate::kernel::{assemble_gram, Kernel};
use crate::rng::{derive_seed, rng, Stream};
use crate::semigroup::HeatSemigroup;
use crate::stats::{mean_and_std_error, pairwise_sum};

/// A function of `(t, y)`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Initial data `h` of the linear equation.
pub type InitialFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Clone)]
pub enum ModelMode {
    /// `F(dt, y) = b(t, y) dt + s(t, y) W1(dt, y)` on a fixed lattice;
    /// `abar(t, y) = s(t, y)^2 q(y, y)`.
    Quenched {
        lattice: Arc<NoiseLattice>,
        kernel: Kernel,
        drift: SpaceTimeFn,
        multiplier: SpaceTimeFn,
        /// Nodal values replacing `q(y, y)`, interpolated multilinearly.
        diagonal: Option<Arc<Vec<f64>>>,
    },
    /// `F(dt, y) = drift dt + w(dt)` with a flat noise `w` of variance `q0 t`.
    ConstantCovariance { q0: f64, drift: f64, time_grid: TimeGrid, increments: Arc<Vec<f64>> },
}

#[derive(Clone)]
pub struct SemimartingaleModel {
    pub mode: ModelMode,
    /// Whether the `-1/2 int abar` compensator enters the weight. Only
    /// negative controls turn it off.
    pub compensated: bool,
}

impl std::fmt::Debug for SemimartingaleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.mode {
            ModelMode::Quenched { kernel, lattice, .. } => f
                .debug_struct("Quenched")
                .field("kernel", kernel)
                .field("lattice_seed", &lattice.seed)
                .field("compensated", &self.compensated)
                .finish(),
            ModelMode::ConstantCovariance { q0, drift, .. } => f
                .debug_struct("ConstantCovariance")
                .field("q0", q0)
                .field("drift", drift)
                .field("compensated", &self.compensated)
                .finish(),
        }
    }
}

fn zero_fn() -> SpaceTimeFn {
    Arc::new(|_, _| 0.0)
}

impl SemimartingaleModel {
    /// Quenched model with unit multiplier and zero drift. Fails when the
    /// kernel diagonal is singular; supply nodal values with [`Self::with_diagonal`].
    pub fn quenched(lattice: Arc<NoiseLattice>, kernel: Kernel) -> Result<Self> {
        if lattice.space_grid.dim() > kernel.max_dim() {
            return Err(invalid("kernel is not defined in the lattice dimension"));
        }
        let d = lattice.space_grid.dim();
        let probe = lattice.space_grid.node(0);
        let diagonal = match kernel.diagonal(&probe[..d]) {
            Ok(_) => None,
            Err(_) => {
                let gram = assemble_gram(&kernel, &lattice.space_grid)?;
                let dv = lattice.space_grid.cell_volume();
                Some(Arc::new((0..gram.matrix.nrows()).map(|i| gram.matrix[(i, i)] / dv).collect()))
            }
        };
        Ok(Self {
            mode: ModelMode::Quenched { lattice, kernel, drift: zero_fn(), multiplier: Arc::new(|_, _| 1.0), diagonal },
            compensated: true,
        })
    }

    pub fn with_drift(mut self, f: SpaceTimeFn) -> Self {
        if let ModelMode::Quenched { drift, .. } = &mut self.mode {
            *drift = f;
        }
        self
    }

    pub fn with_multiplier(mut self, f: SpaceTimeFn) -> Self {
        if let ModelMode::Quenched { multiplier, .. } = &mut self.mode {
            *multiplier = f;
        }
        self
    }

    pub fn with_diagonal(mut self, nodal: Vec<f64>) -> Self {
        if let ModelMode::Quenched { diagonal, .. } = &mut self.mode {
            *diagonal = Some(Arc::new(nodal));
        }
        self
    }

    /// Flat-noise model with increments drawn from `seed`.
    pub fn constant_covariance(q0: f64, drift: f64, time_grid: TimeGrid, seed: u64) -> Result<Self> {
        if !(q0 >= 0.0) {
            return Err(invalid(format!("q0 must be nonnegative, got {q0}")));
        }
        use rand_distr::{Distribution, StandardNormal};
        let mut g = rng(seed, Stream::Outer, 0);
        let sd = (q0 * time_grid.dt()).sqrt();
        let increments = (0..time_grid.steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut g);
                sd * z
            })
            .collect();
        Ok(Self::constant_covariance_from(q0, drift, time_grid, increments))
    }

    pub fn constant_covariance_from(q0: f64, drift: f64, time_grid: TimeGrid, increments: Vec<f64>) -> Self {
        Self {
            mode: ModelMode::ConstantCovariance { q0, drift, time_grid, increments: Arc::new(increments) },
            compensated: true,
        }
    }

    /// `F = 0`.
    pub fn zero(time_grid: TimeGrid) -> Self {
        Self::constant_covariance_from(0.0, 0.0, time_grid, vec![0.0; time_grid.steps])
    }

    /// Negative control: the same model without the `abar` compensator.
    pub fn without_compensator(mut self) -> Self {
        self.compensated = false;
        self
    }

    pub fn time_grid(&self) -> TimeGrid {
        match &self.mode {
            ModelMode::Quenched { lattice, .. } => lattice.time_grid,
            ModelMode::ConstantCovariance { time_grid, .. } => *time_grid,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.mode {
            ModelMode::Quenched { lattice, .. } => Some(lattice.space_grid.dim()),
            ModelMode::ConstantCovariance { .. } => None,
        }
    }

    /// Flat noise total `w_t` up to grid time index `m`.
    pub fn flat_noise_total(&self, m: usize) -> Option<f64> {
        match &self.mode {
            ModelMode::ConstantCovariance { increments, .. } => Some(pairwise_sum(&increments[..m])),
            _ => None,
        }
    }

    fn abar_at(&self, t: f64, y: &[f64]) -> Result<f64> {
        match &self.mode {
            ModelMode::Quenched { lattice, kernel, multiplier, diagonal, .. } => {
                let s = multiplier(t, y);
                let q = match diagonal {
                    Some(nodal) => {
                        lattice.space_grid.interpolate(nodal, y).ok_or_else(|| Error::OutOfBox { point: y.to_vec() })?
                    }
                    None => kernel.diagonal(y)?,
                };
                Ok(s * s * q)
            }
            ModelMode::ConstantCovariance { q0, .. } => Ok(*q0),
        }
    }

    /// Largest ratios `|abar(t,y)| / (1 + 2|y|^beta)` and
    /// `|b(t,y)| / (1 + |y|^beta)` over the lattice nodes and times: the
    /// constant `C` of the growth conditions on the local characteristics.
    pub fn characteristics_bound(&self, beta: f64) -> Result<f64> {
        match &self.mode {
            ModelMode::ConstantCovariance { q0, drift, .. } => Ok(q0.abs().max(drift.abs())),
            ModelMode::Quenched { lattice, drift, .. } => {
                let g = &lattice.space_grid;
                let d = g.dim();
                let mut c = 0.0f64;
                for k in 0..=lattice.time_grid.steps {
                    let t = lattice.time_grid.time(k);
                    for i in 0..g.len() {
                        let y = g.node(i);
                        let r = y[..d].iter().map(|v| v * v).sum::<f64>().sqrt().powf(beta);
                        c = c.max(self.abar_at(t, &y[..d])?.abs() / (1.0 + 2.0 * r));
                        c = c.max(drift(t, &y[..d]).abs() / (1.0 + r));
                    }
                }
                Ok(c)
            }
        }
    }
}

/// Log-weight pieces along one path, with `positions` the `(m+1) x dim`
/// Brownian samples on the model's time grid.
fn path_integrals(
    model: &SemimartingaleModel,
    positions: &[f64],
    dim: usize,
    m: usize,
    x: &[f64],
) -> Result<(f64, f64)> {
    let tg = model.time_grid();
    let dt = tg.dt();
    match &model.mode {
        ModelMode::ConstantCovariance { q0, drift, increments, .. } => {
            let t = tg.time(m);
            Ok((pairwise_sum(&increments[..m]) + drift * t, q0 * t))
        }
        ModelMode::Quenched { lattice, drift, multiplier, .. } => {
            let end = &positions[m * dim..(m + 1) * dim];
            let mut y = [0.0; 2];
            let mut stoch = 0.0;
            let mut abar = 0.0;
            for k in 0..m {
                for c in 0..dim {
                    y[c] = x[c] + end[c] - positions[k * dim + c];
                }
                let y = &y[..dim];
                let tk = tg.time(k);
                let dw = lattice
                    .space_grid
                    .interpolate(lattice.row(k), y)
                    .ok_or_else(|| Error::OutOfBox { point: y.to_vec() })?;
                stoch += multiplier(tk, y) * dw + drift(tk, y) * dt;
                abar += model.abar_at(tk, y)? * dt;
            }
            Ok((stoch, abar))
        }
    }
}

/// `(int F(dr, x + B_t - B_r), int abar(r, x + B_t - B_r) dr)` by the left-point rule.
pub fn backward_weight(model: &SemimartingaleModel, path: &BrownianPath, x: &[f64], t: f64) -> Result<(f64, f64)> {
    let tg = model.time_grid();
    if (path.time_grid.dt() - tg.dt()).abs() > 1e-12 * tg.dt() {
        return Err(invalid("path and model time grids have different steps"));
    }
    let m = path
        .time_grid
        .index_of(t)
        .filter(|&m| m <= tg.steps)
        .ok_or_else(|| invalid(format!("t={t} is not a grid time of the path")))?;
    path_integrals(model, &path.positions, path.dim, m, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    /// Accepted paths.
    pub n_paths: usize,
    pub rejected_paths: usize,
    pub max_log_weight: f64,
    pub ess: f64,
}

/// Largest tolerated fraction of paths leaving the lattice box.
const MAX_REJECTED_FRACTION: f64 = 0.01;

/// Monte Carlo estimate of `V(t, x)` from `n_paths` Brownian paths.
/// Deterministic in `rng_seed` and independent of the thread count.
pub fn fk_estimate(
    h: InitialFn<'_>,
    model: &SemimartingaleModel,
    t: f64,
    x: &[f64],
    n_paths: usize,
    rng_seed: u64,
) -> Result<FkEstimate> {
    if n_paths < 2 {
        return Err(invalid("fk_estimate needs at least two paths"));
    }
    let dim = match model.dim() {
        Some(d) => {
            if x.len() != d {
                return Err(invalid(format!("point has {} coordinates, lattice has {d}", x.len())));
            }
            d
        }
        None => x.len(),
    };
    let tg = model.time_grid();
    let m = tg.index_of(t).ok_or_else(|| invalid(format!("t={t} is not a grid time of the model")))?;
    if m == 0 {
        return Ok(FkEstimate {
            t,
            x: x.to_vec(),
            mean: h(x),
            std_error: 0.0,
            n_paths,
            rejected_paths: 0,
            max_log_weight: 0.0,
            ess: n_paths as f64,
        });
    }

    let samples: Vec<Result<Option<(f64, f64)>>> = (0..n_paths)
        .into_par_iter()
        .map_init(Vec::new, |positions, i| {
            let mut g = rng(rng_seed, Stream::Brownian, i as u64);
            fill_brownian(&mut g, dim, m, tg.dt(), positions);
            match path_integrals(model, positions, dim, m, x) {
                Ok((stoch, abar)) => {
                    let lw = if model.compensated { stoch - 0.5 * abar } else { stoch };
                    let mut end = [0.0; 2];
                    for c in 0..dim {
                        end[c] = x[c] + positions[m * dim + c];
                    }
                    Ok(Some((lw, h(&end[..dim]))))
                }
                Err(Error::OutOfBox { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut accepted = Vec::with_capacity(n_paths);
    for s in samples {
        if let Some(v) = s? {
            accepted.push(v);
        }
    }
    let rejected = n_paths - accepted.len();
    if rejected as f64 > MAX_REJECTED_FRACTION * n_paths as f64 || accepted.len() < 2 {
        return Err(Error::BoxTooSmall { rejected, total: n_paths });
    }
    weighted_estimate(t, x, &accepted, rejected)
}

/// Mean of `value * exp(log_weight)` with a max-shift before exponentiation.
fn weighted_estimate(t: f64, x: &[f64], samples: &[(f64, f64)], rejected: usize) -> Result<FkEstimate> {
    let shift = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = samples.iter().map(|s| (s.0 - shift).exp()).collect();
    let vals: Vec<f64> = samples.iter().zip(&w).map(|(s, w)| s.1 * w).collect();
    let sw = pairwise_sum(&w);
    let sw2 = pairwise_sum(&w.iter().map(|v| v * v).collect::<Vec<_>>());
    let ess = sw * sw / sw2;
    if !(ess >= 10.0) {
        return Err(Error::DegenerateWeights { ess });
    }
    let (m, se) = mean_and_std_error(&vals);
    let scale = shift.exp();
    Ok(FkEstimate {
        t,
        x: x.to_vec(),
        mean: m * scale,
        std_error: se * scale,
        n_paths: samples.len(),
        rejected_paths: rejected,
        max_log_weight: shift,
        ess,
    })
}

/// [`fk_estimate`] at several `(t, x)` with seeds `derive_seed(seed, index)`.
pub fn fk_solve_linear(
    h: InitialFn<'_>,
    model: &SemimartingaleModel,
    points: &[(f64, Point)],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<FkEstimate>> {
    let d = model.dim().unwrap_or(1);
    let mut out = Vec::with_capacity(points.len());
    let mut errors = Vec::new();
    for (i, (t, x)) in points.iter().enumerate() {
        match fk_estimate(h, model, *t, &x[..d], n_paths, derive_seed(seed, i as u64)) {
            Ok(e) => out.push(e),
            Err(e) => errors.push((i, e)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Aggregate(errors))
    }
}

/// Annealed mean of `V(t, x)` for the flat-noise model: average over
/// `n_outer` independent noise draws of the quenched estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_outer: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn fk_annealed_constant(
    h: InitialFn<'_>,
    q0: f64,
    time_grid: TimeGrid,
    t: f64,
    x: &[f64],
    n_outer: usize,
    n_paths: usize,
    seed: u64,
    compensated: bool,
) -> Result<AnnealedEstimate> {
    let outer: Vec<Result<f64>> = (0..n_outer)
        .into_par_iter()
        .map(|j| {
            let mut model = SemimartingaleModel::constant_covariance(q0, 0.0, time_grid, derive_seed(seed, j as u64))?;
            model.compensated = compensated;
            fk_estimate(h, &model, t, x, n_paths, derive_seed(seed ^ 0x5151, j as u64)).map(|e| e.mean)
        })
        .collect();
    let vals = outer.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, std_error) = mean_and_std_error(&vals);
    Ok(AnnealedEstimate { mean, std_error, n_outer })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifiedEstimate {
    /// Variance of the smoothing heat kernel `p_eps`.
    pub eps: f64,
    pub estimate: FkEstimate,
}

/// FK estimates with the lattice smoothed by `p_eps` for each `eps`.
///
/// The compensator uses the diagonal of the smoothed covariance,
/// `diag(P_eps Q P_eps)`, so each entry is itself a consistent FK weight.
/// `eps = 0` runs the unmodified model.
#[allow(clippy::too_many_arguments)]
pub fn mollification_study(
    model: &SemimartingaleModel,
    h: InitialFn<'_>,
    t: f64,
    x: &[f64],
    epsilons: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MollifiedEstimate>> {
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e >= 0.0)) {
        return Err(invalid("epsilons must be nonnegative and strictly decreasing"));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let m = if eps == 0.0 { model.clone() } else { mollify(model, eps)? };
            Ok(MollifiedEstimate { eps, estimate: fk_estimate(h, &m, t, x, n_paths, seed)? })
        })
        .collect()
}

fn mollify(model: &SemimartingaleModel, eps: f64) -> Result<SemimartingaleModel> {
    match &model.mode {
        ModelMode::ConstantCovariance { .. } => Ok(model.clone()),
        ModelMode::Quenched { lattice, kernel, drift, multiplier, .. } => {
            let grid = &lattice.space_grid;
            let n = grid.len();
            let p = HeatSemigroup::new(grid, eps);
            let q = assemble_gram(kernel, grid)?.matrix / grid.cell_volume();
            // columns of P Q, then rows of P (P Q)^T
            let mut pq = vec![0.0; n * n];
            let mut scratch = Vec::new();
            let mut col = vec![0.0; n];
            let mut out = vec![0.0; n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = q[(i, j)];
                }
                p.apply_into(&col, &mut out, &mut scratch);
                for i in 0..n {
                    pq[j * n + i] = out[i];
                }
            }
            let mut diag = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    col[j] = pq[j * n + i];
                }
                p.apply_into(&col, &mut out, &mut scratch);
                diag[i] = out[i];
            }
            Ok(SemimartingaleModel {
                mode: ModelMode::Quenched {
                    lattice: Arc::new(lattice.smoothed(eps)),
                    kernel: *kernel,
                    drift: drift.clone(),
                    multiplier: multiplier.clone(),
                    diagonal: Some(Arc::new(diag)),
                },
                compensated: model.compensated,
            })
        }
    }
}
