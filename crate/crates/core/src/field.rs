//! Driving randomness: space-time noise lattices and Brownian paths.
//!
//! A [`NoiseLattice`] stores increments of the noise *density* `W1(t, z)`,
//! whose covariance is `(s ^ t) q(x, y)`. With the Gram matrix scaled by the
//! cell volume `dV`, row `k` is `sqrt(dt / dV) C xi_k`, so its covariance is
//! `dt C C^T / dV ~ dt q(z_i, z_j)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::kernel::GramFactor;
use crate::rng::{rng, Stream};
use crate::semigroup::HeatSemigroup;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLattice {
    pub time_grid: TimeGrid,
    pub space_grid: SpaceGrid,
    /// `steps x points`, row-major; row `k` is `W1(t_{k+1}, .) - W1(t_k, .)`.
    pub increments: Vec<f64>,
    pub seed: u64,
}

impl NoiseLattice {
    pub fn zeros(space_grid: &SpaceGrid, time_grid: TimeGrid) -> Self {
        Self {
            time_grid,
            space_grid: space_grid.clone(),
            increments: vec![0.0; time_grid.steps * space_grid.len()],
            seed: 0,
        }
    }

    pub fn points(&self) -> usize {
        self.space_grid.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.points();
        &self.increments[k * n..(k + 1) * n]
    }

    /// `W1(t_end, .)`: the sum of all rows.
    pub fn terminal(&self) -> Vec<f64> {
        let n = self.points();
        let mut w = vec![0.0; n];
        for k in 0..self.time_grid.steps {
            for (a, b) in w.iter_mut().zip(self.row(k)) {
                *a += b;
            }
        }
        w
    }

    /// Each row convolved with the heat kernel at time `variance` (the
    /// mollified field `p_eps * W1`).
    pub fn smoothed(&self, variance: f64) -> Self {
        let p = HeatSemigroup::new(&self.space_grid, variance);
        let n = self.points();
        let mut out = vec![0.0; self.increments.len()];
        out.par_chunks_mut(n).enumerate().for_each(|(k, dst)| {
            let mut scratch = Vec::new();
            p.apply_into(self.row(k), dst, &mut scratch);
        });
        Self { increments: out, ..self.clone() }
    }
}

/// Samples a lattice; deterministic in `rng_seed`. Each row uses its own
/// generator on the noise stream, so rows may be drawn in parallel.
pub fn sample_noise_lattice(factor: &GramFactor, time_grid: TimeGrid, rng_seed: u64) -> NoiseLattice {
    let n = factor.grid.len();
    let r = factor.rank();
    let scale = (time_grid.dt() / factor.grid.cell_volume()).sqrt();
    let mut increments = vec![0.0; time_grid.steps * n];
    increments.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
        let mut g = rng(rng_seed, Stream::Noise, k as u64);
        let xi: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut g)).collect();
        for (i, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (c, x) in xi.iter().enumerate() {
                s += factor.factor[(i, c)] * x;
            }
            *v = scale * s;
        }
    });
    NoiseLattice { time_grid, space_grid: factor.grid.clone(), increments, seed: rng_seed }
}

/// Interpolated increment of row `step` at `y`.
pub fn noise_increment_at(lattice: &NoiseLattice, step: usize, y: &[f64]) -> Result<f64> {
    lattice.space_grid.interpolate(lattice.row(step), y).ok_or_else(|| Error::OutOfBox { point: y.to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub time_grid: TimeGrid,
    pub dim: usize,
    /// `(steps + 1) x dim`, row-major, starting at the origin.
    pub positions: Vec<f64>,
    pub seed: u64,
}

impl BrownianPath {
    pub fn at(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }
}

/// Fills `positions` with a standard Brownian path on `steps` steps of size `dt`.
pub(crate) fn fill_brownian<R: rand::Rng>(g: &mut R, dim: usize, steps: usize, dt: f64, positions: &mut Vec<f64>) {
    positions.clear();
    positions.resize((steps + 1) * dim, 0.0);
    let sd = dt.sqrt();
    for k in 1..=steps {
        for c in 0..dim {
            let z: f64 = StandardNormal.sample(g);
            positions[k * dim + c] = positions[(k - 1) * dim + c] + sd * z;
        }
    }
}

pub fn sample_brownian_path(dim: usize, time_grid: TimeGrid, rng_seed: u64) -> Result<BrownianPath> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidInput(format!("Brownian dimension must be 1 or 2, got {dim}")));
    }
    let mut g = rng(rng_seed, Stream::Brownian, 0);
    let mut positions = Vec::new();
    fill_brownian(&mut g, dim, time_grid.steps, time_grid.dt(), &mut positions);
    Ok(BrownianPath { time_grid, dim, positions, seed: rng_seed })
}
