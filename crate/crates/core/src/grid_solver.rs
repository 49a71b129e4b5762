//! Exponential-Euler solver for the mild form of
//! `du = (1/2) Lap u dt + b(u) dt + sigma(u) W1(dt, x)`.
//!
//! One step is `u_{k+1} = P_dt u_k + dt P_dt b(u_k) + P_dt[sigma(u_k) dW_k]`
//! with the stochastic term evaluated at the left point (Ito).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::Coefficients;
use crate::error::{invalid, Error, Result};
use crate::field::{sample_noise_lattice, NoiseLattice};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::kernel::GramFactor;
use crate::semigroup::HeatSemigroup;

pub use crate::semigroup::heat_semigroup_apply;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMeta {
    pub scheme: String,
    /// Solver time step (not the recorded spacing).
    pub dt: f64,
    /// Solver node spacing per axis.
    pub dx: Vec<f64>,
    pub interpolation_order: u32,
    pub time_stride: usize,
    pub space_stride: usize,
}

/// Solution values on a (possibly subsampled) space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub time_grid: TimeGrid,
    pub space_grid: SpaceGrid,
    /// `(steps + 1) x points`, row-major.
    pub values: Vec<f64>,
    pub scheme: SchemeMeta,
    pub lattice_seed: u64,
}

impl FieldSolution {
    pub fn points(&self) -> usize {
        self.space_grid.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.points();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.points() + node]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.time_grid.steps)
    }

    /// Value at grid time index `k` and arbitrary point `y` (multilinear).
    pub fn interpolate_at_step(&self, k: usize, y: &[f64]) -> Result<f64> {
        self.space_grid.interpolate(self.row(k), y).ok_or_else(|| Error::OutOfBox { point: y.to_vec() })
    }

    /// Value at arbitrary `(t, y)`, linear in time and multilinear in space.
    pub fn interpolate(&self, t: f64, y: &[f64]) -> Result<f64> {
        let tg = self.time_grid;
        if !(0.0..=tg.t_end * (1.0 + 1e-12)).contains(&t) {
            return Err(invalid(format!("time {t} outside [0, {}]", tg.t_end)));
        }
        let s = (t / tg.dt()).min(tg.steps as f64);
        let k = (s.floor() as usize).min(tg.steps.saturating_sub(1));
        let f = s - k as f64;
        let a = self.interpolate_at_step(k, y)?;
        if f == 0.0 {
            return Ok(a);
        }
        let b = self.interpolate_at_step(k + 1, y)?;
        Ok((1.0 - f) * a + f * b)
    }
}

/// Which part of the trajectory to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub time_stride: usize,
    pub space_stride: usize,
}

impl Recording {
    pub const FULL: Recording = Recording { time_stride: 1, space_stride: 1 };

    fn grids(&self, space: &SpaceGrid, time: TimeGrid) -> Result<(SpaceGrid, TimeGrid, Vec<usize>)> {
        if self.time_stride == 0 || !time.steps.is_multiple_of(self.time_stride) {
            return Err(invalid(format!("time stride {} must divide the {} steps", self.time_stride, time.steps)));
        }
        let s = self.space_stride;
        if s == 0 || space.axes().iter().any(|a| (a.points - 1) % s != 0) {
            return Err(invalid(format!("space stride {s} must divide (points - 1) on every axis")));
        }
        let points: Vec<usize> = space.axes().iter().map(|a| (a.points - 1) / s + 1).collect();
        let sub = space.with_points(&points)?;
        let nodes: Vec<usize> = (0..sub.len())
            .map(|i| match space.dim() {
                1 => i * s,
                _ => {
                    let n1 = points[1];
                    space.index([(i / n1) * s, (i % n1) * s])
                }
            })
            .collect();
        let tg = TimeGrid::new(time.t_end, time.steps / self.time_stride)?;
        Ok((sub, tg, nodes))
    }
}

/// Precomputed `P_dt` for a grid and step size; reusable across replicas.
#[derive(Debug, Clone)]
pub struct MildSolver {
    coeffs: Coefficients,
    space_grid: SpaceGrid,
    time_grid: TimeGrid,
    step: HeatSemigroup,
}

impl MildSolver {
    pub fn new(coeffs: Coefficients, space_grid: &SpaceGrid, time_grid: TimeGrid) -> Result<Self> {
        coeffs.validate()?;
        Ok(Self {
            coeffs,
            space_grid: space_grid.clone(),
            time_grid,
            step: HeatSemigroup::new(space_grid, time_grid.dt()),
        })
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    fn meta(&self, rec: Recording) -> SchemeMeta {
        SchemeMeta {
            scheme: "exponential-euler".into(),
            dt: self.time_grid.dt(),
            dx: self.space_grid.axes().iter().map(|a| a.spacing()).collect(),
            interpolation_order: 1,
            time_stride: rec.time_stride,
            space_stride: rec.space_stride,
        }
    }

    fn check_lattice(&self, lattice: &NoiseLattice) -> Result<()> {
        if lattice.space_grid != self.space_grid || lattice.time_grid != self.time_grid {
            return Err(invalid("lattice grids do not match the solver grids"));
        }
        Ok(())
    }

    pub fn initial(&self) -> Vec<f64> {
        let d = self.space_grid.dim();
        self.space_grid.nodes().iter().map(|x| self.coeffs.u0(&x[..d])).collect()
    }

    /// Time stepping; returns one solution per requested recording.
    pub fn solve_recorded(&self, lattice: &NoiseLattice, recordings: &[Recording]) -> Result<Vec<FieldSolution>> {
        self.check_lattice(lattice)?;
        let layouts =
            recordings.iter().map(|r| r.grids(&self.space_grid, self.time_grid)).collect::<Result<Vec<_>>>()?;
        let mut outputs: Vec<Vec<f64>> =
            layouts.iter().map(|(sg, tg, _)| Vec::with_capacity((tg.steps + 1) * sg.len())).collect();
        let record = |k: usize, u: &[f64], outputs: &mut Vec<Vec<f64>>| {
            for ((rec, (_, _, nodes)), out) in recordings.iter().zip(&layouts).zip(outputs.iter_mut()) {
                if k.is_multiple_of(rec.time_stride) {
                    out.extend(nodes.iter().map(|&i| u[i]));
                }
            }
        };

        let n = self.space_grid.len();
        let dt = self.time_grid.dt();
        let mut u = self.initial();
        let mut forcing = vec![0.0; n];
        let mut scratch = Vec::new();
        record(0, &u, &mut outputs);
        for k in 0..self.time_grid.steps {
            let dw = lattice.row(k);
            for i in 0..n {
                forcing[i] = u[i] + dt * self.coeffs.drift.eval(u[i]) + self.coeffs.diffusion.eval(u[i]) * dw[i];
            }
            self.step.apply_into(&forcing, &mut u, &mut scratch);
            if let Some(i) = u.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: k + 1, node: i });
            }
            record(k + 1, &u, &mut outputs);
        }

        Ok(outputs
            .into_iter()
            .zip(layouts)
            .zip(recordings)
            .map(|((values, (sg, tg, _)), rec)| FieldSolution {
                time_grid: tg,
                space_grid: sg,
                values,
                scheme: self.meta(*rec),
                lattice_seed: lattice.seed,
            })
            .collect())
    }

    pub fn solve(&self, lattice: &NoiseLattice) -> Result<FieldSolution> {
        Ok(self.solve_recorded(lattice, &[Recording::FULL])?.remove(0))
    }

    /// One application of the discrete mild-solution map to a trajectory.
    fn picard_map(&self, lattice: &NoiseLattice, free: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.space_grid.len();
        let dt = self.time_grid.dt();
        let steps = self.time_grid.steps;
        let mut out = free.to_vec();
        let mut conv = vec![0.0; n];
        let mut forcing = vec![0.0; n];
        let mut scratch = Vec::new();
        for k in 0..steps {
            let vk = &v[k * n..(k + 1) * n];
            let dw = lattice.row(k);
            for i in 0..n {
                forcing[i] = conv[i] + dt * self.coeffs.drift.eval(vk[i]) + self.coeffs.diffusion.eval(vk[i]) * dw[i];
            }
            self.step.apply_into(&forcing, &mut conv, &mut scratch);
            for i in 0..n {
                out[(k + 1) * n + i] += conv[i];
            }
        }
        out
    }
}

/// Full-trajectory exponential-Euler solve.
pub fn solve_mild(coeffs: &Coefficients, lattice: &NoiseLattice) -> Result<FieldSolution> {
    MildSolver::new(*coeffs, &lattice.space_grid, lattice.time_grid)?.solve(lattice)
}

/// The same scheme driven by an all-zero lattice.
pub fn solve_deterministic(
    coeffs: &Coefficients,
    space_grid: &SpaceGrid,
    time_grid: TimeGrid,
) -> Result<FieldSolution> {
    solve_mild(coeffs, &NoiseLattice::zeros(space_grid, time_grid))
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub solution: FieldSolution,
    pub iterations: usize,
    /// `sup |u^m - u^{m-1}|` for `m = 1, 2, ...`.
    pub sup_differences: Vec<f64>,
}

/// Fixed-point iteration of the discrete mild map `Psi`, started from the
/// free evolution `u^0_k = P_{t_k} u0`.
pub fn picard_solve(
    coeffs: &Coefficients,
    lattice: &NoiseLattice,
    iterations: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    if iterations == 0 {
        return Err(invalid("picard_solve needs at least one iteration"));
    }
    let solver = MildSolver::new(*coeffs, &lattice.space_grid, lattice.time_grid)?;
    solver.check_lattice(lattice)?;
    let n = lattice.space_grid.len();
    let steps = lattice.time_grid.steps;

    let mut free = Vec::with_capacity((steps + 1) * n);
    let mut u = solver.initial();
    let mut next = vec![0.0; n];
    let mut scratch = Vec::new();
    free.extend_from_slice(&u);
    for _ in 0..steps {
        solver.step.apply_into(&u, &mut next, &mut scratch);
        std::mem::swap(&mut u, &mut next);
        free.extend_from_slice(&u);
    }

    let mut current = free.clone();
    let mut diffs = Vec::new();
    let mut rising = 0;
    for m in 1..=iterations {
        let updated = solver.picard_map(lattice, &free, &current);
        if let Some(p) = updated.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: p / n, node: p % n });
        }
        let diff = updated.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if let Some(&prev) = diffs.last() {
            rising = if diff >= prev { rising + 1 } else { 0 };
        }
        diffs.push(diff);
        current = updated;
        if diff < tol {
            return Ok(PicardOutcome {
                solution: FieldSolution {
                    time_grid: lattice.time_grid,
                    space_grid: lattice.space_grid.clone(),
                    values: current,
                    scheme: SchemeMeta { scheme: "picard".into(), ..solver.meta(Recording::FULL) },
                    lattice_seed: lattice.seed,
                },
                iterations: m,
                sup_differences: diffs,
            });
        }
        if rising >= 3 {
            return Err(Error::NoConvergence { iterations: m, last_diff: diff });
        }
    }
    Err(Error::NoConvergence { iterations, last_diff: *diffs.last().unwrap() })
}

/// Independent replicas: replica `r` uses the lattice seed `seeds[r]`.
/// Replicas run in parallel; the output order follows `seeds`.
pub fn solve_ensemble(
    coeffs: &Coefficients,
    factor: &GramFactor,
    time_grid: TimeGrid,
    seeds: &[u64],
    recordings: &[Recording],
) -> Result<Vec<Vec<FieldSolution>>> {
    let solver = MildSolver::new(*coeffs, &factor.grid, time_grid)?;
    seeds.par_iter().map(|&s| solver.solve_recorded(&sample_noise_lattice(factor, time_grid, s), recordings)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ScalarFn;
    use crate::kernel::Kernel;

    fn heat_only(initial: ScalarFn) -> Coefficients {
        Coefficients::new(ScalarFn::Zero, ScalarFn::Zero, initial, 1.0).unwrap()
    }

    #[test]
    fn deterministic_heat_equation() {
        let g = SpaceGrid::line(-10.0, 10.0, 201).unwrap();
        let tg = TimeGrid::new(0.5, 100).unwrap();
        let sol = solve_deterministic(&heat_only(ScalarFn::Square), &g, tg).unwrap();
        let u0: Vec<f64> = g.nodes().iter().map(|x| x[0] * x[0]).collect();
        for k in [1, 50, 100] {
            let exact = heat_semigroup_apply(&u0, tg.time(k), &g);
            for i in 50..=150 {
                let rel = (sol.at(k, i) - exact[i]).abs() / exact[i].abs().max(1e-3);
                assert!(rel < 1e-3, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn zero_lattice_matches_deterministic_bitwise() {
        let g = SpaceGrid::line(-3.0, 3.0, 31).unwrap();
        let tg = TimeGrid::new(0.2, 20).unwrap();
        let c = Coefficients::new(
            ScalarFn::Sin { amplitude: 0.3, frequency: 1.0, offset: 0.0 },
            ScalarFn::Identity,
            ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, offset: 0.5 },
            1.0,
        )
        .unwrap();
        let a = solve_mild(&c, &NoiseLattice::zeros(&g, tg)).unwrap();
        let b = solve_deterministic(&c, &g, tg).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.row(0), MildSolver::new(c, &g, tg).unwrap().initial().as_slice());
    }

    #[test]
    fn recordings_subsample_the_full_run() {
        let g = SpaceGrid::line(-2.0, 2.0, 21).unwrap();
        let tg = TimeGrid::new(0.1, 10).unwrap();
        let f = GramFactor::build(&Kernel::gaussian(1.0, 1.0).unwrap(), &g, 1e-12).unwrap();
        let lat = sample_noise_lattice(&f, tg, 5);
        let c = Coefficients::new(ScalarFn::Zero, ScalarFn::Identity, ScalarFn::constant(1.0), 1.0).unwrap();
        let s = MildSolver::new(c, &g, tg).unwrap();
        let out = s.solve_recorded(&lat, &[Recording::FULL, Recording { time_stride: 5, space_stride: 4 }]).unwrap();
        assert_eq!(out[1].time_grid.steps, 2);
        assert_eq!(out[1].points(), 6);
        assert_eq!(out[1].at(2, 3), out[0].at(10, 12));
        assert!(Recording { time_stride: 3, space_stride: 1 }.grids(&g, tg).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let g = SpaceGrid::line(-1.0, 1.0, 5).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let c = Coefficients::new(
            ScalarFn::Affine { slope: 1e300, intercept: 0.0 },
            ScalarFn::Zero,
            ScalarFn::constant(1e10),
            1.0,
        )
        .unwrap();
        assert!(matches!(solve_deterministic(&c, &g, tg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn picard_without_forcing_converges_immediately() {
        let g = SpaceGrid::line(-2.0, 2.0, 21).unwrap();
        let tg = TimeGrid::new(0.1, 10).unwrap();
        let lat = NoiseLattice::zeros(&g, tg);
        let out =
            picard_solve(&heat_only(ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, offset: 0.0 }), &lat, 5, 1e-12)
                .unwrap();
        assert_eq!(out.iterations, 1);
        let direct =
            solve_mild(&heat_only(ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, offset: 0.0 }), &lat).unwrap();
        let err = out.solution.values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn picard_rejects_zero_iterations() {
        let g = SpaceGrid::line(-2.0, 2.0, 5).unwrap();
        let lat = NoiseLattice::zeros(&g, TimeGrid::new(0.1, 2).unwrap());
        assert!(picard_solve(&heat_only(ScalarFn::Zero), &lat, 0, 1e-9).is_err());
    }
}
