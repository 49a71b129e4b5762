//! Discrete heat semigroup `P_t` on a [`SpaceGrid`].
//!
//! Per axis, `P_t = exp(t L / 2)` where `L` is the second-difference
//! Laplacian whose ghost nodes copy the boundary value (the field is
//! clamped outside the box). Its eigenvectors are the DCT-II modes, so the
//! matrix is assembled in closed form. Consequences the solver relies on:
//! `P_s P_t = P_{s+t}` up to rounding for any `s, t` (including `dt` far
//! below `dx^2`), rows are nonnegative and are renormalized to sum to one,
//! and quadratics diffuse exactly (`P_t x^2 = x^2 + t`) away from the box
//! faces. In 2D the semigroup is the tensor product of the axis factors.

use std::f64::consts::PI;

use crate::grid::SpaceGrid;

/// One axis factor stored row-wise with negligible tails dropped.
#[derive(Debug, Clone)]
struct AxisOperator {
    rows: Vec<(usize, Vec<f64>)>,
}

impl AxisOperator {
    fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| (i, vec![1.0])).collect() }
    }

    fn new(n: usize, spacing: f64, t: f64) -> Self {
        if t == 0.0 {
            return Self::identity(n);
        }
        let nf = n as f64;
        let decay: Vec<f64> = (0..n)
            .map(|k| {
                let s = (PI * k as f64 / (2.0 * nf)).sin();
                (-0.5 * t * 4.0 * s * s / (spacing * spacing)).exp()
            })
            .collect();
        let modes: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let norm = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                (0..n).map(|j| norm * (PI * k as f64 * (j as f64 + 0.5) / nf).cos()).collect()
            })
            .collect();
        let mut full = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    if decay[k] == 0.0 {
                        continue;
                    }
                    s += decay[k] * modes[k][i] * modes[k][j];
                }
                full[i * n + j] = s;
                full[j * n + i] = s;
            }
        }
        let rows = (0..n)
            .map(|i| {
                let row = &full[i * n..(i + 1) * n];
                let peak = row.iter().cloned().fold(0.0, f64::max);
                let keep = |v: f64| v > 1e-17 * peak;
                let lo = row.iter().position(|&v| keep(v)).unwrap_or(i);
                let hi = row.iter().rposition(|&v| keep(v)).unwrap_or(i);
                let mut w: Vec<f64> = row[lo..=hi].iter().map(|&v| v.max(0.0)).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= total);
                (lo, w)
            })
            .collect();
        Self { rows }
    }

    /// Applies along one axis of a row-major array with `inner` contiguous
    /// elements per index of this axis.
    fn apply(&self, input: &[f64], output: &mut [f64], outer: usize, inner: usize) {
        let n = self.rows.len();
        for o in 0..outer {
            let base = o * n * inner;
            for (i, (lo, w)) in self.rows.iter().enumerate() {
                for c in 0..inner {
                    let mut s = 0.0;
                    for (off, &wv) in w.iter().enumerate() {
                        s += wv * input[base + (lo + off) * inner + c];
                    }
                    output[base + i * inner + c] = s;
                }
            }
        }
    }

    fn bandwidth(&self) -> usize {
        self.rows.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }
}

/// `P_t` for a fixed grid and time.
#[derive(Debug, Clone)]
pub struct HeatSemigroup {
    grid: SpaceGrid,
    t: f64,
    axes: Vec<AxisOperator>,
}

impl HeatSemigroup {
    pub fn new(grid: &SpaceGrid, t: f64) -> Self {
        assert!(t >= 0.0 && t.is_finite(), "heat semigroup needs t >= 0, got {t}");
        let axes = grid.axes().iter().map(|a| AxisOperator::new(a.points, a.spacing(), t)).collect();
        Self { grid: grid.clone(), t, axes }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    /// Widest retained row across axes.
    pub fn bandwidth(&self) -> usize {
        self.axes.iter().map(AxisOperator::bandwidth).max().unwrap_or(0)
    }

    /// Writes `P_t field` into `out`. `scratch` must have the field's length in 2D.
    pub fn apply_into(&self, field: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        assert_eq!(field.len(), self.grid.len());
        if self.t == 0.0 {
            out.copy_from_slice(field);
            return;
        }
        match self.axes.len() {
            1 => self.axes[0].apply(field, out, 1, 1),
            _ => {
                let n0 = self.grid.axis(0).points;
                let n1 = self.grid.axis(1).points;
                scratch.resize(field.len(), 0.0);
                self.axes[1].apply(field, scratch, n0, 1);
                self.axes[0].apply(scratch, out, 1, n1);
            }
        }
    }

    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; field.len()];
        let mut scratch = Vec::new();
        self.apply_into(field, &mut out, &mut scratch);
        out
    }
}

/// One-shot `P_t field`; `t = 0` returns the input unchanged.
pub fn heat_semigroup_apply(field: &[f64], t: f64, grid: &SpaceGrid) -> Vec<f64> {
    HeatSemigroup::new(grid, t).apply(field)
}
