//! Space and time grids.
//!
//! The equations live on all of R^d; a [`SpaceGrid`] is a truncation to a
//! box with uniformly spaced nodes. Nodes are flattened row-major with the
//! first axis slowest.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A spatial point. Only the first `dim` coordinates are meaningful.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    /// Cell index and fractional offset of `y`, or `None` outside `[lower, upper]`.
    pub fn locate(&self, y: f64) -> Option<(usize, f64)> {
        if !(y >= self.lower && y <= self.upper) {
            return None;
        }
        let s = (y - self.lower) / self.spacing();
        let i = (s.floor() as usize).min(self.points - 2);
        Some((i, (s - i as f64).clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    axes: Vec<Axis>,
}

impl SpaceGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(invalid(format!("grid dimension must be 1 or 2, got {}", axes.len())));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.points < 2 {
                return Err(invalid(format!("axis {k}: need at least 2 points, got {}", a.points)));
            }
            if !(a.upper > a.lower) || !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(invalid(format!("axis {k}: need finite lower < upper, got [{}, {}]", a.lower, a.upper)));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis { lower, upper, points }])
    }

    pub fn plane(lower: [f64; 2], upper: [f64; 2], points: [usize; 2]) -> Result<Self> {
        Self::new(vec![
            Axis { lower: lower[0], upper: upper[0], points: points[0] },
            Axis { lower: lower[1], upper: upper[1], points: points[1] },
        ])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn node(&self, index: usize) -> Point {
        match self.dim() {
            1 => [self.axes[0].coord(index), 0.0],
            _ => {
                let n1 = self.axes[1].points;
                [self.axes[0].coord(index / n1), self.axes[1].coord(index % n1)]
            }
        }
    }

    pub fn index(&self, multi: [usize; 2]) -> usize {
        match self.dim() {
            1 => multi[0],
            _ => multi[0] * self.axes[1].points + multi[1],
        }
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.axes.iter().zip(y).all(|(a, &c)| c >= a.lower && c <= a.upper)
    }

    /// Multilinear interpolation stencil: up to four `(node, weight)` pairs.
    pub fn stencil(&self, y: &[f64]) -> Option<([(usize, f64); 4], usize)> {
        let mut out = [(0usize, 0.0f64); 4];
        match self.dim() {
            1 => {
                let (i, f) = self.axes[0].locate(y[0])?;
                out[0] = (i, 1.0 - f);
                out[1] = (i + 1, f);
                Some((out, 2))
            }
            _ => {
                let (i, fx) = self.axes[0].locate(y[0])?;
                let (j, fy) = self.axes[1].locate(y[1])?;
                let n1 = self.axes[1].points;
                out[0] = (i * n1 + j, (1.0 - fx) * (1.0 - fy));
                out[1] = (i * n1 + j + 1, (1.0 - fx) * fy);
                out[2] = ((i + 1) * n1 + j, fx * (1.0 - fy));
                out[3] = ((i + 1) * n1 + j + 1, fx * fy);
                Some((out, 4))
            }
        }
    }

    /// Interpolates nodal `values` at `y`.
    pub fn interpolate(&self, values: &[f64], y: &[f64]) -> Option<f64> {
        let (st, n) = self.stencil(y)?;
        Some(st[..n].iter().map(|&(i, w)| w * values[i]).sum())
    }

    /// Same box with a different number of points per axis.
    pub fn with_points(&self, points: &[usize]) -> Result<Self> {
        Self::new(
            self.axes.iter().zip(points).map(|(a, &p)| Axis { lower: a.lower, upper: a.upper, points: p }).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(invalid(format!("t_end must be positive and finite, got {t_end}")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    /// Index `k` with `time(k) == t` up to rounding, if `t` is a grid time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = t / self.dt();
        let k = s.round();
        if k < 0.0 || k > self.steps as f64 || (s - k).abs() > 1e-9 {
            return None;
        }
        Some(k as usize)
    }
}
