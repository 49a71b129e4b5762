//! Hölder-exponent regression and moment statistics over solution ensembles.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::grid_solver::{FieldSolution, SchemeMeta};
use crate::rng::{rng, Stream};
use crate::stats::{linear_fit, mean, quantile_sorted, sample_std};

pub const MIN_REPLICAS: usize = 100;
pub const MIN_LAGS: usize = 6;
pub const MIN_DECADES: f64 = 1.5;
pub const BOOTSTRAP_RESAMPLES: usize = 400;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Time,
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub variable: Variable,
    pub p: u32,
    /// Physical lags (time units or space units).
    pub lags: Vec<f64>,
    /// Replica- and base-point-averaged `|increment|^p` per lag.
    pub moments: Vec<f64>,
    /// Regression slope divided by `p`.
    pub exponent: f64,
    pub intercept: f64,
    /// Half of the central 95% bootstrap interval of the exponent.
    pub half_width: f64,
    pub bootstrap_resamples: usize,
    pub replicas: usize,
    pub base_points: usize,
    pub predicted_sup: Option<f64>,
}

impl HolderReport {
    pub fn with_prediction(mut self, sup: f64) -> Self {
        self.predicted_sup = Some(sup);
        self
    }

    /// `|exponent - predicted_sup| <= band`; false without a prediction.
    pub fn within(&self, band: f64) -> bool {
        self.predicted_sup.is_some_and(|s| (self.exponent - s).abs() <= band)
    }
}

/// Supremum of admissible time exponents, `min(rho, 1 + gamma) / 2`.
pub fn predicted_time_sup(rho: f64, gamma: f64) -> f64 {
    0.5 * rho.min(1.0 + gamma)
}

/// Supremum of admissible space exponents, `min(rho, 1 + gamma)`.
pub fn predicted_space_sup(rho: f64, gamma: f64) -> f64 {
    rho.min(1.0 + gamma)
}

fn check_lags(lags: &[usize]) -> Result<()> {
    if lags.len() < MIN_LAGS {
        return Err(Error::InsufficientLags(format!("{} lags given, need {MIN_LAGS}", lags.len())));
    }
    if lags.contains(&0) || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InsufficientLags("lags must be positive and strictly increasing".into()));
    }
    let decades = (*lags.last().unwrap() as f64 / lags[0] as f64).log10();
    if decades < MIN_DECADES - 1e-9 {
        return Err(Error::InsufficientLags(format!("lags span {decades:.2} decades, need {MIN_DECADES}")));
    }
    Ok(())
}

fn check_ensemble(ensemble: &[FieldSolution], p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(invalid(format!("moment order must be an even integer >= 2, got {p}")));
    }
    if ensemble.len() < MIN_REPLICAS {
        return Err(Error::TooFewSamples { got: ensemble.len(), need: MIN_REPLICAS });
    }
    let first = &ensemble[0];
    if ensemble[1..].iter().any(|s| s.time_grid != first.time_grid || s.space_grid != first.space_grid) {
        return Err(invalid("ensemble members must share their grids"));
    }
    Ok(())
}

/// Fits `log m = slope log h + c` and bootstraps the slope over replicas.
/// `per_replica[r][l]` is replica `r`'s base-averaged moment at lag `l`.
fn regress(
    variable: Variable,
    p: u32,
    lags: Vec<f64>,
    per_replica: &[Vec<f64>],
    base_points: usize,
) -> Result<HolderReport> {
    let nl = lags.len();
    let n = per_replica.len();
    let column_means = |idx: &mut dyn Iterator<Item = usize>| -> Vec<f64> {
        let mut acc = vec![0.0; nl];
        let mut count = 0usize;
        for r in idx {
            for (a, v) in acc.iter_mut().zip(&per_replica[r]) {
                *a += v;
            }
            count += 1;
        }
        acc.iter().map(|a| a / count as f64).collect()
    };
    let log_h: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let fit = |m: &[f64]| -> Option<(f64, f64)> {
        if m.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return None;
        }
        let log_m: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        Some(linear_fit(&log_h, &log_m))
    };

    let moments = column_means(&mut (0..n));
    let (slope, intercept) =
        fit(&moments).ok_or_else(|| Error::InsufficientLags("a lag has a zero or non-finite moment".into()))?;

    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .filter_map(|b| {
            let mut g = rng(BOOTSTRAP_SEED, Stream::Bootstrap, b as u64);
            let m = column_means(&mut (0..n).map(|_| g.random_range(0..n)));
            fit(&m).map(|(s, _)| s / p as f64)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let half_width = if boot.len() < BOOTSTRAP_RESAMPLES / 2 {
        f64::INFINITY
    } else {
        0.5 * (quantile_sorted(&boot, 0.975) - quantile_sorted(&boot, 0.025))
    };

    let exponent = slope / p as f64;
    if !exponent.is_finite() {
        return Err(Error::InsufficientLags("regression produced a non-finite exponent".into()));
    }
    Ok(HolderReport {
        variable,
        p,
        lags,
        moments,
        exponent,
        intercept,
        half_width,
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        replicas: n,
        base_points,
        predicted_sup: None,
    })
}

/// Time exponent at point `x`. `lags` are step counts on the ensemble's
/// time grid. Base times are the grid times in the middle third of `[0, T]`
/// from which every lag stays inside the grid.
pub fn holder_exponent_time(ensemble: &[FieldSolution], x: &[f64], p: u32, lags: &[usize]) -> Result<HolderReport> {
    check_ensemble(ensemble, p)?;
    check_lags(lags)?;
    let tg = ensemble[0].time_grid;
    let max_lag = *lags.last().unwrap();
    let lo = tg.steps.div_ceil(3);
    let hi = (2 * tg.steps / 3).min(tg.steps.saturating_sub(max_lag));
    if hi < lo {
        return Err(Error::InsufficientLags(format!(
            "lag {max_lag} does not fit after the middle third of {} steps",
            tg.steps
        )));
    }
    let per_replica = ensemble
        .par_iter()
        .map(|sol| -> Result<Vec<f64>> {
            let path = (0..=tg.steps).map(|k| sol.interpolate_at_step(k, x)).collect::<Result<Vec<f64>>>()?;
            Ok(lags
                .iter()
                .map(|&l| mean(&(lo..=hi).map(|k| (path[k + l] - path[k]).abs().powi(p as i32)).collect::<Vec<_>>()))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let h = lags.iter().map(|&l| l as f64 * tg.dt()).collect();
    regress(Variable::Time, p, h, &per_replica, hi - lo + 1)
}

/// Space exponent at grid time `t` along the first axis. `lags` are node
/// counts. Base nodes have a first-axis index in the middle third of the
/// axis (and, in 2D, a second-axis index in the middle third as well).
pub fn holder_exponent_space(ensemble: &[FieldSolution], t: f64, p: u32, lags: &[usize]) -> Result<HolderReport> {
    check_ensemble(ensemble, p)?;
    check_lags(lags)?;
    let sol0 = &ensemble[0];
    let k = sol0.time_grid.index_of(t).ok_or_else(|| invalid(format!("t={t} is not a recorded time")))?;
    let grid = &sol0.space_grid;
    let n0 = grid.axis(0).points;
    let max_lag = *lags.last().unwrap();
    let lo = n0.div_ceil(3);
    let hi = (2 * n0 / 3).min((n0 - 1).saturating_sub(max_lag));
    if hi < lo {
        return Err(Error::InsufficientLags(format!("lag {max_lag} does not fit on an axis of {n0} nodes")));
    }
    let second: Vec<usize> = if grid.dim() == 2 {
        let n1 = grid.axis(1).points;
        (n1.div_ceil(3)..=2 * n1 / 3).collect()
    } else {
        vec![0]
    };
    let idx = |i: usize, j: usize| if grid.dim() == 2 { grid.index([i, j]) } else { i };
    let per_replica: Vec<Vec<f64>> = ensemble
        .par_iter()
        .map(|sol| {
            let row = sol.row(k);
            lags.iter()
                .map(|&l| {
                    let incr: Vec<f64> = (lo..=hi)
                        .flat_map(|i| second.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| (row[idx(i + l, j)] - row[idx(i, j)]).abs().powi(p as i32))
                        .collect();
                    mean(&incr)
                })
                .collect()
        })
        .collect();
    let dx = grid.axis(0).spacing();
    let h = lags.iter().map(|&l| l as f64 * dx).collect();
    regress(Variable::Space, p, h, &per_replica, (hi - lo + 1) * second.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSup {
    pub value: f64,
    /// Bootstrap standard deviation of the maximum.
    pub std_error: f64,
    pub step: usize,
    pub node: usize,
}

/// `max_{k,i} mean_r |u_r(t_k, x_i)|^p` with a bootstrap error bar.
pub fn moment_sup(ensemble: &[FieldSolution], p: u32) -> Result<MomentSup> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(invalid(format!("moment order must be an even integer >= 2, got {p}")));
    }
    if ensemble.len() < 2 {
        return Err(Error::TooFewSamples { got: ensemble.len(), need: 2 });
    }
    let len = ensemble[0].values.len();
    if ensemble.iter().any(|s| s.values.len() != len) {
        return Err(invalid("ensemble members must share their grids"));
    }
    let n = ensemble.len();
    let powered: Vec<Vec<f64>> =
        ensemble.iter().map(|s| s.values.iter().map(|v| v.abs().powi(p as i32)).collect()).collect();
    let max_of = |counts: &[u32]| -> (f64, usize) {
        let total: u32 = counts.iter().sum();
        let mut best = (f64::NEG_INFINITY, 0);
        for cell in 0..len {
            let mut acc = 0.0;
            for (r, &c) in counts.iter().enumerate() {
                if c > 0 {
                    acc += c as f64 * powered[r][cell];
                }
            }
            let m = acc / total as f64;
            if m > best.0 {
                best = (m, cell);
            }
        }
        best
    };
    let (value, cell) = max_of(&vec![1; n]);
    let boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut g = rng(BOOTSTRAP_SEED, Stream::Bootstrap, b as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[g.random_range(0..n)] += 1;
            }
            max_of(&counts).0
        })
        .collect();
    let points = ensemble[0].points();
    Ok(MomentSup { value, std_error: sample_std(&boot), step: cell / points, node: cell % points })
}

/// `replicas` exact fractional Brownian paths with Hurst index `eta` on
/// `points` equally spaced times in `[0, length]`, sampled by Cholesky
/// factorization of the covariance `(t^{2eta} + s^{2eta} - |t-s|^{2eta}) / 2`.
pub fn synthetic_fbm_paths(eta: f64, points: usize, length: f64, replicas: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(eta > 0.0 && eta < 1.0) || points < 3 || !(length > 0.0) {
        return Err(invalid("fBm needs 0 < eta < 1, at least 3 points and positive length"));
    }
    let m = points - 1;
    let h = length / m as f64;
    let e2 = 2.0 * eta;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        let (t, s) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
        0.5 * (t.powf(e2) + s.powf(e2) - (t - s).abs().powf(e2))
    });
    let l = cov.cholesky().ok_or_else(|| invalid("fBm covariance is not numerically positive definite"))?.l();
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut g = rng(seed, Stream::Synthetic, r as u64);
            let z: Vec<f64> = (0..m).map(|_| g.sample(StandardNormal)).collect();
            let mut path = vec![0.0; points];
            for i in 0..m {
                path[i + 1] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            }
            path
        })
        .collect())
}

fn synthetic_meta(dt: f64, dx: f64) -> SchemeMeta {
    SchemeMeta {
        scheme: "synthetic-fbm".into(),
        dt,
        dx: vec![dx],
        interpolation_order: 1,
        time_stride: 1,
        space_stride: 1,
    }
}

/// fBm paths laid out in time at two identical spatial nodes `{0, 1}`.
pub fn synthetic_time_ensemble(
    eta: f64,
    steps: usize,
    t_end: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<FieldSolution>> {
    let tg = TimeGrid::new(t_end, steps)?;
    let sg = SpaceGrid::line(0.0, 1.0, 2)?;
    let paths = synthetic_fbm_paths(eta, steps + 1, t_end, replicas, seed)?;
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(r, p)| FieldSolution {
            time_grid: tg,
            space_grid: sg.clone(),
            values: p.iter().flat_map(|&v| [v, v]).collect(),
            scheme: synthetic_meta(tg.dt(), 1.0),
            lattice_seed: r as u64,
        })
        .collect())
}

/// fBm paths laid out along a line at the single time `t = 0`.
pub fn synthetic_space_ensemble(
    eta: f64,
    points: usize,
    length: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<FieldSolution>> {
    let tg = TimeGrid::new(1.0, 1)?;
    let sg = SpaceGrid::line(0.0, length, points)?;
    let paths = synthetic_fbm_paths(eta, points, length, replicas, seed)?;
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(r, p)| {
            let mut values = p.clone();
            values.extend_from_slice(&p);
            FieldSolution {
                time_grid: tg,
                space_grid: sg.clone(),
                values,
                scheme: synthetic_meta(1.0, sg.axis(0).spacing()),
                lattice_seed: r as u64,
            }
        })
        .collect())
}
