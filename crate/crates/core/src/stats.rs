//! Small numerical helpers shared by the estimators.

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation. The split points depend only on the slice
/// length, so the result is independent of how the terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let slope = pairwise_sum(&sxy) / pairwise_sum(&sxx);
    (slope, my - slope * mx)
}

/// Linear-interpolated quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn sample_std(values: &[f64]) -> f64 {
    let (_, se) = mean_and_std_error(values);
    se * (values.len() as f64).sqrt()
}

/// Trapezoid rule on a (possibly nonuniform) abscissa.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let terms: Vec<f64> = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).collect();
    pairwise_sum(&terms)
}

/// Trapezoid weights for the abscissa `xs`, so that `trapezoid(xs, ys) == sum w_i y_i`.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; xs.len()];
    for i in 0..xs.len().saturating_sub(1) {
        let h = xs[i + 1] - xs[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}
