use std::sync::Arc;

use heatfk::feynman_kac::{fk_annealed_constant, mollification_study, SemimartingaleModel};
use heatfk::rng::derive_seed;
use heatfk::{
    fk_estimate, fk_solve_linear, sample_noise_lattice, solve_mild, Coefficients, GramFactor, Kernel, ScalarFn,
    SpaceGrid, TimeGrid,
};

fn bump(x: &[f64]) -> f64 {
    1.0 + 0.5 * x[0].sin()
}

#[test]
fn quenched_fk_agrees_with_grid_solver() {
    let g = SpaceGrid::line(-6.0, 6.0, 241).unwrap();
    let t = 0.25;
    let tg = TimeGrid::new(t, 250).unwrap();
    let kernel = Kernel::gaussian(1.0, 1.0).unwrap();
    let f = GramFactor::build(&kernel, &g, 1e-12).unwrap();
    let lattice = sample_noise_lattice(&f, tg, 21);
    let coeffs = Coefficients::new(
        ScalarFn::Zero,
        ScalarFn::Identity,
        ScalarFn::Sin { amplitude: 0.5, frequency: 1.0, offset: 1.0 },
        1.0,
    )
    .unwrap();
    let grid_sol = solve_mild(&coeffs, &lattice).unwrap();
    let model = SemimartingaleModel::quenched(Arc::new(lattice), kernel).unwrap();
    let points: Vec<_> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&x| (t, [x, 0.0])).collect();
    let fk = fk_solve_linear(&bump, &model, &points, 20_000, 5).unwrap();
    for e in fk {
        let reference = grid_sol.interpolate(t, &e.x).unwrap();
        let tol = (3.0 * e.std_error).max(0.03 * reference.abs());
        assert!((e.mean - reference).abs() <= tol, "x={:?}: fk {} grid {}", e.x, e.mean, reference);
    }
}

#[test]
fn batched_single_point_equals_direct_call() {
    let tg = TimeGrid::new(0.5, 50).unwrap();
    let model = SemimartingaleModel::constant_covariance(1.0, 0.0, tg, 4).unwrap();
    let batch = fk_solve_linear(&bump, &model, &[(0.5, [0.2, 0.0])], 500, 77).unwrap();
    let direct = fk_estimate(&bump, &model, 0.5, &[0.2], 500, derive_seed(77, 0)).unwrap();
    assert_eq!(batch[0].mean, direct.mean);
    assert_eq!(batch[0].std_error, direct.std_error);

    let two = [(0.5, [0.2, 0.0]), (0.25, [-0.1, 0.0])];
    let a = fk_solve_linear(&bump, &model, &two, 300, 1).unwrap();
    let b = fk_solve_linear(&bump, &model, &two, 300, 1).unwrap();
    assert_eq!(a.iter().map(|e| e.mean).collect::<Vec<_>>(), b.iter().map(|e| e.mean).collect::<Vec<_>>());
}

#[test]
fn annealed_martingale_and_negative_control() {
    let tg = TimeGrid::new(0.25, 25).unwrap();
    let one = |_: &[f64]| 1.0;
    let good = fk_annealed_constant(&one, 1.0, tg, 0.25, &[0.0], 4000, 16, 3, true).unwrap();
    assert!((good.mean - 1.0).abs() <= 3.0 * good.std_error, "{good:?}");
    let bad = fk_annealed_constant(&one, 1.0, tg, 0.25, &[0.0], 4000, 16, 3, false).unwrap();
    assert!((bad.mean - 1.0).abs() > 5.0 * bad.std_error, "{bad:?}");
}

fn gaussian_model(seed: u64) -> SemimartingaleModel {
    let g = SpaceGrid::line(-5.0, 5.0, 101).unwrap();
    let kernel = Kernel::gaussian(1.0, 0.5).unwrap();
    let f = GramFactor::build(&kernel, &g, 1e-12).unwrap();
    let lattice = sample_noise_lattice(&f, TimeGrid::new(0.25, 100).unwrap(), seed);
    SemimartingaleModel::quenched(Arc::new(lattice), kernel).unwrap()
}

#[test]
fn mollified_estimates_converge() {
    let model = gaussian_model(8);
    let eps = [0.4, 0.1, 0.025, 0.00625, 0.0];
    let out = mollification_study(&model, &bump, 0.25, &[0.0], &eps, 20_000, 12).unwrap();
    let plain = fk_estimate(&bump, &model, 0.25, &[0.0], 20_000, 12).unwrap();
    assert_eq!(out.last().unwrap().estimate.mean, plain.mean);
    let gaps: Vec<(f64, f64)> = out
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0].estimate, &w[1].estimate);
            ((a.mean - b.mean).abs(), (a.std_error.powi(2) + b.std_error.powi(2)).sqrt())
        })
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1].0 <= w[0].0 + 3.0 * w[1].1, "{gaps:?}");
    }
}

#[test]
fn heavy_smoothing_flattens_the_field() {
    let model = gaussian_model(9);
    let out = mollification_study(&model, &bump, 0.25, &[0.0], &[25.0], 100, 1).unwrap();
    // paths cannot feel spatial variation of a flattened field: every path
    // sees the same noise total, so weights are nearly path independent
    let e = &out[0].estimate;
    assert!(e.ess > 0.99 * e.n_paths as f64, "ess {}", e.ess);
}
