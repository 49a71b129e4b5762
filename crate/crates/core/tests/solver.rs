use heatfk::grid_solver::{picard_solve, solve_ensemble, solve_mild};
use heatfk::stats::mean;
use heatfk::{
    analysis::moment_sup, heat_semigroup_apply, sample_noise_lattice, Coefficients, GramFactor, Kernel, Recording,
    ScalarFn, SpaceGrid, TimeGrid,
};
use heatfk::{MildSolver, NoiseLattice};
use rayon::prelude::*;

fn linear_sigma(initial: ScalarFn) -> Coefficients {
    Coefficients::new(ScalarFn::Zero, ScalarFn::Identity, initial, 1.0).unwrap()
}

fn bump() -> ScalarFn {
    ScalarFn::Sin { amplitude: 0.5, frequency: 1.0, offset: 1.0 }
}

/// Log-error of Euler against `P_t u0 exp(w_t - t/2)` at the centre node.
fn closed_form_log_error(g: &SpaceGrid, steps: usize, t: f64, seed: u64) -> f64 {
    let tg = TimeGrid::new(t, steps).unwrap();
    let f = GramFactor::build(&Kernel::constant(1.0).unwrap(), g, 1e-12).unwrap();
    let lat = sample_noise_lattice(&f, tg, seed);
    let c = linear_sigma(bump());
    let sol = solve_mild(&c, &lat).unwrap();
    let u0: Vec<f64> = g.nodes().iter().map(|x| c.u0(&x[..1])).collect();
    let pt = heat_semigroup_apply(&u0, t, g);
    let w = lat.terminal();
    let i = g.len() / 2;
    (sol.last()[i] / (pt[i] * (w[i] - 0.5 * t).exp())).ln()
}

#[test]
fn closed_form_strong_error_matches_euler_theory() {
    // Euler's log-error for geometric noise is sum_k (dW_k^2 - dt)/2 + O(dt),
    // whose standard deviation is sqrt(t dt / 2).
    let g = SpaceGrid::line(-8.0, 8.0, 81).unwrap();
    let t = 0.5;
    for steps in [100usize, 400] {
        let dt = t / steps as f64;
        let errs: Vec<f64> = (0..200).map(|s| closed_form_log_error(&g, steps, t, s).powi(2)).collect();
        let rms = mean(&errs).sqrt();
        let theory = (t * dt / 2.0).sqrt();
        assert!((rms / theory - 1.0).abs() < 0.2, "steps={steps} rms={rms} theory={theory}");
    }
}

#[test]
fn constant_noise_field_is_spatially_consistent() {
    // u(t, x) / P_t u0(x) is the same geometric factor at every node.
    let g = SpaceGrid::line(-8.0, 8.0, 81).unwrap();
    let tg = TimeGrid::new(0.5, 500).unwrap();
    let f = GramFactor::build(&Kernel::constant(1.0).unwrap(), &g, 1e-12).unwrap();
    let lat = sample_noise_lattice(&f, tg, 3);
    let c = linear_sigma(bump());
    let sol = solve_mild(&c, &lat).unwrap();
    let u0: Vec<f64> = g.nodes().iter().map(|x| c.u0(&x[..1])).collect();
    let pt = heat_semigroup_apply(&u0, 0.5, &g);
    let r0 = sol.last()[40] / pt[40];
    for i in 20..=60 {
        assert!((sol.last()[i] / pt[i] / r0 - 1.0).abs() < 1e-9, "node {i}");
    }
}

#[test]
fn picard_contracts_and_agrees_with_euler() {
    let g = SpaceGrid::line(-4.0, 4.0, 41).unwrap();
    let tg = TimeGrid::new(0.1, 100).unwrap();
    let f = GramFactor::build(&Kernel::gaussian(1.0, 1.0).unwrap(), &g, 1e-12).unwrap();
    let lat = sample_noise_lattice(&f, tg, 11);
    let c = Coefficients::new(
        ScalarFn::Sin { amplitude: 0.5, frequency: 1.0, offset: 0.0 },
        ScalarFn::Affine { slope: 0.5, intercept: 1.0 },
        bump(),
        1.0,
    )
    .unwrap();
    let out = picard_solve(&c, &lat, 30, 1e-12).unwrap();
    let d = &out.sup_differences;
    assert!(d.len() >= 3);
    for w in d[1..].windows(2) {
        assert!(w[1] <= w[0], "{d:?}");
    }
    let euler = solve_mild(&c, &lat).unwrap();
    for (a, b) in out.solution.values.iter().zip(&euler.values) {
        assert!((a - b).abs() <= 0.02 * b.abs().max(1.0));
    }
}

/// Coarsens a lattice by summing consecutive pairs of increments.
fn coarsen(l: &NoiseLattice) -> NoiseLattice {
    let n = l.points();
    let steps = l.time_grid.steps / 2;
    let increments = (0..steps)
        .flat_map(|k| (0..n).map(move |i| (k, i)))
        .map(|(k, i)| l.row(2 * k)[i] + l.row(2 * k + 1)[i])
        .collect();
    NoiseLattice {
        time_grid: TimeGrid::new(l.time_grid.t_end, steps).unwrap(),
        space_grid: l.space_grid.clone(),
        increments,
        seed: l.seed,
    }
}

#[test]
fn fourth_moment_is_stable_under_time_refinement() {
    let g = SpaceGrid::line(0.25, 4.25, 41).unwrap();
    let fine_tg = TimeGrid::new(0.25, 100).unwrap();
    let f = GramFactor::build(&Kernel::bifractional(0.75, 0.8).unwrap(), &g, 1e-12).unwrap();
    let c = Coefficients::new(ScalarFn::Zero, ScalarFn::Affine { slope: 0.5, intercept: 1.0 }, bump(), 1.0).unwrap();
    let fine_solver = MildSolver::new(c, &g, fine_tg).unwrap();
    let coarse_solver = MildSolver::new(c, &g, TimeGrid::new(0.25, 50).unwrap()).unwrap();
    let (fine, coarse): (Vec<_>, Vec<_>) = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let lat = sample_noise_lattice(&f, fine_tg, s);
            let a = fine_solver.solve_recorded(&lat, &[Recording { time_stride: 10, space_stride: 1 }]).unwrap();
            let b =
                coarse_solver.solve_recorded(&coarsen(&lat), &[Recording { time_stride: 5, space_stride: 1 }]).unwrap();
            (a.into_iter().next().unwrap(), b.into_iter().next().unwrap())
        })
        .unzip();
    let (a, b) = (moment_sup(&coarse, 4).unwrap(), moment_sup(&fine, 4).unwrap());
    assert!(a.value.is_finite() && b.value.is_finite());
    assert!((a.value / b.value - 1.0).abs() < 0.1, "coarse={a:?} fine={b:?}");
}

#[test]
fn moment_sup_respects_maximum_principle_and_grows_with_time() {
    let g = SpaceGrid::line(-3.0, 3.0, 31).unwrap();
    let heat = Coefficients::new(ScalarFn::Zero, ScalarFn::Zero, bump(), 1.0).unwrap();
    let f = GramFactor::build(&Kernel::gaussian(1.0, 1.0).unwrap(), &g, 1e-12).unwrap();
    let tg = TimeGrid::new(0.5, 50).unwrap();
    let ens: Vec<_> = solve_ensemble(&heat, &f, tg, &[1, 2], &[Recording::FULL])
        .unwrap()
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect();
    assert!(moment_sup(&ens, 4).unwrap().value <= 1.5f64.powi(4));

    let lin = linear_sigma(bump());
    let mut previous = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let tg = TimeGrid::new(t, (t * 200.0) as usize).unwrap();
        let seeds: Vec<u64> = (0..100).collect();
        let ens: Vec<_> = solve_ensemble(&lin, &f, tg, &seeds, &[Recording { time_stride: 10, space_stride: 1 }])
            .unwrap()
            .into_iter()
            .map(|mut v| v.remove(0))
            .collect();
        let m = moment_sup(&ens, 2).unwrap().value;
        assert!(m.is_finite() && m >= previous, "t={t} m={m} previous={previous}");
        previous = m;
    }
}

#[test]
fn moment_sup_is_stable_under_replica_doubling() {
    let g = SpaceGrid::line(-3.0, 3.0, 31).unwrap();
    let f = GramFactor::build(&Kernel::gaussian(1.0, 1.0).unwrap(), &g, 1e-12).unwrap();
    let tg = TimeGrid::new(0.25, 50).unwrap();
    let lin = linear_sigma(bump());
    let sup = |n: u64| {
        let seeds: Vec<u64> = (0..n).collect();
        let ens: Vec<_> = solve_ensemble(&lin, &f, tg, &seeds, &[Recording { time_stride: 5, space_stride: 1 }])
            .unwrap()
            .into_iter()
            .map(|mut v| v.remove(0))
            .collect();
        moment_sup(&ens, 2).unwrap().value
    };
    let (a, b) = (sup(200), sup(400));
    assert!((a / b - 1.0).abs() < 0.1, "a={a} b={b}");
}
