//! Acceptance suite. Runs every criterion at its pinned tolerance, prints
//! one line per criterion and exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use heatfk::analysis::{synthetic_space_ensemble, synthetic_time_ensemble};
use heatfk::feynman_kac::fk_annealed_constant;
use heatfk::grid_solver::solve_ensemble;
use heatfk::malliavin::{default_eval_grid, density_kde, nondegeneracy_check, resolve_bandwidth, Bandwidth};
use heatfk::rng::{rng, Stream};
use heatfk::stats::{mean_and_std_error, quantile_sorted};
use heatfk::{
    check_h1a, fk_estimate, fk_solve_linear, heat_semigroup_apply, holder_exponent_space, holder_exponent_time,
    malliavin_norm, sample_noise_lattice, solve_mild, Coefficients, GramFactor, Kernel, Recording, ScalarFn,
    SemimartingaleModel, SpaceGrid, TimeGrid,
};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn bump() -> ScalarFn {
    ScalarFn::Sin { amplitude: 0.5, frequency: 1.0, offset: 1.0 }
}

fn linear() -> Coefficients {
    Coefficients::new(ScalarFn::Zero, ScalarFn::Identity, bump(), 1.0).unwrap()
}

fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn deterministic_fk() -> Outcome {
    let t = 0.5;
    let model = SemimartingaleModel::zero(TimeGrid::new(t, 50).unwrap());
    let square = |x: &[f64]| x[0] * x[0];
    let e = fk_estimate(&square, &model, t, &[0.0], 100_000, 1).unwrap();
    let z = (e.mean - 0.5) / e.std_error;
    outcome(z.abs() <= 3.0, format!("mean {:.5} se {:.5} z {z:.2}", e.mean, e.std_error))
}

fn exponential_martingale() -> Outcome {
    let one = |_: &[f64]| 1.0;
    let mut pass = true;
    let mut detail = Vec::new();
    for (t, steps) in [(0.25, 25), (1.0, 100)] {
        let tg = TimeGrid::new(t, steps).unwrap();
        let good = fk_annealed_constant(&one, 1.0, tg, t, &[0.0], 10_000, 16, 3, true).unwrap();
        let bad = fk_annealed_constant(&one, 1.0, tg, t, &[0.0], 10_000, 16, 3, false).unwrap();
        let zg = (good.mean - 1.0) / good.std_error;
        let zb = (bad.mean - 1.0) / bad.std_error;
        pass &= zg.abs() <= 3.0 && zb.abs() > 5.0;
        detail.push(format!("t={t}: z {zg:.2}, dropped-compensator z {zb:.1}"));
    }
    outcome(pass, detail.join("; "))
}

fn quenched_agreement() -> Outcome {
    let g = SpaceGrid::line(-6.0, 6.0, 241).unwrap();
    let t = 0.25;
    let tg = TimeGrid::new(t, 250).unwrap();
    let kernel = Kernel::gaussian(1.0, 1.0).unwrap();
    let f = GramFactor::build(&kernel, &g, 1e-12).unwrap();
    let lattice = sample_noise_lattice(&f, tg, 21);
    let coeffs = linear();
    let grid_sol = solve_mild(&coeffs, &lattice).unwrap();
    let model = SemimartingaleModel::quenched(Arc::new(lattice), kernel).unwrap();
    let h = move |x: &[f64]| coeffs.u0(x);
    let points: Vec<_> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&x| (t, [x, 0.0])).collect();
    let fk = fk_solve_linear(&h, &model, &points, 20_000, 5).unwrap();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for e in fk {
        let reference = grid_sol.interpolate(t, &e.x).unwrap();
        let tol = (3.0 * e.std_error).max(0.03 * reference.abs());
        let gap = (e.mean - reference).abs();
        pass &= gap <= tol;
        worst = worst.max(gap / tol);
    }
    outcome(pass, format!("worst discrepancy {worst:.3} of tolerance"))
}

fn closed_form_log_error(g: &SpaceGrid, f: &GramFactor, seed: u64) -> f64 {
    let t = 0.5;
    let tg = TimeGrid::new(t, 500).unwrap();
    let lat = sample_noise_lattice(f, tg, seed);
    let c = linear();
    let sol = solve_mild(&c, &lat).unwrap();
    let u0: Vec<f64> = g.nodes().iter().map(|x| c.u0(&x[..1])).collect();
    let pt = heat_semigroup_apply(&u0, t, g);
    let w = lat.terminal();
    let n = g.len();
    (n / 4..=3 * n / 4).map(|i| (sol.last()[i] / (pt[i] * (w[i] - 0.5 * t).exp()) - 1.0).abs()).fold(0.0, f64::max)
}

fn closed_form_oracle() -> Outcome {
    let g = SpaceGrid::line(-8.0, 8.0, 81).unwrap();
    let f = GramFactor::build(&Kernel::constant(1.0).unwrap(), &g, 1e-12).unwrap();
    let errors: Vec<f64> = (0..20).map(|s| closed_form_log_error(&g, &f, s)).collect();
    let within = errors.iter().filter(|&&e| e <= 0.01).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(
        within == errors.len(),
        format!("{within}/{} realizations within 1% (worst {:.2}%)", errors.len(), 100.0 * worst),
    )
}

fn mercer_and_covariance() -> Outcome {
    let line = SpaceGrid::line(-2.0, 2.0, 9).unwrap();
    let positive = SpaceGrid::line(0.5, 2.5, 6).unwrap();
    let suite = [
        (Kernel::constant(1.0).unwrap(), &line),
        (Kernel::gaussian(1.0, 0.7).unwrap(), &line),
        (Kernel::exponential(1.0, 0.7).unwrap(), &line),
        (Kernel::white_approx(0.05).unwrap(), &line),
        (Kernel::bifractional(0.75, 0.8).unwrap(), &positive),
    ];
    let t = 0.5;
    let tg = TimeGrid::new(t, 4).unwrap();
    let mut pass = true;
    let mut worst_recon: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (k, g) in suite {
        let f = GramFactor::build(&k, g, 1e-12).unwrap();
        let recon = f.reconstruction_error / f.gram.trace();
        worst_recon = worst_recon.max(recon);
        pass &= recon < 1e-10;
        let terminals: Vec<Vec<f64>> = (0..10_000).map(|s| sample_noise_lattice(&f, tg, s).terminal()).collect();
        let expected = f.density_covariance() * t;
        for i in 0..g.len() {
            for j in i..g.len() {
                let prod: Vec<f64> = terminals.iter().map(|w| w[i] * w[j]).collect();
                let (m, se) = mean_and_std_error(&prod);
                let z = (m - expected[(i, j)]).abs() / se;
                worst_z = worst_z.max(z);
                pass &= z <= 5.0;
            }
        }
    }
    outcome(pass, format!("max reconstruction/trace {worst_recon:.1e}, max covariance |z| {worst_z:.2}"))
}

fn h1a_recovery() -> Outcome {
    let constant =
        check_h1a(&Kernel::constant(1.0).unwrap(), &SpaceGrid::line(-3.0, 3.0, 121).unwrap(), &log_times(1e-2, 0.1, 8))
            .unwrap();
    let bifrac = check_h1a(
        &Kernel::bifractional(0.75, 0.8).unwrap(),
        &SpaceGrid::line(0.5, 3.5, 601).unwrap(),
        &log_times(2e-3, 2e-2, 8),
    )
    .unwrap();
    let pass = constant.gamma.abs() <= 0.1 && (bifrac.gamma + 0.4).abs() <= 0.1;
    outcome(pass, format!("constant {:.3}, bifractional {:.3}", constant.gamma, bifrac.gamma))
}

fn holder_exponents() -> Outcome {
    let lags = [1, 2, 4, 8, 16, 32];
    let mut calibration = Vec::new();
    for (i, eta) in [0.25, 0.4].into_iter().enumerate() {
        let te = synthetic_time_ensemble(eta, 300, 1.0, 200, 10 + i as u64).unwrap();
        let se = synthetic_space_ensemble(eta, 301, 3.0, 200, 20 + i as u64).unwrap();
        calibration.push((eta, holder_exponent_time(&te, &[0.0], 2, &lags).unwrap().exponent));
        calibration.push((eta, holder_exponent_space(&se, 0.0, 2, &lags).unwrap().exponent));
    }
    let calibrated = calibration.iter().all(|(eta, got)| (got - eta).abs() <= 0.05);
    let cal = calibration.iter().map(|(_, g)| format!("{g:.3}")).collect::<Vec<_>>().join(",");
    if !calibrated {
        return outcome(false, format!("synthetic calibration failed: {cal}"));
    }

    let points = 193;
    let g = SpaceGrid::line(0.25, 4.25, points).unwrap();
    let dx = 4.0 / (points - 1) as f64;
    let steps = 6144;
    let tg = TimeGrid::new(steps as f64 * dx * dx, steps).unwrap();
    let kernel = Kernel::bifractional(0.75, 0.8).unwrap();
    let f = GramFactor::build(&kernel, &g, 1e-12).unwrap();
    let c =
        Coefficients::new(ScalarFn::Zero, bump(), ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, offset: 0.0 }, 1.0)
            .unwrap();
    let seeds: Vec<u64> = (0..200).collect();
    let recs = [Recording { time_stride: 1, space_stride: 96 }, Recording { time_stride: steps, space_stride: 1 }];
    let ens = solve_ensemble(&c, &f, tg, &seeds, &recs).unwrap();
    let (time_ens, space_ens): (Vec<_>, Vec<_>) = ens
        .into_iter()
        .map(|mut v| {
            let s = v.pop().unwrap();
            (v.pop().unwrap(), s)
        })
        .unzip();
    let time_lags: Vec<usize> = (0..6).map(|i| 64 << i).collect();
    let space_lags: Vec<usize> = (0..6).map(|i| 2 << i).collect();
    let time = holder_exponent_time(&time_ens, &[2.25], 2, &time_lags).unwrap();
    let space = holder_exponent_space(&space_ens, tg.t_end, 2, &space_lags).unwrap();
    let pass = (0.23..=0.37).contains(&time.exponent) && (0.48..=0.72).contains(&space.exponent);
    outcome(
        pass,
        format!(
            "calibration [{cal}] ok; time {:.3} ± {:.3}, space {:.3} ± {:.3}",
            time.exponent, time.half_width, space.exponent, space.half_width
        ),
    )
}

fn malliavin_norm_checks() -> Outcome {
    let g = SpaceGrid::line(-6.0, 6.0, 121).unwrap();
    let t = 0.25;
    let steps = 250;
    let tg = TimeGrid::new(t, steps).unwrap();
    let kernel = Kernel::gaussian(1.0, 1.0).unwrap();
    let f = GramFactor::build(&kernel, &g, 1e-12).unwrap();
    let lattice = sample_noise_lattice(&f, tg, 31);
    let s_grid: Vec<f64> = (0..16).map(|j| tg.time(j * (steps - 1) / 15)).collect();
    let x = [0.0];

    let zero = Coefficients::new(ScalarFn::Zero, ScalarFn::Zero, bump(), 1.0).unwrap();
    let sol = solve_mild(&zero, &lattice).unwrap();
    let degenerate = malliavin_norm(t, &x, &kernel, &zero, &sol, &lattice, &s_grid, 2000, 1).unwrap();

    let c = linear();
    assert!(nondegeneracy_check(&kernel, &c, &g).holds);
    let sol = solve_mild(&c, &lattice).unwrap();
    let m = malliavin_norm(t, &x, &kernel, &c, &sol, &lattice, &s_grid, 4000, 2).unwrap();
    let n = m.h_values.len();
    let (near, limit) = (m.h_values[n - 2].value, m.h_values[n - 1].value);
    let limit_error = (near / limit - 1.0).abs();
    let pass = degenerate.f_estimate == 0.0 && m.z_score() >= 5.0 && limit_error <= 0.05;
    outcome(
        pass,
        format!(
            "sigma=0 F {}; F {:.4} z {:.1}; H(t-dt)/limit - 1 = {:.4}",
            degenerate.f_estimate,
            m.f_estimate,
            m.z_score(),
            near / limit - 1.0
        ),
    )
}

fn normal_kde_error(seed: u64) -> f64 {
    let mut g = rng(seed, Stream::Custom(1), 0);
    let samples: Vec<f64> = (0..10_000).map(|_| g.sample(StandardNormal)).collect();
    let grid: Vec<f64> = (0..=800).map(|i| -4.0 + i as f64 * 0.01).collect();
    let d = density_kde(&samples, Bandwidth::Silverman, &grid).unwrap();
    grid.iter()
        .zip(&d.density)
        .map(|(u, p)| (p - (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
        .fold(0.0, f64::max)
}

fn density_estimate() -> Outcome {
    let oracle = normal_kde_error(0);
    let g = SpaceGrid::line(-6.0, 6.0, 121).unwrap();
    let tg = TimeGrid::new(0.25, 100).unwrap();
    let f = GramFactor::build(&Kernel::gaussian(1.0, 1.0).unwrap(), &g, 1e-12).unwrap();
    let seeds: Vec<u64> = (0..10_000).collect();
    let rec = Recording { time_stride: tg.steps, space_stride: 1 };
    let ens = solve_ensemble(&linear(), &f, tg, &seeds, &[rec]).unwrap();
    let samples: Vec<f64> = ens.iter().map(|v| v[0].interpolate_at_step(1, &[0.0]).unwrap()).collect();
    let silverman = resolve_bandwidth(&samples, Bandwidth::Silverman).unwrap();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
    let mut pass = oracle < 0.02;
    let mut sweep = Vec::new();
    for factor in [0.5, 1.0, 2.0] {
        let h = factor * silverman;
        let est = density_kde(&samples, Bandwidth::Fixed(h), &default_eval_grid(&samples, h, 401)).unwrap();
        let iqr_min = est
            .eval_grid
            .iter()
            .zip(&est.density)
            .filter(|(u, _)| (q1..=q3).contains(*u))
            .map(|(_, p)| *p)
            .fold(f64::INFINITY, f64::min);
        let mass = est.integral();
        pass &= iqr_min > 0.0 && (mass - 1.0).abs() <= 1e-3;
        sweep.push(format!("h={h:.4}: min on IQR {iqr_min:.4}, mass {mass:.6}"));
    }
    outcome(pass, format!("{}; normal oracle error {oracle:.4}", sweep.join("; ")))
}

const DETERMINISM_BASE: &str = r#"
version = 1
seed = 5

[kernel]
kind = "gaussian"
variance = 1.0
length_scale = 1.0

[grid]
lower = [-4.0]
upper = [4.0]
points = [97]
t_end = 0.2
steps = 192

[coefficients]
drift = { kind = "sin", amplitude = 0.3, frequency = 1.0, offset = 0.0 }
diffusion = { kind = "identity" }
initial = { kind = "sin", amplitude = 0.5, frequency = 1.0, offset = 1.0 }

[solve]
csv_time_stride = 16

[picard]
iterations = 60

[fk]
model = { kind = "quenched" }
t = 0.2
x = [[-0.5], [0.0], [0.5]]
n_paths = 2000

[mollify]
t = 0.2
x = [0.0]
eps = [0.04, 0.01, 0.0]
n_paths = 2000

[malliavin]
t = 0.2
x = [0.0]
s_points = 12
n_paths = 500

[density]
x = [0.0]
replicas = 200

[holder]
replicas = 100
x = [0.0]
time_lags = [2, 4, 8, 16, 32, 64]
space_lags = [1, 2, 4, 8, 16, 32]

[kernel_check]
h1a_times = [0.01, 0.0139, 0.0193, 0.0268, 0.0373, 0.0518, 0.072, 0.1]
"#;

const SUBCOMMANDS: [&str; 8] = ["solve", "picard", "fk", "mollify", "malliavin", "density", "holder", "kernel-check"];

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "bin")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn run_cli(sub: &str, config: &Path, out: &Path, threads: usize) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_heatfk"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .unwrap();
    assert!(status.status.success(), "{sub}: {}", String::from_utf8_lossy(&status.stderr));
    artifact_bytes(&out.join(sub))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, DETERMINISM_BASE).unwrap();
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for sub in SUBCOMMANDS {
        let a = run_cli(sub, &config, &dir.path().join("t1"), 1);
        let b = run_cli(sub, &config, &dir.path().join("t4"), 4);
        let c = run_cli(sub, &config, &dir.path().join("t4-again"), 4);
        compared += a.len();
        if a.is_empty() || a != b || b != c {
            mismatched.push(sub);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{compared} artifacts over {} subcommands; mismatched: {mismatched:?}", SUBCOMMANDS.len()),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("deterministic Feynman-Kac reduction", Duration::from_secs(5), deterministic_fk),
        ("exponential-martingale normalization", Duration::from_secs(30), exponential_martingale),
        ("quenched Feynman-Kac vs grid solver", Duration::from_secs(120), quenched_agreement),
        ("closed-form flat-noise oracle", Duration::from_secs(60), closed_form_oracle),
        ("Mercer reconstruction and field covariance", Duration::from_secs(60), mercer_and_covariance),
        ("small-time kernel exponent recovery", Duration::from_secs(60), h1a_recovery),
        ("Holder exponents", Duration::from_secs(900), holder_exponents),
        ("Malliavin norm", Duration::from_secs(300), malliavin_norm_checks),
        ("density estimate", Duration::from_secs(300), density_estimate),
        ("determinism across thread counts", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time { String::new() } else { format!(" (over the {budget:?} budget)") };
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s{timing}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
