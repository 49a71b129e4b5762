//! Subcommand pipelines.
//!
//! Each pipeline writes into `<out>/<subcommand>/` and returns its verdicts.
//! Seeds are derived from the config seed: the lattice uses
//! `derive_seed(seed, 0)`, Brownian paths `derive_seed(seed, 1)` and
//! replica `r` of an ensemble `derive_seed(derive_seed(seed, 2), r)`.

use std::sync::Arc;

use heatfk::analysis::{
    holder_exponent_space, holder_exponent_time, predicted_space_sup, predicted_time_sup, HolderReport,
};
use heatfk::feynman_kac::{mollification_study, SemimartingaleModel};
use heatfk::grid_solver::{picard_solve, solve_ensemble};
use heatfk::io::{write_lattice, write_matrix, write_solution};
use heatfk::kernel::{check_growth, check_h1a};
use heatfk::malliavin::{default_eval_grid, density_kde, nondegeneracy_check, resolve_bandwidth, Bandwidth};
use heatfk::rng::derive_seed;
use heatfk::stats::quantile_sorted;
use heatfk::{
    fk_estimate, heat_semigroup_apply, malliavin_norm, sample_noise_lattice, FieldSolution, GramFactor, MildSolver,
    NoiseLattice, Recording, ScalarFn,
};
use serde::Serialize;

use crate::config::{BandwidthSpec, ConfigError, ExperimentConfig, FkModelSpec};
use crate::output::{Artifacts, Cell, Csv, Verdict};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Picard,
    Fk,
    Mollify,
    Malliavin,
    Density,
    Holder,
    KernelCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Picard => "picard",
            Subcommand::Fk => "fk",
            Subcommand::Mollify => "mollify",
            Subcommand::Malliavin => "malliavin",
            Subcommand::Density => "density",
            Subcommand::Holder => "holder",
            Subcommand::KernelCheck => "kernel-check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: std::path::PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: std::path::PathBuf,
    pub verdicts: Vec<Verdict>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    seed: u64,
    lattice_seed: u64,
    path_seed: u64,
    replica_seed: u64,
    threads: usize,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

struct Seeds {
    root: u64,
    lattice: u64,
    paths: u64,
    replicas: u64,
}

impl Seeds {
    fn new(root: u64) -> Self {
        Self { root, lattice: derive_seed(root, 0), paths: derive_seed(root, 1), replicas: derive_seed(root, 2) }
    }

    fn replica(&self, r: usize) -> u64 {
        derive_seed(self.replicas, r as u64)
    }
}

/// Runs one subcommand on a dedicated thread pool and writes its artifacts.
pub fn run(cmd: Subcommand, config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut config = config.clone();
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    let threads = pool.current_num_threads();
    pool.install(|| {
        let mut art = Artifacts::create(&opts.out, cmd.name())?;
        let seeds = Seeds::new(config.seed);
        let verdicts = match cmd {
            Subcommand::Solve => solve(&config, &seeds, &mut art),
            Subcommand::Picard => picard(&config, &seeds, &mut art),
            Subcommand::Fk => fk(&config, &seeds, &mut art),
            Subcommand::Mollify => mollify(&config, &seeds, &mut art),
            Subcommand::Malliavin => malliavin(&config, &seeds, &mut art),
            Subcommand::Density => density(&config, &seeds, &mut art),
            Subcommand::Holder => holder(&config, &seeds, &mut art),
            Subcommand::KernelCheck => kernel_check(&config, &mut art),
        }?;
        art.json("verdicts.json", &verdicts)?;
        let mut files = art.files().to_vec();
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: "heatfk",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: cmd.name(),
            seed: seeds.root,
            lattice_seed: seeds.lattice,
            path_seed: seeds.paths,
            replica_seed: seeds.replicas,
            threads,
            files,
            config: &config,
        };
        art.json("manifest.json", &manifest)?;
        Ok(RunOutcome { dir: art.dir().to_path_buf(), verdicts })
    })
}

fn module<T>(stage: &'static str, r: heatfk::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Module { stage, source })
}

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, RunError> {
    value.as_ref().ok_or_else(|| RunError::Config(ConfigError::new(name, "section is required by this subcommand")))
}

fn factor(config: &ExperimentConfig) -> Result<GramFactor, RunError> {
    module("gram factorization", GramFactor::build(&config.kernel()?, &config.space_grid()?, config.grid.clip_tol))
}

fn lattice(config: &ExperimentConfig, seeds: &Seeds) -> Result<NoiseLattice, RunError> {
    Ok(sample_noise_lattice(&factor(config)?, config.time_grid()?, seeds.lattice))
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    ["x", "y"][..dim].to_vec()
}

fn solution_csv(sol: &FieldSolution, time_stride: usize) -> Csv {
    let d = sol.space_grid.dim();
    let mut header = vec!["t"];
    header.extend(coord_header(d));
    header.push("u");
    let mut csv = Csv::new(&header);
    for k in (0..=sol.time_grid.steps).step_by(time_stride.max(1)) {
        let t = sol.time_grid.time(k);
        for i in 0..sol.points() {
            let x = sol.space_grid.node(i);
            let mut row: Vec<Cell> = vec![t.into()];
            row.extend(x[..d].iter().map(|&c| Cell::F(c)));
            row.push(sol.at(k, i).into());
            csv.row(row);
        }
    }
    csv
}

fn initial_values(config: &ExperimentConfig) -> Result<Vec<f64>, RunError> {
    let g = config.space_grid()?;
    let c = config.coefficients()?;
    Ok(g.nodes().iter().map(|x| c.u0(&x[..g.dim()])).collect())
}

fn solve(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let lat = lattice(config, seeds)?;
    let coeffs = config.coefficients()?;
    let sol =
        module("mild solver", MildSolver::new(coeffs, &lat.space_grid, lat.time_grid).and_then(|s| s.solve(&lat)))?;
    art.csv("solution.csv", &solution_csv(&sol, config.solve.csv_time_stride))?;
    let p = art.path("lattice.bin");
    module("lattice output", write_lattice(&p, &lat))?;
    let p = art.path("solution.bin");
    art.path("solution.json");
    module("solution output", write_solution(&p, &sol))?;

    let sup = sol.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut verdicts = vec![Verdict {
        name: "solution_finite".into(),
        measured: sup,
        expected: 0.0,
        tolerance: 0.0,
        pass: sup.is_finite(),
    }];
    if coeffs.drift.is_zero() && coeffs.diffusion.is_zero() {
        let reference = heat_semigroup_apply(&initial_values(config)?, lat.time_grid.t_end, &lat.space_grid);
        let err = reference.iter().zip(sol.last()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        verdicts.push(Verdict::near("heat_semigroup_agreement", err, 0.0, 1e-3 * scale));
    }
    Ok(verdicts)
}

fn picard(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.picard, "picard")?;
    let lat = lattice(config, seeds)?;
    let coeffs = config.coefficients()?;
    let out = module("picard iteration", picard_solve(&coeffs, &lat, spec.iterations, spec.tol))?;
    let euler =
        module("mild solver", MildSolver::new(coeffs, &lat.space_grid, lat.time_grid).and_then(|s| s.solve(&lat)))?;
    let mut it = Csv::new(&["iteration", "sup_difference"]);
    for (m, d) in out.sup_differences.iter().enumerate() {
        it.row(vec![(m + 1).into(), (*d).into()]);
    }
    art.csv("iterations.csv", &it)?;
    art.csv("solution.csv", &solution_csv(&out.solution, config.solve.csv_time_stride))?;

    let rel =
        out.solution.values.iter().zip(&euler.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / b.abs().max(1.0)));
    let increases = out.sup_differences.windows(2).skip(1).filter(|w| w[1] > w[0]).count();
    Ok(vec![
        Verdict::near("picard_vs_time_stepping", rel, 0.0, spec.agreement),
        Verdict::near("picard_contraction_violations", increases as f64, 0.0, 0.0),
    ])
}

fn fk_model(
    config: &ExperimentConfig,
    seeds: &Seeds,
    spec: FkModelSpec,
) -> Result<(SemimartingaleModel, Option<Arc<NoiseLattice>>), RunError> {
    let tg = config.time_grid()?;
    let model = match spec {
        FkModelSpec::Zero => (SemimartingaleModel::zero(tg), None),
        FkModelSpec::Constant { q0 } => {
            (module("flat noise", SemimartingaleModel::constant_covariance(q0, 0.0, tg, seeds.lattice))?, None)
        }
        FkModelSpec::Quenched => {
            let lat = Arc::new(lattice(config, seeds)?);
            (module("quenched model", SemimartingaleModel::quenched(lat.clone(), config.kernel()?))?, Some(lat))
        }
    };
    Ok(model)
}

type Reference = Box<dyn Fn(&[f64]) -> heatfk::Result<f64>>;

fn fk(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.fk, "fk")?;
    let grid = config.space_grid()?;
    let d = grid.dim();
    if let Some(bad) = spec.x.iter().position(|x| x.len() != d) {
        return Err(ConfigError::new(format!("fk.x[{bad}]"), format!("expected {d} coordinates")).into());
    }
    let coeffs = config.coefficients()?;
    let h = move |x: &[f64]| coeffs.u0(x);
    let (mut model, lat) = fk_model(config, seeds, spec.model)?;
    if spec.drop_compensator {
        model = model.without_compensator();
    }
    let linear = coeffs.drift.is_zero() && coeffs.diffusion == ScalarFn::Identity;
    let reference: Option<Reference> = match (spec.model, &lat) {
        (FkModelSpec::Zero, _) if coeffs.initial == ScalarFn::Square => {
            let t = spec.t;
            Some(Box::new(move |x: &[f64]| Ok(x[0] * x[0] + t)))
        }
        (FkModelSpec::Quenched, Some(l)) if linear && !spec.drop_compensator => {
            let sol = MildSolver::new(coeffs, &l.space_grid, l.time_grid).and_then(|s| s.solve(l));
            let sol = module("mild solver", sol)?;
            let t = spec.t;
            Some(Box::new(move |x: &[f64]| sol.interpolate(t, x)))
        }
        _ => None,
    };

    let mut header = vec!["t"];
    header.extend(coord_header(d));
    header.extend(["mean", "std_error", "n_paths", "rejected_paths", "ess", "reference"]);
    let mut csv = Csv::new(&header);
    let mut verdicts = Vec::new();
    for (i, x) in spec.x.iter().enumerate() {
        let e = module(
            "feynman-kac",
            fk_estimate(&h, &model, spec.t, x, spec.n_paths, derive_seed(seeds.paths, i as u64)),
        )?;
        let r = match &reference {
            Some(f) => Some(module("reference", f(x))?),
            None => None,
        };
        let mut row: Vec<Cell> = vec![spec.t.into()];
        row.extend(x.iter().map(|&c| Cell::F(c)));
        row.extend([e.mean.into(), e.std_error.into(), e.n_paths.into(), e.rejected_paths.into(), e.ess.into()]);
        row.push(r.map(Cell::F).unwrap_or(Cell::S(String::new())));
        csv.row(row);
        if let Some(r) = r {
            let tol = match spec.model {
                FkModelSpec::Quenched => (3.0 * e.std_error).max(0.03 * r.abs()),
                _ => 3.0 * e.std_error,
            };
            verdicts.push(Verdict::near(format!("fk_reference[{i}]"), e.mean, r, tol));
        }
    }
    art.csv("fk.csv", &csv)?;
    Ok(verdicts)
}

fn mollify(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.mollify, "mollify")?;
    let coeffs = config.coefficients()?;
    let h = move |x: &[f64]| coeffs.u0(x);
    let (model, _) = fk_model(config, seeds, FkModelSpec::Quenched)?;
    let out = module(
        "mollification",
        mollification_study(&model, &h, spec.t, &spec.x, &spec.eps, spec.n_paths, seeds.paths),
    )?;
    let mut csv = Csv::new(&["eps", "mean", "std_error", "ess"]);
    for m in &out {
        csv.row(vec![m.eps.into(), m.estimate.mean.into(), m.estimate.std_error.into(), m.estimate.ess.into()]);
    }
    art.csv("mollify.csv", &csv)?;

    let mut verdicts = Vec::new();
    if let Some(last) = out.last().filter(|m| m.eps == 0.0) {
        let plain = module("feynman-kac", fk_estimate(&h, &model, spec.t, &spec.x, spec.n_paths, seeds.paths))?;
        verdicts.push(Verdict::near("eps_zero_is_plain_estimate", last.estimate.mean, plain.mean, 0.0));
    }
    let gaps: Vec<(f64, f64)> = out
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0].estimate, &w[1].estimate);
            ((a.mean - b.mean).abs(), (a.std_error.powi(2) + b.std_error.powi(2)).sqrt())
        })
        .collect();
    let violations = gaps.windows(2).filter(|w| w[1].0 > w[0].0 + 3.0 * w[1].1).count();
    verdicts.push(Verdict::near("cauchy_violations", violations as f64, 0.0, 0.0));
    Ok(verdicts)
}

#[derive(Serialize)]
struct MalliavinSummary {
    t: f64,
    x: Vec<f64>,
    f_estimate: f64,
    f_std_error: f64,
    integration_error: f64,
    error_bound: f64,
    z_score: f64,
    n_paths: usize,
}

fn malliavin(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.malliavin, "malliavin")?;
    let lat = lattice(config, seeds)?;
    let coeffs = config.coefficients()?;
    let kernel = config.kernel()?;
    let sol =
        module("mild solver", MildSolver::new(coeffs, &lat.space_grid, lat.time_grid).and_then(|s| s.solve(&lat)))?;
    let tg = lat.time_grid;
    let m = tg
        .index_of(spec.t)
        .filter(|&m| m >= 2)
        .ok_or_else(|| ConfigError::new("malliavin.t", "must be a grid time at least two steps after 0"))?;
    if spec.s_points < 8 {
        return Err(ConfigError::new("malliavin.s_points", "at least 8 s-nodes are required").into());
    }
    let last = m - 1;
    let mut steps: Vec<usize> =
        (0..spec.s_points).map(|j| (j * last + (spec.s_points - 1) / 2) / (spec.s_points - 1)).collect();
    steps.dedup();
    if steps.len() < 8 {
        return Err(ConfigError::new("malliavin.s_points", "more s-nodes than time steps before t").into());
    }
    let s_grid: Vec<f64> = steps.iter().map(|&k| tg.time(k)).collect();
    let est = module(
        "malliavin norm",
        malliavin_norm(spec.t, &spec.x, &kernel, &coeffs, &sol, &lat, &s_grid, spec.n_paths, seeds.paths),
    )?;
    let mut h = Csv::new(&["s", "h", "std_error"]);
    for v in &est.h_values {
        h.row(vec![v.s.into(), v.value.into(), v.std_error.into()]);
    }
    art.csv("h.csv", &h)?;
    let summary = MalliavinSummary {
        t: est.t,
        x: est.x.clone(),
        f_estimate: est.f_estimate,
        f_std_error: est.f_std_error,
        integration_error: est.integration_error,
        error_bound: est.error_bound,
        z_score: est.z_score(),
        n_paths: est.n_paths,
    };
    art.json("summary.json", &summary)?;

    let nd = nondegeneracy_check(&kernel, &coeffs, &lat.space_grid);
    let mut verdicts = Vec::new();
    if coeffs.diffusion.is_zero() {
        verdicts.push(Verdict::near("f_zero_without_diffusion", est.f_estimate, 0.0, 0.0));
    } else if nd.holds {
        verdicts.push(Verdict::at_least("f_positive_z_score", est.z_score(), 5.0));
        let n = est.h_values.len();
        let (near, limit) = (est.h_values[n - 2].value, est.h_values[n - 1].value);
        if limit != 0.0 {
            verdicts.push(Verdict::near("h_limit_relative_error", (near - limit).abs() / limit.abs(), 0.0, 0.05));
        }
    }
    Ok(verdicts)
}

fn density(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.density, "density")?;
    let coeffs = config.coefficients()?;
    let f = factor(config)?;
    let tg = config.time_grid()?;
    let replica_seeds: Vec<u64> = (0..spec.replicas).map(|r| seeds.replica(r)).collect();
    let rec = Recording { time_stride: tg.steps, space_stride: 1 };
    let ens = module("ensemble", solve_ensemble(&coeffs, &f, tg, &replica_seeds, &[rec]))?;
    let samples: Vec<f64> = ens
        .iter()
        .map(|v| v[0].interpolate_at_step(1, &spec.x))
        .collect::<heatfk::Result<Vec<_>>>()
        .map_err(|source| RunError::Module { stage: "density samples", source })?;
    let bandwidth = match spec.bandwidth {
        BandwidthSpec::Silverman => Bandwidth::Silverman,
        BandwidthSpec::Fixed(h) => Bandwidth::Fixed(h),
    };
    let h = module("bandwidth", resolve_bandwidth(&samples, bandwidth))?;
    let grid = default_eval_grid(&samples, h, spec.eval_points);
    let est = module("density", density_kde(&samples, Bandwidth::Fixed(h), &grid))?;

    let mut s = Csv::new(&["replica", "u"]);
    for (r, u) in samples.iter().enumerate() {
        s.row(vec![r.into(), (*u).into()]);
    }
    art.csv("samples.csv", &s)?;
    let mut d = Csv::new(&["u", "density"]);
    for (u, p) in est.eval_grid.iter().zip(&est.density) {
        d.row(vec![(*u).into(), (*p).into()]);
    }
    art.csv("density.csv", &d)?;

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
    let iqr_min = est
        .eval_grid
        .iter()
        .zip(&est.density)
        .filter(|(u, _)| **u >= q1 && **u <= q3)
        .map(|(_, p)| *p)
        .fold(f64::INFINITY, f64::min);
    let mut summary = Csv::new(&["bandwidth", "q1", "q3", "min_density_on_iqr", "integral"]);
    summary.row(vec![h.into(), q1.into(), q3.into(), iqr_min.into(), est.integral().into()]);
    art.csv("summary.csv", &summary)?;
    Ok(vec![
        Verdict {
            name: "kde_positive_on_iqr".into(),
            measured: iqr_min,
            expected: 0.0,
            tolerance: 0.0,
            pass: iqr_min > 0.0,
        },
        Verdict::near("kde_normalization", est.integral(), 1.0, 1e-3),
    ])
}

fn holder_csv(reports: &[HolderReport]) -> Csv {
    let mut csv = Csv::new(&["p", "lag", "moment", "fit"]);
    for r in reports {
        for (h, m) in r.lags.iter().zip(&r.moments) {
            let fit = (r.intercept + r.exponent * r.p as f64 * h.ln()).exp();
            csv.row(vec![r.p.into(), (*h).into(), (*m).into(), fit.into()]);
        }
    }
    csv
}

fn holder(config: &ExperimentConfig, seeds: &Seeds, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.holder, "holder")?;
    let coeffs = config.coefficients()?;
    let kernel = config.kernel()?;
    let f = factor(config)?;
    let tg = config.time_grid()?;
    let grid = f.grid.clone();
    let node = (0..grid.len())
        .find(|&i| grid.node(i)[..grid.dim()] == spec.x[..])
        .ok_or_else(|| ConfigError::new("holder.x", "must be a grid node"))?;
    let stride = if grid.dim() == 1 {
        let n = grid.len() - 1;
        let mut s = n;
        while node % s != 0 || n % s != 0 {
            s -= 1;
        }
        s
    } else {
        1
    };
    let recs =
        [Recording { time_stride: 1, space_stride: stride }, Recording { time_stride: tg.steps, space_stride: 1 }];
    let replica_seeds: Vec<u64> = (0..spec.replicas).map(|r| seeds.replica(r)).collect();
    let ens = module("ensemble", solve_ensemble(&coeffs, &f, tg, &replica_seeds, &recs))?;
    let (time_ens, space_ens): (Vec<_>, Vec<_>) = ens
        .into_iter()
        .map(|mut v| {
            let s = v.pop().expect("two recordings");
            (v.pop().expect("two recordings"), s)
        })
        .unzip();
    drop(f);

    let rho = coeffs.rho;
    let mut time_reports = Vec::new();
    let mut space_reports = Vec::new();
    for &p in &spec.p {
        let t = module("time exponent", holder_exponent_time(&time_ens, &spec.x, p, &spec.time_lags))?;
        time_reports.push(t.with_prediction(predicted_time_sup(rho, kernel.gamma)));
        let s = module("space exponent", holder_exponent_space(&space_ens, tg.t_end, p, &spec.space_lags))?;
        space_reports.push(s.with_prediction(predicted_space_sup(rho, kernel.gamma)));
    }
    art.csv("holder_time.csv", &holder_csv(&time_reports))?;
    art.csv("holder_space.csv", &holder_csv(&space_reports))?;
    let mut summary = Csv::new(&["variable", "p", "exponent", "half_width", "predicted_sup", "band"]);
    let mut verdicts = Vec::new();
    for r in time_reports.iter().chain(&space_reports) {
        let name = match r.variable {
            heatfk::Variable::Time => "time",
            heatfk::Variable::Space => "space",
        };
        let sup = r.predicted_sup.unwrap_or(f64::NAN);
        summary.row(vec![
            name.into(),
            r.p.into(),
            r.exponent.into(),
            r.half_width.into(),
            sup.into(),
            spec.band.into(),
        ]);
        verdicts.push(Verdict::near(format!("holder_{name}_p{}", r.p), r.exponent, sup, spec.band));
    }
    art.csv("summary.csv", &summary)?;
    Ok(verdicts)
}

fn kernel_check(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Verdict>, RunError> {
    let spec = section(&config.kernel_check, "kernel_check")?;
    let kernel = config.kernel()?;
    let grid = config.space_grid()?;
    let f = factor(config)?;
    let p = art.path("gram.bin");
    module("gram output", write_matrix(&p, &f.gram))?;
    let mut ev = Csv::new(&["index", "eigenvalue"]);
    for (i, e) in f.eigenvalues.iter().enumerate() {
        ev.row(vec![i.into(), (*e).into()]);
    }
    art.csv("eigenvalues.csv", &ev)?;
    let h1a = module("small-time exponent check", check_h1a(&kernel, &grid, &spec.h1a_times))?;
    let mut hc = Csv::new(&["t", "sup_double_convolution"]);
    for (t, s) in h1a.times.iter().zip(&h1a.sups) {
        hc.row(vec![(*t).into(), (*s).into()]);
    }
    art.csv("h1a.csv", &hc)?;
    let growth = check_growth(&kernel, &grid);
    let scale = f.gram.trace();
    let mut summary =
        Csv::new(&["reconstruction_error", "trace", "eigen_clip_count", "rank", "gamma", "growth_constant", "beta"]);
    summary.row(vec![
        f.reconstruction_error.into(),
        scale.into(),
        f.eigen_clip_count.into(),
        f.rank().into(),
        h1a.gamma.into(),
        growth.constant.into(),
        growth.beta.into(),
    ]);
    art.csv("summary.csv", &summary)?;
    Ok(vec![
        Verdict::near("mercer_reconstruction", f.reconstruction_error / scale, 0.0, 1e-10),
        Verdict::near("h1a_gamma", h1a.gamma, kernel.gamma, spec.gamma_tolerance),
        Verdict {
            name: "growth_bounded".into(),
            measured: growth.constant,
            expected: 0.0,
            tolerance: 0.0,
            pass: growth.bounded,
        },
    ])
}
