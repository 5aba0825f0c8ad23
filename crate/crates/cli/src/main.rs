use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use plate_core::harness::{
    active_set_boundaries, compute_eoc, export_state_vtk, gamma_sweep, load_config, measure, poisson_convergence,
    run_table, write_segments_csv, write_sweep_csv, write_table_csv, ExactSolution, TableTruth, Truth,
};
use plate_core::kkt::{Discretization, KktSystem, OptState, ProblemSpec};
use plate_core::mesh::build_uniform;
use plate_core::problems::{example1_spec, example2_spec};
use plate_core::solver::{newton_solve, run_path_with, NewtonOptions, PathConfig};

#[derive(Parser, Debug)]
#[command(name = "plate-bench", version, about = "Plate-thickness design benchmarks")]
struct Cli {
    /// `key = value` file; its entries override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Threads for sparse factorizations (also PLATE_THREADS).
    #[arg(long, global = true, env = "PLATE_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// EOC table for the manufactured Poisson problem.
    PoissonConv(PoissonArgs),
    /// One regularized problem on one mesh.
    Solve(SolveArgs),
    /// Coupled γ–h path.
    Path(PathArgs),
    /// Error table along a path.
    Table(TableArgs),
    /// Errors over a list of γ on one mesh.
    Sweep(SweepArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Problem {
    Ex1,
    Ex2,
}

impl FromStr for Problem {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Problem as ValueEnum>::from_str(s, true)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Disc {
    Rt0,
    P1,
}

impl FromStr for Disc {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Disc as ValueEnum>::from_str(s, true)
    }
}

impl From<Disc> for Discretization {
    fn from(d: Disc) -> Self {
        match d {
            Disc::Rt0 => Discretization::Rt0,
            Disc::P1 => Discretization::P1,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value = "ex1")]
    problem: Problem,
    #[arg(long, value_enum, default_value = "rt0")]
    disc: Disc,
}

impl ProblemArgs {
    fn spec(&self) -> ProblemSpec {
        match self.problem {
            Problem::Ex1 => example1_spec(self.disc.into()),
            Problem::Ex2 => example2_spec(self.disc.into()),
        }
    }

    fn tag(&self) -> String {
        format!("{:?}_{:?}", self.problem, self.disc).to_lowercase()
    }
}

#[derive(Args, Debug, Clone)]
struct PoissonArgs {
    #[arg(long, value_enum, default_value = "rt0")]
    disc: Disc,
    /// Inclusive level range `a..b`.
    #[arg(long, default_value = "4..7")]
    levels: String,
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 5)]
    level: u32,
    #[arg(long, default_value_t = 1e3)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args, Debug, Clone)]
struct PathArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 4)]
    level0: u32,
    #[arg(long, default_value_t = 400.0)]
    gamma0: f64,
    /// Defaults to 2 for RT0 and 4 for P1.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    /// Retry a failed level once with γ scaled by 2^(κ/2).
    #[arg(long)]
    retry_conservative: bool,
}

#[derive(Args, Debug, Clone)]
struct TableArgs {
    #[command(flatten)]
    path: PathArgs,
    /// Reference level for problems without exact solution.
    #[arg(long)]
    reference_level: Option<u32>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 6)]
    level: u32,
    /// `start:stop:decade` or a comma separated list.
    #[arg(long, default_value = "1e2:1e8:decade")]
    gammas: String,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

fn set<T: FromStr>(cfg: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = cfg.get(key) {
        *slot = v.parse().map_err(|e| anyhow::anyhow!("config key {key}: {e}"))?;
    }
    Ok(())
}

fn set_opt<T: FromStr>(cfg: &BTreeMap<String, String>, key: &str, slot: &mut Option<T>) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = cfg.get(key) {
        *slot = Some(v.parse().map_err(|e| anyhow::anyhow!("config key {key}: {e}"))?);
    }
    Ok(())
}

impl ProblemArgs {
    fn apply(&mut self, c: &BTreeMap<String, String>) -> Result<()> {
        set(c, "problem", &mut self.problem)?;
        set(c, "disc", &mut self.disc)
    }
}

impl PathArgs {
    fn apply(&mut self, c: &BTreeMap<String, String>) -> Result<()> {
        self.problem.apply(c)?;
        set(c, "level0", &mut self.level0)?;
        set(c, "gamma0", &mut self.gamma0)?;
        set_opt(c, "kappa", &mut self.kappa)?;
        set(c, "levels", &mut self.levels)?;
        set(c, "tol", &mut self.tol)?;
        set(c, "max_iter", &mut self.max_iter)?;
        set(c, "retry_conservative", &mut self.retry_conservative)
    }

    fn config(&self) -> PathConfig {
        let disc: Discretization = self.problem.disc.into();
        let mut cfg = PathConfig::new(disc, self.level0, self.gamma0, self.levels);
        if let Some(k) = self.kappa {
            cfg.kappa = k;
        }
        cfg.newton.tol = self.tol;
        cfg.newton.max_iterations = self.max_iter;
        cfg.conservative_retries = u32::from(self.retry_conservative);
        cfg
    }
}

fn parse_levels(s: &str) -> Result<std::ops::RangeInclusive<u32>> {
    let (a, b) = s.split_once("..").context("levels must look like a..b")?;
    let a: u32 = a.trim().parse()?;
    let b: u32 = b.trim().trim_start_matches('=').parse()?;
    if a > b {
        bail!("empty level range {s}");
    }
    Ok(a..=b)
}

fn parse_gammas(s: &str) -> Result<Vec<f64>> {
    if let Some((range, step)) = s.rsplit_once(':') {
        if let Some((a, b)) = range.split_once(':') {
            let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
            let factor = match step {
                "decade" => 10.0,
                other => other.parse::<f64>()?,
            };
            if !(a > 0.0 && b >= a && factor > 1.0) {
                bail!("invalid gamma range {s}");
            }
            let mut out = Vec::new();
            let mut g = a;
            while g <= b * (1.0 + 1e-12) {
                out.push(g);
                g *= factor;
            }
            return Ok(out);
        }
    }
    s.split(',').map(|v| Ok(v.trim().parse::<f64>()?)).collect()
}

fn exact_for(problem: Problem) -> Option<ExactSolution> {
    (problem == Problem::Ex1).then(ExactSolution::example1)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    set(&cfg, "out", &mut cli.out)?;
    set(&cfg, "threads", &mut cli.threads)?;
    plate_core::linalg::set_threads(cli.threads);
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.clone();
    match cli.command {
        Command::PoissonConv(mut a) => {
            set(&cfg, "disc", &mut a.disc)?;
            set(&cfg, "levels", &mut a.levels)?;
            poisson_conv(&a)
        }
        Command::Solve(mut a) => {
            a.problem.apply(&cfg)?;
            set(&cfg, "level", &mut a.level)?;
            set(&cfg, "gamma", &mut a.gamma)?;
            set(&cfg, "tol", &mut a.tol)?;
            solve(&a, &out)
        }
        Command::Path(mut a) => {
            a.apply(&cfg)?;
            path(&a, &out)
        }
        Command::Table(mut a) => {
            a.path.apply(&cfg)?;
            set_opt(&cfg, "reference_level", &mut a.reference_level)?;
            table(&a, &out)
        }
        Command::Sweep(mut a) => {
            a.problem.apply(&cfg)?;
            set(&cfg, "level", &mut a.level)?;
            set(&cfg, "gammas", &mut a.gammas)?;
            set(&cfg, "tol", &mut a.tol)?;
            sweep(&a, &out)
        }
    }
}

fn poisson_conv(a: &PoissonArgs) -> Result<()> {
    let rows = poisson_convergence(a.disc.into(), parse_levels(&a.levels)?)?;
    let pairs = |f: fn(&plate_core::harness::PoissonRow) -> f64| -> Result<Vec<f64>> {
        Ok(compute_eoc(&rows.iter().map(|r| (r.h, f(r))).collect::<Vec<_>>())?)
    };
    let e_l2 = pairs(|r| r.l2)?;
    let e_gr = pairs(|r| r.grad)?;
    let grad_name = if a.disc == Disc::P1 { "err_h1" } else { "err_flux" };
    println!(
        "{:>5} {:>12} {:>12} {:>6} {:>12} {:>6} {:>12} {:>12}",
        "level", "h", "err_l2", "eoc", grad_name, "eoc", "err_linf", "conserv"
    );
    for (i, r) in rows.iter().enumerate() {
        let eoc = |v: &Vec<f64>| if i == 0 { "-".into() } else { format!("{:.2}", v[i - 1]) };
        println!(
            "{:>5} {:>12.5e} {:>12.5e} {:>6} {:>12.5e} {:>6} {:>12.5e} {:>12.5e}",
            r.level,
            r.h,
            r.l2,
            eoc(&e_l2),
            r.grad,
            eoc(&e_gr),
            r.linf,
            r.conservation
        );
    }
    Ok(())
}

fn solve(a: &SolveArgs, out: &Path) -> Result<()> {
    let spec = a.problem.spec();
    let mesh = Arc::new(build_uniform(a.level)?);
    let system = Arc::new(KktSystem::new(&mesh, &spec)?);
    let x0 = OptState::zeros(system, a.gamma);
    let opts = NewtonOptions {
        tol: a.tol,
        ..NewtonOptions::default()
    };
    let (state, report) = newton_solve(&x0, a.gamma, &opts)?;
    println!(
        "level {} gamma {:.5e}: {} iterations, residual {:.5e}, J = {:.6e}",
        a.level,
        a.gamma,
        report.iterations,
        report.final_residual(),
        state.objective()
    );
    if let Some(exact) = exact_for(a.problem.problem) {
        let e = measure(&state, &Truth::Exact(exact))?;
        println!("err_linf_y {:.5e}  err_l2_l {:.5e}", e.linf_y, e.l2_l);
    }
    let stem = format!("{}_l{}_g{:e}", a.problem.tag(), a.level, a.gamma);
    for p in export_state_vtk(&state, out, &stem)? {
        println!("wrote {}", p.display());
    }
    let seg = out.join(format!("{stem}_active.csv"));
    write_segments_csv(&active_set_boundaries(&state, 2), &seg)?;
    println!("wrote {}", seg.display());
    Ok(())
}

fn path(a: &PathArgs, out: &Path) -> Result<()> {
    let spec = a.problem.spec();
    let cfg = a.config();
    let run = run_path_with(&spec, &cfg, |s| {
        println!(
            "level {:>2} gamma {:>12.5e} newton {:>2} residual {:.3e} J {:.6e}{}",
            s.level,
            s.gamma,
            s.report.iterations,
            s.report.final_residual(),
            s.objective,
            if s.retried { " (conservative retry)" } else { "" }
        );
    })?;
    if let Some(last) = run.steps.last() {
        let stem = format!("{}_path_l{}", a.problem.tag(), last.level);
        for p in export_state_vtk(&last.state, out, &stem)? {
            println!("wrote {}", p.display());
        }
    }
    if let Some(f) = &run.failure {
        println!("path stopped at level {} gamma {:.5e}: {}", f.level, f.gamma, f.error);
        std::process::exit(2);
    }
    Ok(())
}

fn table(a: &TableArgs, out: &Path) -> Result<()> {
    let spec = a.path.problem.spec();
    let cfg = a.path.config();
    let truth = match (exact_for(a.path.problem.problem), a.reference_level) {
        (_, Some(r)) => TableTruth::ReferenceLevel(r),
        (Some(e), None) => TableTruth::Exact(e),
        (None, None) => TableTruth::ReferenceLevel(cfg.level0 + cfg.levels as u32 + 1),
    };
    let t = run_table(&spec, &cfg, &truth)?;
    print!("{}", t.to_pretty());
    let path = out.join(format!("{}_table.csv", a.path.problem.tag()));
    write_table_csv(&t, &path)?;
    println!("wrote {}", path.display());
    if t.failure.is_some() {
        std::process::exit(2);
    }
    Ok(())
}

fn sweep(a: &SweepArgs, out: &Path) -> Result<()> {
    let spec = a.problem.spec();
    let gammas = parse_gammas(&a.gammas)?;
    let opts = NewtonOptions {
        tol: a.tol,
        ..NewtonOptions::default()
    };
    let exact = exact_for(a.problem.problem);
    let points = gamma_sweep(&spec, a.level, &gammas, exact.as_ref(), &opts)?;
    use plate_core::harness::NormTag;
    let err = |r: Option<&plate_core::harness::ErrorRecord>, tag| {
        r.and_then(|r| r.error(tag)).map_or("-".to_string(), |v| format!("{v:.5e}"))
    };
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>6}  status",
        "gamma", "err_linf_y", "err_l2_l", "reg_linf_y", "reg_l2_l", "newton"
    );
    for p in &points {
        println!(
            "{:>12.5e} {:>12} {:>12} {:>12} {:>12} {:>6}  {}",
            p.gamma,
            err(p.record.as_ref(), NormTag::LinfY),
            err(p.record.as_ref(), NormTag::L2L),
            err(p.regularization.as_ref(), NormTag::LinfY),
            err(p.regularization.as_ref(), NormTag::L2L),
            p.record.as_ref().map_or("-".to_string(), |r| r.newton_iters.to_string()),
            p.failure.as_deref().unwrap_or("converged")
        );
    }
    let path = out.join(format!("{}_sweep_l{}.csv", a.problem.tag(), a.level));
    write_sweep_csv(&points, a.level, plate_core::harness::level_h(a.level), &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
