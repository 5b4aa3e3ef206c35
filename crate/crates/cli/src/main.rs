//! `lgk`: command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or runtime failure, 2 a verification
//! subcommand ran but a tolerance check failed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;

use lgk_core::dynamics::{simulate, SimParams};
use lgk_core::exactgen::{adjoint_residuals, build_generators, stationarity_residual};
use lgk_core::harness::{emit_reports, preset, run_comparison, ExperimentConfig};
use lgk_core::measure::{lambda_field_from_phi, sample, PerturbationField};
use lgk_core::micro::{
    build_k_chain, enumerate_kspaces, enumerate_surfaces, find_maximizer, kernel_consistency, spectral_gap,
    verify_cor_sg_k,
};
use lgk_core::pde::{integrate, PdeState64};
use lgk_core::rng::stream;
use lgk_core::VelocitySet;

#[derive(Debug, Parser)]
#[command(name = "lgk", version, about = "Lattice gas with collisions: simulation, spectral checks and PDE comparison")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LGK_THREADS")]
    threads: Option<usize>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Velocity-set assumptions and derived constants.
    Check(VelocityArg),
    /// Generator identities on a small torus.
    Exact(ExactArgs),
    /// Spectral gaps of the micro-canonical surfaces.
    Gap(BoxArgs),
    /// k-space audit: maximizers, chains, variance inequality, kernel identity.
    Chain(BoxArgs),
    /// Simulate one trajectory and write snapshots.
    Simulate(SimulateArgs),
    /// Solve the PDE and write functional time series.
    Pde(PdeArgs),
    /// Ensemble-versus-PDE comparison.
    Compare(CompareArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct VelocityArg {
    /// Velocity file or preset (`model_one:<d>`, `root_two`, `single_plus`).
    #[arg(long)]
    velocity: Option<String>,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    velocity: VelocityArg,
    #[arg(long = "N", default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    /// Number of random constant chemical potentials.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Bound on |λ|∞.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BoxArgs {
    #[command(flatten)]
    velocity: VelocityArg,
    /// Box radii, comma separated.
    #[arg(long = "M-list", value_delimiter = ',', default_value = "1")]
    m_list: Vec<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Lattice side (default: first entry of the config's `n_list`).
    #[arg(long = "N")]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct PdeArgs {
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "Tend")]
    t_end: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
}

/// Failure of a verification check, reported with exit code 2.
#[derive(Debug)]
struct ToleranceFailure(String);

impl std::fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ToleranceFailure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ToleranceFailure>() => {
            eprintln!("tolerance failure: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = g.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| match cli.command {
        Command::Version => {
            println!("lgk {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Check(v) => check(&load_velocity(&v, &g)?),
        Command::Exact(args) => exact(&load_velocity(&args.velocity, &g)?, &args, &g),
        Command::Gap(args) => gap(&load_velocity(&args.velocity, &g)?, &args, &g),
        Command::Chain(args) => chain(&load_velocity(&args.velocity, &g)?, &args, &g),
        Command::Simulate(args) => simulate_cmd(&args, &g),
        Command::Pde(args) => pde(&args, &g),
        Command::Compare(args) => compare(&args, &g),
    })
}

fn load_config(g: &Global) -> Result<(ExperimentConfig, VelocitySet)> {
    let path = g.config.as_ref().context("--config is required")?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let vs = cfg.velocity.load(path.parent())?;
    Ok((cfg, vs))
}

fn load_velocity(v: &VelocityArg, g: &Global) -> Result<VelocitySet> {
    match &v.velocity {
        Some(s) if Path::new(s).is_file() => Ok(VelocitySet::from_path(Path::new(s))?),
        Some(s) => Ok(preset(s)?),
        None => Ok(load_config(g)?.1),
    }
}

fn output(g: &Global) -> Result<Box<dyn Write>> {
    Ok(match &g.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn check(vs: &VelocitySet) -> Result<()> {
    let span = vs.check_span()?;
    let av = vs.assumption_av_report();
    let independent = vs.check_integer_independence()?;
    println!("velocities: {}", vs.velocities().iter().map(|v| v.render(vs.basis())).collect::<Vec<_>>().join(" "));
    println!("dimension: {}  species: {}  collisions: {}", vs.dim(), vs.len(), vs.collision_set().len());
    println!("spans R^d: {} (rank {})", span.spans, span.rank);
    println!("Gram matrix invertible: {} (min eigenvalue {:e})", av.invertible, av.min_eigenvalue);
    println!("integer independent: {independent}");
    println!("pair form: {}", vs.pair_form().map_or("no".to_string(), |p| format!("yes, n = {}", p.n())));
    match (vs.kappa(), vs.a_bound()) {
        (Some(k), Some(b)) => println!("kappa: {k}  theorem regime: a < {b:?}"),
        _ => println!("kappa: unavailable without a pair form"),
    }
    println!("p_*: {:?}", vs.p_star());
    if let Ok(c) = vs.coupling() {
        for (k, i, j, l, v) in c.nonzeros() {
            println!("C[{k}][{i}][{j}][{l}] = {v:?}");
        }
    }
    if !span.spans || !av.invertible {
        bail!("velocity set fails the standing assumptions");
    }
    Ok(())
}

fn exact(vs: &VelocitySet, args: &ExactArgs, g: &Global) -> Result<()> {
    let gen = build_generators(args.n, args.a, vs)?;
    let mut rng = stream(g.seed.unwrap_or(0), "exact", args.n as u64, 0);
    let mut out = output(g)?;
    writeln!(out, "sample,stationarity,adjoint_sym_ex,adjoint_anti_ex,adjoint_sym_c")?;
    let mut worst: f64 = 0.0;
    for s in 0..args.samples {
        let lambda: Vec<f64> = (0..=vs.dim()).map(|_| rng.random_range(-args.radius..=args.radius)).collect();
        let stat = stationarity_residual(&gen, vs, &lambda)?;
        let adj = adjoint_residuals(&gen, vs, &lambda)?;
        writeln!(out, "{s},{stat:?},{:?},{:?},{:?}", adj.sym_ex, adj.anti_ex, adj.sym_c)?;
        worst = worst.max(stat).max(adj.max());
    }
    out.flush()?;
    eprintln!("states: {}  worst residual: {worst:e}", gen.states());
    if worst > args.tol {
        return Err(ToleranceFailure(format!("residual {worst:e} exceeds {:e}", args.tol)).into());
    }
    Ok(())
}

fn gap(vs: &VelocitySet, args: &BoxArgs, g: &Global) -> Result<()> {
    let kappa = vs.kappa();
    let mut out = output(g)?;
    writeln!(out, "M,i,size,zero_multiplicity,gap,gap_scaled")?;
    let mut failures = Vec::new();
    for &m in &args.m_list {
        let surfaces = enumerate_surfaces(m, vs)?;
        let labels: Vec<_> = surfaces.keys().cloned().collect();
        let reports: Vec<_> = {
            use rayon::prelude::*;
            labels.par_iter().map(|l| spectral_gap(&surfaces[l])).collect::<Result<Vec<_>, _>>()?
        };
        for (label, r) in labels.iter().zip(&reports) {
            let scaled = kappa.map_or(f64::NAN, |k| r.gap * ((2 * m + 1) as f64).powi(k as i32));
            writeln!(
                out,
                "{m},\"{}\",{},{},{:?},{:?}",
                label.render(vs.basis()),
                r.states,
                r.zero_multiplicity,
                r.gap,
                scaled
            )?;
            if r.zero_multiplicity != 1 {
                failures.push(format!("M={m} i={}: {} zero eigenvalues", label.render(vs.basis()), r.zero_multiplicity));
            }
        }
    }
    out.flush()?;
    if !failures.is_empty() {
        return Err(ToleranceFailure(failures.join("; ")).into());
    }
    Ok(())
}

fn chain(vs: &VelocitySet, args: &BoxArgs, g: &Global) -> Result<()> {
    let mut out = output(g)?;
    writeln!(out, "M,i,D_size,k_star,attains_max,longest_chain,cor_ratio,cor_bound,cor_pass,kernel_discrepancy")?;
    let mut failures = Vec::new();
    for &m in &args.m_list {
        for (label, ks) in enumerate_kspaces(m, vs)? {
            let star = find_maximizer(&ks)?;
            let attains = ks.weight_of(&star) == Some(ks.max_weight());
            let mut longest = 0;
            for k in ks.vectors() {
                longest = longest.max(build_k_chain(&ks, k, &star)?.len());
            }
            let cor = verify_cor_sg_k(&ks)?;
            let kernel = kernel_consistency(&ks, 3);
            let name = label.render(vs.basis());
            writeln!(
                out,
                "{m},\"{name}\",{},\"{star:?}\",{attains},{longest},{:?},{:?},{},{kernel}",
                ks.len(),
                cor.ratio,
                cor.bound,
                cor.pass
            )?;
            if !attains || !cor.pass || kernel != 0 {
                failures.push(format!("M={m} i={name}"));
            }
        }
    }
    out.flush()?;
    if !failures.is_empty() {
        return Err(ToleranceFailure(format!("k-space audit failed for {}", failures.join(", "))).into());
    }
    Ok(())
}

fn simulate_cmd(args: &SimulateArgs, g: &Global) -> Result<()> {
    let (cfg, vs) = load_config(g)?;
    let n = args.n.or(cfg.n_list.first().copied()).context("no lattice size given")?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let params = SimParams::new(&vs, n, cfg.a, cfg.t_end, cfg.report_times())?;
    let field = lambda_field_from_phi(&vs, &PerturbationField::new(cfg.phi.clone(), cfg.a)?, n)?;
    let mut rng = stream(cfg.seed, "replica", n as u64, 0);
    let initial = sample(&field, &vs, &mut rng);
    let traj = simulate(&params, &initial, &mut rng)?;
    let mut summary = BufWriter::new(File::create(dir.join("snapshots.csv"))?);
    writeln!(summary, "index,t,file,particles")?;
    for (i, (t, c)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:04}.lgkc");
        let mut f = BufWriter::new(File::create(dir.join(&name))?);
        c.write_snapshot(&vs, &mut f)?;
        f.flush()?;
        writeln!(summary, "{i},{t:?},{name},{}", c.counts().iter().sum::<u64>())?;
    }
    summary.flush()?;
    eprintln!(
        "N = {n}: {} exchanges, {} collisions accepted",
        traj.counters.exchange_accepts, traj.counters.collision_accepts
    );
    Ok(())
}

fn pde(args: &PdeArgs, g: &Global) -> Result<()> {
    let (cfg, vs) = load_config(g)?;
    let grid = args.grid.unwrap_or(cfg.grid);
    let t_end = args.t_end.unwrap_or(cfg.t_end);
    let mut times: Vec<f64> = cfg.report_times().into_iter().filter(|&t| t <= t_end).collect();
    if times.last() != Some(&t_end) {
        times.push(t_end);
    }
    let mut state = PdeState64::new(&vs, grid, &cfg.phi)?;
    let fields: Vec<_> = cfg.functionals.iter().map(|f| f.field.clone()).collect();
    let series = integrate(&mut state, &times, &fields, cfg.cfl)?;
    let mut out = output(g)?;
    writeln!(out, "t,functional_id,value")?;
    for (t, row) in series.times.iter().zip(&series.values) {
        for (f, v) in cfg.functionals.iter().zip(row) {
            writeln!(out, "{t:?},{},{v:?}", f.id)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn compare(args: &CompareArgs, g: &Global) -> Result<()> {
    let (cfg, vs) = load_config(g)?;
    let dir = g.out.clone().or_else(|| cfg.out.clone()).context("no output directory (--out or config `out`)")?;
    let report = run_comparison(&cfg, &vs)?;
    for path in emit_reports(&report, &cfg, &dir, args.svg)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
