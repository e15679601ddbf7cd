use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pnp_afem::afem::{fit_rate, run_loop, LoopConfig, RefinementMode, StepView};
use pnp_afem::io::{write_convergence_csv_file, write_rates, write_vtk_file};
use pnp_afem::par;
use pnp_afem::problem::Problem;
use pnp_afem::quadrature::RuleOrder;
use pnp_afem::recovery::{gradient_recover, WeightScheme};
use pnp_afem::solver::SolverConfig;

#[derive(Parser)]
#[command(name = "pnp-afem", version, about = "Adaptive P1 finite elements for steady Poisson-Nernst-Planck systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write CSV, VTK and rate files.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    /// Smooth manufactured solution.
    Sech,
    /// Solution with a corner singularity at the origin.
    Singular,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Area,
    Uniform,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    example: Example,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
    /// Stop once every global estimator is at or below this value.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Maximum-marking threshold in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Do not solve on meshes with more vertices than this.
    #[arg(long = "max-dof", default_value_t = 100_000)]
    max_dof: usize,
    #[arg(long = "max-steps", default_value_t = 60)]
    max_steps: usize,
    /// Patch weights for gradient recovery.
    #[arg(long, value_enum, default_value = "area")]
    weights: Weights,
    /// Degree of the assembly quadrature (2, 4 or 10).
    #[arg(long = "quad-order", default_value_t = 4)]
    quad_order: usize,
    /// Worker threads for element loops; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if args.threads == 1 {
        par::set_parallel(false);
    } else if args.threads > 1 && !par::init_threads(args.threads) {
        log::warn!("could not size the worker pool to {} threads", args.threads);
    }

    let problem = Problem::by_name(match args.example {
        Example::Sech => "sech",
        Example::Singular => "singular",
    })?;
    let Some(rule) = RuleOrder::from_degree(args.quad_order) else {
        bail!("unsupported quadrature order {} (expected 2, 4 or 10)", args.quad_order);
    };
    let solver = SolverConfig {
        rule,
        ..SolverConfig::default()
    };
    let weights = match args.weights {
        Weights::Area => WeightScheme::Area,
        Weights::Uniform => WeightScheme::Uniform,
    };
    let cfg = LoopConfig {
        tol: args.tol,
        theta: args.theta,
        max_dofs: args.max_dof,
        max_steps: args.max_steps,
        mode: match args.mode {
            Mode::Uniform => RefinementMode::Uniform,
            Mode::Adaptive => RefinementMode::Adaptive,
        },
        weights,
    };
    cfg.validate()?;
    solver.validate()?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create output directory {}", args.out_dir.display()))?;

    let out = args.out_dir.as_path();
    let outcome = run_loop(&problem, &cfg, &solver, |view| write_step(out, view, weights));
    let (records, failure) = match outcome {
        Ok(run) => {
            log::info!("stopped: {:?}", run.stop);
            (run.records, None)
        }
        Err(f) => (f.records, Some(f.error)),
    };

    if !records.is_empty() {
        let csv = out.join("convergence.csv");
        write_convergence_csv_file(&records, &csv).with_context(|| format!("writing {}", csv.display()))?;
    }
    if let Some(e) = failure {
        return Err(anyhow::Error::new(e).context("study aborted"));
    }
    if records.len() >= 3 {
        let rates = fit_rate(&records)?;
        let path = out.join("rates.txt");
        let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_rates(&rates, std::io::BufWriter::new(file))?;
        for (name, slope) in &rates.entries {
            println!("{name:>8} slope {slope:+.4}");
        }
    } else {
        log::warn!("fewer than 3 steps; rates.txt not written");
    }
    let last = records.last().expect("a successful run has at least one record");
    println!("{} steps, final mesh {} dofs", records.len(), last.dofs);
    Ok(())
}

fn write_step(out: &Path, view: &StepView, weights: WeightScheme) -> pnp_afem::Result<()> {
    let grad_phi = gradient_recover(view.mesh, &view.state.phi, weights)?;
    let path = out.join(format!("step_{}.vtk", view.step));
    write_vtk_file(view.mesh, view.state, Some(view.report), &[("grad_phi", &grad_phi)], &path)
}
