use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invopt_cli::bench::{run_benchmark, BenchSpec, Variant};
use invopt_cli::commands::{self, GradArgs};
use invopt_cli::config::RunConfig;
use invopt_cli::output::{OutDir, VERSION};
use invopt_cli::{CliError, CliResult};
use invopt_core::grad::GradMethod;

#[derive(Parser)]
#[command(name = "invopt", version = VERSION, about = "Multi-echelon inventory simulation, gradients and optimization")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores - 1, at least 1).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network from a generator spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Simulate one path and write the trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Sample-path gradient of total cost.
    Grad {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bp")]
        method: GradMethod,
        /// Run bp and ipa and print their max relative difference.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 1e-6)]
        fd_step: f64,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Two-stage (or single-stage) optimization.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the epoch logs already in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Mean cost of a policy over the configured replications.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Wall-clock scaling of the simulation and gradient kernels.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "sim-sparse,bp-sparse")]
        variants: Vec<String>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 10.0)]
        degree: f64,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 4096.0)]
        mem_limit_mb: f64,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).saturating_sub(1).max(1)
}

fn load_config(path: &Path, cli: &Cli, workers: usize) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    // where the run folder lives is not part of what reproduces it
    cfg.output = None;
    cfg.workers = Some(workers);
    Ok((cfg, out))
}

fn dispatch(cli: &Cli, workers: usize) -> CliResult<()> {
    let mut stdout = std::io::stdout();
    let log = &mut stdout;
    match &cli.command {
        Command::Generate { spec } => {
            let out = OutDir::create(cli.out.as_deref().unwrap_or("out".as_ref()))?;
            commands::generate(spec, cli.seed.unwrap_or(0), &out, log)
        }
        Command::Simulate { config, policy } => {
            let (cfg, out) = load_config(config, cli, workers)?;
            commands::simulate(&cfg, policy.as_deref(), &OutDir::create(&out)?, log)
        }
        Command::Grad {
            config,
            method,
            check,
            fd_step,
            policy,
        } => {
            let (cfg, out) = load_config(config, cli, workers)?;
            let args = GradArgs {
                method: *method,
                check: *check,
                fd_step: *fd_step,
            };
            commands::grad(&cfg, args, policy.as_deref(), &OutDir::create(&out)?, log)
        }
        Command::Optimize { config, resume } => {
            let (cfg, out) = load_config(config, cli, workers)?;
            commands::optimize(&cfg, *resume, &OutDir::create(&out)?, log)
        }
        Command::Evaluate { config, policy } => {
            let (cfg, out) = load_config(config, cli, workers)?;
            commands::evaluate(&cfg, policy.as_deref(), &OutDir::create(&out)?, log)
        }
        Command::Benchmark {
            sizes,
            variants,
            reps,
            horizon,
            degree,
            layers,
            mem_limit_mb,
        } => {
            let spec = BenchSpec {
                sizes: sizes.clone(),
                variants: variants.iter().map(|v| v.parse()).collect::<CliResult<Vec<Variant>>>()?,
                reps: *reps,
                horizon: *horizon,
                avg_degree: *degree,
                layers: *layers,
                seed: cli.seed.unwrap_or(0),
                mem_limit_mb: *mem_limit_mb,
            };
            let out = OutDir::create(cli.out.as_deref().unwrap_or("out".as_ref()))?;
            let report = run_benchmark(&spec, &mut |c| match c.median {
                Some(m) => println!("{:>10} {:>7}  median {m:.4e} s  mad {:.2e}", c.variant, c.n, c.mad.unwrap_or(0.0)),
                None => println!("{:>10} {:>7}  /", c.variant, c.n),
            })?;
            for f in &report.fits {
                match f.slope {
                    Some(s) => println!("{:>10} slope {s:.3} over {:?}", f.variant, f.sizes),
                    None => println!("{:>10} slope / (fewer than 3 sizes)", f.variant),
                }
            }
            out.write_json("benchmark.json", &report)?;
            out.write_text("benchmark.csv", &report.to_csv())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(default_workers);
    let result = if workers == 0 {
        Err(CliError::Config("--workers must be at least 1".into()))
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli, workers)))
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
