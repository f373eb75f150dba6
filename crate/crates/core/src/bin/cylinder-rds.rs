use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cylinder_rds::harness::{self, exit, Config, RunManifest, RunOptions, Stage};
use cylinder_rds::Error;

#[derive(Parser)]
#[command(name = "cylinder-rds", version, about = "Random dynamical systems on the cylinder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `base.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides `run.workers`).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Simulate(Common),
    /// Pullback attractor with covering and cardinality reports.
    Attractor(Common),
    /// Lyapunov spectrum, extremal exponent, semiuniform bound, contraction certificate.
    Lyapunov(Common),
    /// Periodic curves and winding periods.
    Curves(Common),
    /// Random periodicity and shift invariance of the periods.
    Verify(Common),
    /// All configured stages, or a replay of an earlier run.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Manifest (or run directory) to replay bit for bit.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Structural diff of two runs.
    Compare { a: PathBuf, b: PathBuf },
}

fn load(common: &Common) -> Result<Config, Error> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Config::from_toml_str("", std::env::vars()),
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn report(m: &RunManifest) -> i32 {
    println!("run directory: {}", m.run_dir);
    for s in &m.stages {
        match &s.error {
            Some(e) => println!("stage {:<10} {:?}: {e}", s.name, s.status),
            None => println!("stage {:<10} {:?} ({:.2}s)", s.name, s.status, s.seconds),
        }
    }
    for (k, c) in &m.acceptance {
        println!("{} {k}: {}", if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    harness::exit_code(m)
}

fn run(common: &Common, stages: Option<Vec<Stage>>) -> Result<i32, Error> {
    let cfg = load(common)?;
    let workers = common.workers.unwrap_or(cfg.run.workers);
    let opts = RunOptions {
        out_dir: common.out.clone(),
        seed: common.seed,
        stages,
    };
    let manifest = with_pool(workers, || harness::run_pipeline(&cfg, &opts))??;
    Ok(report(&manifest))
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Simulate(c) => run(&c, Some(vec![Stage::Simulate])),
        Command::Attractor(c) => run(&c, Some(vec![Stage::Attractor])),
        Command::Lyapunov(c) => run(&c, Some(vec![Stage::Lyapunov])),
        Command::Curves(c) => run(&c, Some(vec![Stage::Curves])),
        Command::Verify(c) => run(&c, Some(vec![Stage::Verify])),
        Command::Pipeline { common, replay: None } => run(&common, None),
        Command::Pipeline {
            common,
            replay: Some(path),
        } => {
            let original = RunManifest::load(&path)?;
            let workers = common.workers.unwrap_or(0);
            let out = common.out.clone();
            let (again, rep) = with_pool(workers, || harness::replay(&original, out.as_deref()))??;
            let code = report(&again);
            println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
            Ok(if rep.identical { code } else { exit::ACCEPTANCE_FAILURE })
        }
        Command::Compare { a, b } => {
            let diff = harness::compare_runs(&RunManifest::load(&a)?, &RunManifest::load(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&diff).expect("diff serializes"));
            Ok(if diff.is_empty() {
                exit::PASS
            } else {
                exit::ACCEPTANCE_FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            harness::error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
