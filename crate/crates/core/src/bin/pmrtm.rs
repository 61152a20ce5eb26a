use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmrtm::config::{RunConfig, SliceCount};
use pmrtm::pipeline::{self, Stage};
use pmrtm::Error;

#[derive(Parser)]
#[command(name = "pmrtm", version, about = "Wave-packet reverse-time continuation and imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Worker threads for the box loops (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fixed-order reductions and a single worker, for byte-identical output.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Finest frequency scale.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Number of time intervals (overrides the automatic choice).
    #[arg(long, global = true)]
    ns: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for generated test data.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate boundary records and snapshots with the finite-difference solver.
    Fdsim { config: PathBuf },
    /// Per-box energies of the data slices.
    Decompose { config: PathBuf },
    /// Reverse-time continuation of the boundary record.
    Rtc { config: PathBuf },
    /// Image the scattered records.
    Migrate { config: PathBuf },
    /// Export angle gathers as CSV.
    Gather { config: PathBuf },
    /// Run the invariant suite.
    Selftest,
    /// Per-box step time for doubling grid sizes.
    Bench {
        /// Grid sizes, each processed with the finest scale it supports.
        #[arg(long, value_delimiter = ',', default_value = "128,256")]
        sizes: Vec<usize>,
    },
}

fn load(path: &PathBuf, flags: &Flags) -> pmrtm::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(k) = flags.kmax {
        cfg.rtc.k_max = k;
    }
    if let Some(n) = flags.ns {
        if n == 0 {
            return Err(Error::Config("--ns must be positive".into()));
        }
        cfg.rtc.slices = SliceCount::Fixed(n);
    }
    if let Some(o) = &flags.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= flags.deterministic;
    if let Some(t) = flags.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn init_threads(threads: usize, deterministic: bool) {
    // results do not depend on the worker count; one worker also removes
    // timing variation from logs
    let n = if deterministic { 1 } else { threads };
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn stage(cli: &Cli, stage: Stage, path: &PathBuf) -> pmrtm::Result<()> {
    let cfg = load(path, &cli.flags)?;
    init_threads(cfg.threads, cfg.deterministic);
    for p in pipeline::run(stage, &cfg)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fdsim { config } => stage(&cli, Stage::Fdsim, config),
        Command::Decompose { config } => stage(&cli, Stage::Decompose, config),
        Command::Rtc { config } => stage(&cli, Stage::Rtc, config),
        Command::Migrate { config } => stage(&cli, Stage::Migrate, config),
        Command::Gather { config } => stage(&cli, Stage::Gather, config),
        Command::Selftest => {
            init_threads(cli.flags.threads.unwrap_or(0), cli.flags.deterministic);
            pipeline::selftest(cli.flags.seed.unwrap_or(0)).map(|checks| {
                let ok = checks.iter().all(|c| c.pass);
                for c in &checks {
                    println!("{c}");
                }
                ok
            })
            .map(|ok| if !ok { std::process::exit(3) })
        }
        Command::Bench { sizes } => {
            init_threads(cli.flags.threads.unwrap_or(0), cli.flags.deterministic);
            pipeline::bench(sizes, 2560.0).map(|rows| {
                println!("n,seconds_per_box,growth");
                let mut prev: Option<f64> = None;
                for (n, t) in rows {
                    let g = prev.map_or(String::new(), |p| format!("{:.3}", t / p));
                    println!("{n},{t:.6e},{g}");
                    prev = Some(t);
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} code={} message=\"{}\"", e.kind(), e.exit_code(), e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
