use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mclab::exact::Method;
use mclab::expcli::{self, CompareOptions, ExperimentConfig, Overrides, RawConfig, RunStatus};
use mclab::krylov::KrylovSize;
use mclab::reservoir::{generate, GeneratorKind, GeneratorSpec};
use mclab::McError;

#[derive(Parser)]
#[command(name = "mclab", version, about = "Memory capacity of linear echo state networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON or TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Shrink to a laptop-sized run (N <= 30, T <= 3000).
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a per-lag comparison table for one generated reservoir.
    Compare {
        #[arg(long)]
        kind: GeneratorKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rho: Option<f64>,
        /// Comma-separated: naive,eigen_neutral,osm,osm_plus,montecarlo,stationary,oracle
        #[arg(long, value_delimiter = ',', default_value = "naive,osm,osm_plus")]
        methods: Vec<Method>,
        #[arg(long)]
        tau_max: Option<usize>,
        #[arg(long, default_value = "auto")]
        m: KrylovSize,
        #[arg(long, default_value_t = 1000)]
        l: usize,
        #[arg(long = "T", default_value_t = 100_000)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the eigenvalues of a generated reservoir as `re,im`.
    Eigplot {
        #[arg(long)]
        kind: GeneratorKind,
        #[arg(long)]
        n: usize,
        /// Spectral radius; omitted keeps the circular-law normalization.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("mclab: {err}");
    ExitCode::from(code)
}

fn config_code(err: &McError) -> u8 {
    match err {
        McError::Config(_) | McError::InvalidArgument(_) | McError::NotRescalable(_) | McError::EspViolation { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("MCLAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Run { config, desk, out, seed } => {
            let cfg = RawConfig::load(&config)
                .and_then(|raw| ExperimentConfig::resolve(raw, &Overrides { desk, seed, out_dir: out }));
            let cfg = match cfg {
                Ok(c) => c,
                Err(e) => return fail(2, e),
            };
            match expcli::run(&cfg) {
                Ok(m) => {
                    for f in &m.failures {
                        eprintln!("failed: {} {}: {}", f.stage, f.method.as_deref().unwrap_or(""), f.message);
                    }
                    println!("{} files written to {}", m.outputs.len(), cfg.out_dir.display());
                    if m.status == RunStatus::Failed {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(1, e),
            }
        }
        Command::Compare { kind, n, rho, methods, tau_max, m, l, t, seed } => {
            let rho = if kind == GeneratorKind::DelayShift { rho } else { Some(rho.unwrap_or(0.9)) };
            let spec = GeneratorSpec::new(kind, n, rho, seed);
            let sys = match spec.validate().and_then(|_| generate(&spec)) {
                Ok(s) => s,
                Err(e) => return fail(config_code(&e), e),
            };
            let opts = CompareOptions { m, l, seed, t, mask: spec.effective_mask() };
            let tau_max = tau_max.unwrap_or((3 * n).div_ceil(2));
            match expcli::compare_methods(&sys, tau_max, &methods, &opts) {
                Ok(table) => {
                    print!("{}", table.to_csv());
                    for (method, col) in &table.columns {
                        if let Err(msg) = col {
                            eprintln!("{}: {msg}", method.name());
                        }
                    }
                    if table.columns.iter().all(|(_, c)| c.is_err()) {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(2, e),
            }
        }
        Command::Eigplot { kind, n, rho, seed } => {
            let spec = GeneratorSpec::new(kind, n, rho, seed);
            match spec.validate().and_then(|_| generate(&spec)) {
                Ok(sys) => {
                    print!("{}", expcli::eigen_csv(&sys));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(config_code(&e), e),
            }
        }
    }
}
