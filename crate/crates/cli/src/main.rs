use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use conclab_cli::{parse_config, run_experiment, Kind, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_PASS};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Verify,
    Certify,
    Tails,
    Constants,
    Scan,
}

impl Command {
    fn kind(self) -> Kind {
        match self {
            Command::Verify => Kind::Verify,
            Command::Certify => Kind::Certify,
            Command::Tails => Kind::Tails,
            Command::Constants => Kind::Constants,
            Command::Scan => Kind::Scan,
        }
    }
}

/// Exact and sampled checks of concentration inequalities on finite systems.
#[derive(Debug, Parser)]
#[command(name = "conclab", version)]
struct Args {
    command: Command,
    /// experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// output directory; defaults to `experiment.out`, then `conclab-out`
    #[arg(long)]
    out: Option<PathBuf>,
    /// master seed, overriding `experiment.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads; falls back to CONCLAB_THREADS
    #[arg(long, env = "CONCLAB_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(k) = args.threads.filter(|k| *k > 0) {
        conclab_core::exec::init_threads(k);
    }
    let cfg = match parse_config(&args.config, args.seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("conclab: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if cfg.kind != args.command.kind() {
        eprintln!(
            "conclab: command `{}` does not match experiment.kind = \"{}\"",
            args.command.kind().name(),
            cfg.kind.name()
        );
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("conclab-out"));
    match run_experiment(&cfg, &out) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(if outcome.passed { EXIT_PASS } else { EXIT_CHECK_FAILED } as u8)
        }
        Err(e) => {
            eprintln!("conclab: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
