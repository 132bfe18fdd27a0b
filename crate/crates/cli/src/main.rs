use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lbe_cli::{
    emit_report, parse_config, run_command, Command, EXIT_ERROR, EXIT_FAIL, EXIT_PASS, OUTPUT_ENV,
};

/// Linearized Boltzmann solver and verification suite.
#[derive(Parser, Debug)]
#[command(name = "lbe", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides LBE_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("lbe: {msg}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| format!("{}: {e}", cli.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        cfg.output_dir = dir.into();
    }
    if let Some(dir) = cli.out {
        cfg.output_dir = dir;
    }
    let report = run_command(&cfg, cli.command).map_err(|e| e.to_string())?;
    emit_report(&report, &cfg.output_dir)
        .map_err(|e| format!("{}: {e}", cfg.output_dir.display()))?;
    for v in &report.verdicts {
        println!(
            "{:<24} {}  constant {:.6e}  violation {:.3e}",
            v.lemma,
            if v.pass { "pass" } else { "FAIL" },
            v.constant,
            v.violation
        );
    }
    if let Some(reason) = &report.failure {
        println!("failure: {reason}");
    }
    Ok(if report.passed() { EXIT_PASS } else { EXIT_FAIL })
}
