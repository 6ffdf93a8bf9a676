use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duhamel_cli::run::{write_failure, EXIT_CONFIG};
use duhamel_cli::{parse_config, preset_config, run, Command};

#[derive(Parser)]
#[command(name = "duhamel", version, about = "Solve, verify and sweep L1-contraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve both problems of the pair and write the trajectories
    Solve(Args),
    /// Solve the dual equation and write its exponential certificate
    Dual(Args),
    /// Compute fractional heat kernels and compare with closed forms
    Kernel(Args),
    /// Run every configured check
    Verify(Args),
    /// Run the checks at every grid size in `sweep_n`
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration file
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario to run instead of a file
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Dual(a) => (Command::Dual, a),
        Cmd::Kernel(a) => (Command::Kernel, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let parsed = match (&args.config, &args.preset) {
        (Some(path), _) => parse_config(path),
        (None, Some(name)) => preset_config(name),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let mut cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            let _ = write_failure(&args.out, cmd.as_str(), EXIT_CONFIG, "configuration", &e.to_string());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match pool.install(|| run(&cfg, cmd, &args.out)) {
        Ok(outcome) => {
            for r in &outcome.reports {
                println!(
                    "{} {:<18} lhs={:.6e} rhs={:.6e} margin={:+.3e} tol={:.3e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.id.as_str(),
                    r.lhs,
                    r.rhs,
                    r.margin,
                    r.tolerance
                );
            }
            println!("wrote {} files to {}", outcome.files.len() + 1, args.out.display());
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let _ = write_failure(&args.out, cmd.as_str(), e.exit_code(), e.kind(), &e.to_string());
            ExitCode::from(e.exit_code())
        }
    }
}
