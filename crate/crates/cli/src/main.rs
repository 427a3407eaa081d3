use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pps_cli::compare::Column;
use pps_cli::{compare_files, run_file, sweep, validate_file, CliError, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "pps-sim", version, about = "Run quantized accelerated optimisation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config and write its trace and summary.
    Run { config: PathBuf },
    /// Run every config matching a glob, in parallel.
    Sweep { pattern: String },
    /// Align two traces on cumulative bits and report value ratios.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Column::DualValue)]
        column: Column,
        /// Relative tolerance for "a reached b's final value".
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Print the aligned rows as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Parse a config and check its schedule without running it.
    Validate { config: PathBuf },
}

fn out_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn report_run(path: &Path, r: &pps_cli::RunReport) {
    for w in &r.summary.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    for n in &r.summary.notes {
        eprintln!("note: {}: {n}", path.display());
    }
    println!("{}", r.summary.line());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = out_dir();
    match cli.command {
        Command::Run { config } => match run_file(&config, dir.as_deref()) {
            Ok(r) => {
                report_run(&config, &r);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { pattern } => {
            let results = match sweep(&pattern, dir.as_deref()) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let mut worst = 0;
            for (path, r) in &results {
                match r {
                    Ok(r) => report_run(path, r),
                    Err(e) => {
                        eprintln!("error: {}: {e}", path.display());
                        worst = worst.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(worst as u8)
        }
        Command::Compare { a, b, column, tolerance, json } => match compare_files(&a, &b, column, tolerance) {
            Ok(rep) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&rep).expect("report serialises"));
                } else {
                    println!("bits,value_a,value_b,ratio");
                    for r in &rep.rows {
                        println!("{},{:e},{:e},{:.6}", r.bits, r.value_a, r.value_b, r.ratio);
                    }
                    println!("final: a={:e} ({} bits) b={:e} ({} bits)", rep.final_a, rep.bits_a, rep.final_b, rep.bits_b);
                    match rep.bits_fraction() {
                        Some(f) => println!(
                            "a is within {} of b's final value after {} bits ({:.4} of b's bits)",
                            rep.tolerance,
                            rep.bits_to_match.unwrap(),
                            f
                        ),
                        None => println!("a never gets within {} of b's final value", rep.tolerance),
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Validate { config } => match validate_file(&config) {
            Ok((exp, plan)) => {
                println!(
                    "{}: ok (L={:e}, R={:e}, T={}, epsilon bound={:e})",
                    config.display(),
                    exp.lipschitz(),
                    exp.radius(),
                    plan.horizon,
                    plan.epsilon
                );
                for w in &plan.warnings {
                    eprintln!("warning: {w}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
