use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semifix::cli::{self, Options};
use semifix::Error;

#[derive(Parser)]
#[command(version, about = "Implicit fixed-point schemes for commuting nonexpansive maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for traces and reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for certification and fixed-point sampling.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write trace.csv and summary.json.
    Run(Common),
    /// Recheck a trace written by `run`; exits 1 if a check fails.
    Verify(Common),
    /// Run once per parameter value and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of gamma, log_c, outer_steps, inner_tol.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Certify generators and contraction without running.
    Certify(Common),
}

impl Common {
    fn options(&self) -> Options {
        Options { out: self.out.clone(), seed: self.seed }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => match cli::run(&c.config, &c.options()) {
            Ok(out) => {
                if !c.quiet {
                    let s = &out.summary;
                    println!("limit {:?} after {} steps", s.limit, s.steps);
                    if let Some(d) = s.distance_to_oracle {
                        println!("distance to oracle {d:.3e}");
                    }
                    for w in &s.warnings {
                        println!("warning: {w}");
                    }
                    println!("verdict {}", if s.verdict { "pass" } else { "fail" });
                    println!("wrote {}", out.out_dir.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Verify(c) => match cli::verify_suite(&c.config, &c.options()) {
            Ok(report) => {
                if !c.quiet {
                    for ch in &report.checks {
                        let tag = if ch.passed { "PASS" } else { "FAIL" };
                        println!("{tag} {:<24} {:>12.4e} <= {:.1e}", ch.name, ch.value, ch.threshold);
                    }
                }
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { common, param, values } => {
            match cli::sweep(&common.config, &common.options(), &param, &values) {
                Ok(rows) => {
                    if !common.quiet {
                        println!("{param:>12} {:>6} {:>14} {:>14}", "steps", "residual", "oracle_dist");
                        for r in &rows {
                            let dist = r.distance_to_oracle.map_or("-".into(), |d| format!("{d:.4e}"));
                            println!("{:>12} {:>6} {:>14.4e} {:>14}", r.value, r.steps, r.max_generator_residual, dist);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Certify(c) => match cli::certify(&c.config, &c.options()) {
            Ok(report) => {
                if !c.quiet {
                    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
