use ahym::cli::{error_json, run, to_json_string, write_artifacts, Command};
use ahym::config::parse_config;
use ahym::Error;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ahym",
    about = "0-calculus operators and the Yang-Mills boundary value problem on the hyperbolic ball"
)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat key=value configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized fields (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: &Args) -> Result<String, Error> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let art = run(args.command, &cfg)?;
    write_artifacts(&cfg.output_dir, &art)?;
    Ok(to_json_string(&art.report))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::from(1)
        }
    }
}
