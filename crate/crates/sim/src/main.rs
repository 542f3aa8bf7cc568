use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collabsafe::{plot, verify, Scenario, SimError, Summary, TraceLog};

#[derive(Parser)]
#[command(name = "collabsafe", version, about = "Collaborative safety filtering for formations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file or preset and write traces.
    Run {
        /// Scenario JSON file; omit when using --preset.
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// tree7, clique8, clique8-dynamic or clique8-fast
        #[arg(long)]
        preset: Option<String>,
    },
    /// Render SVG figures from a trace directory.
    Plot { trace_dir: PathBuf },
    /// Print summary metrics for a trace directory.
    Report { trace_dir: PathBuf },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

const SAFETY_VIOLATION: u8 = 4;

fn fail(e: SimError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, preset } => {
            let scenario = match (scenario, preset) {
                (Some(path), None) => Scenario::load(&path),
                (None, Some(name)) => Scenario::preset(&name),
                (Some(_), Some(_)) => Err(SimError::config("preset", "give a scenario file or --preset, not both")),
                (None, None) => Err(SimError::config("scenario", "give a scenario file or --preset")),
            };
            let scenario = match scenario {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let log = match collabsafe::run(&scenario) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            if let Err(e) = log.write_dir(&out) {
                return fail(e);
            }
            let summary = Summary::of(&log);
            print!("{summary}");
            println!("traces: {}", out.display());
            if !summary.is_safe() {
                eprintln!("safety violation: min h = {}", summary.min_h);
                return ExitCode::from(SAFETY_VIOLATION);
            }
            ExitCode::SUCCESS
        }
        Command::Plot { trace_dir } => {
            let result = TraceLog::read_dir(&trace_dir).and_then(|log| plot::emit_plots(&log, &trace_dir));
            match result {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { trace_dir } => match TraceLog::read_dir(&trace_dir) {
            Ok(log) => {
                let summary = Summary::of(&log);
                print!("{summary}");
                if summary.is_safe() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(SAFETY_VIOLATION)
                }
            }
            Err(e) => fail(e),
        },
        Command::Verify { seed } => {
            let mut failed = 0;
            for c in verify::run_checks(seed) {
                match &c.outcome {
                    Ok(()) => println!("PASS  {}", c.name),
                    Err(why) => {
                        failed += 1;
                        println!("FAIL  {}: {why}", c.name);
                    }
                }
            }
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(SAFETY_VIOLATION)
            }
        }
    }
}
