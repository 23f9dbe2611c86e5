use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use tracelogic::dsl::{parse, render_spec, SpecFile};
use tracelogic::engine::{search, BranchOrder, SearchOptions, Status};
use tracelogic::fixtures::{self, FIXTURES};
use tracelogic::report::RunReport;

const EXIT_CLEAN: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CAPPED: u8 = 3;

#[derive(Parser)]
#[command(name = "tracelogic", version, about = "Check protocol roles against their local trace assertions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the scenario for runs that break an assertion.
    Verify(VerifyArgs),
    /// Check syntax and scoping, then print the normalized specification.
    Parse { file: PathBuf },
    /// List the bundled specifications.
    Fixtures,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Specification file (.tlp).
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    file: Option<PathBuf>,
    /// Use a bundled specification instead of a file.
    #[arg(long)]
    fixture: Option<String>,
    /// Report every violation instead of stopping at the first.
    #[arg(long)]
    all: bool,
    /// Give up after exploring this many states (exit status 3).
    #[arg(long, value_name = "N")]
    max_states: Option<usize>,
    /// Give up after this many seconds (exit status 3).
    #[arg(long, value_name = "SECS")]
    time_limit: Option<f64>,
    /// Order in which roles are tried at each step.
    #[arg(long, value_enum, default_value_t = Order::Input)]
    seed_order: Order,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Print nothing; the exit status carries the verdict.
    #[arg(long)]
    quiet: bool,
    /// Do not follow a run past the first assertion it breaks.
    #[arg(long)]
    halt_on_violation: bool,
    /// Worker threads for the search.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Input,
    Lex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(match cli.command {
        Command::Verify(args) => verify(args),
        Command::Parse { file } => match load(&file) {
            Ok(spec) => {
                print!("{}", render_spec(&spec));
                EXIT_CLEAN
            }
            Err(msg) => {
                eprintln!("{msg}");
                EXIT_USAGE
            }
        },
        Command::Fixtures => {
            for f in FIXTURES {
                println!("{:<16} {}", f.name, f.description);
            }
            EXIT_CLEAN
        }
    })
}

fn load(path: &PathBuf) -> Result<SpecFile, String> {
    let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&src).map_err(|d| format!("{}:{d}", path.display()))
}

fn verify(args: VerifyArgs) -> u8 {
    let (source, spec) = match (&args.fixture, &args.file) {
        (Some(name), _) => match fixtures::fixture(name) {
            Ok(spec) => (format!("fixture:{name}"), spec),
            Err(e) => {
                eprintln!("{e}");
                return EXIT_USAGE;
            }
        },
        (None, Some(path)) => match load(path) {
            Ok(spec) => (path.display().to_string(), spec),
            Err(msg) => {
                eprintln!("{msg}");
                return EXIT_USAGE;
            }
        },
        (None, None) => unreachable!("clap requires a file or a fixture"),
    };
    let scenario = match spec.to_scenario() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{source}: {e}");
            return EXIT_USAGE;
        }
    };
    let time_limit = match args.time_limit {
        Some(secs) if !(secs.is_finite() && secs > 0.0) => {
            eprintln!("--time-limit must be a positive number of seconds");
            return EXIT_USAGE;
        }
        Some(secs) => Some(Duration::from_secs_f64(secs)),
        None => None,
    };

    let file_opts = &spec.options;
    let options = SearchOptions {
        stop_at_first: !(args.all || file_opts.all.unwrap_or(false)),
        max_states: args.max_states.or(file_opts.max_states.map(|n| n as usize)),
        order: match args.seed_order {
            Order::Input => BranchOrder::Input,
            Order::Lex => BranchOrder::Lex,
        },
        continue_after_violation: !(args.halt_on_violation || file_opts.halt_on_violation.unwrap_or(false)),
        jobs: args.jobs as usize,
        time_limit,
        ..SearchOptions::default()
    };

    let start = Instant::now();
    let outcome = search(&scenario, &options);
    let report = RunReport { source, scenario: &scenario, options: &options, outcome: &outcome, elapsed: start.elapsed() };
    if !args.quiet {
        match args.format {
            Format::Text => print!("{}", report.text()),
            Format::Json => {
                let mut out = std::io::stdout().lock();
                let written = serde_json::to_writer_pretty(&mut out, &report).map_err(std::io::Error::from);
                if written.and_then(|_| writeln!(out)).is_err() {
                    return EXIT_USAGE;
                }
            }
        }
    }
    match (outcome.status, outcome.violations.is_empty()) {
        (_, false) => EXIT_VIOLATION,
        (Status::Capped, true) => EXIT_CAPPED,
        (Status::Exhausted, true) => EXIT_CLEAN,
    }
}
