use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use reoc::automata::{sync_label, traces, ConstraintAutomaton, Step, DEFAULT_TRACE_CAP};
use reoc::connector::Literal;
use reoc::demo::{builtin, run_automaton, DemoConfig, BUILTIN_DEMOS};
use reoc::derivation::{derive, HideMode};
use reoc::dsl::parse_bytes;
use reoc::export::{analyze, export_dot, export_json, import_json};
use reoc::runtime::Policy;

const OK: u8 = 0;
const INPUT: u8 = 1;
const IO: u8 = 2;
const DEADLOCK: u8 = 3;
const CAP: u8 = 4;
const TIMEOUT: u8 = 5;

const MAX_CLI_DEPTH: usize = 8;

#[derive(Parser)]
#[command(name = "reoc", version, about = "Compile, inspect and run Reo connectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a connector file.
    Check { path: PathBuf },
    /// Derive the connector's automaton and write it as JSON or DOT.
    Compile {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        emit: Emit,
        #[arg(long, value_enum, default_value = "none")]
        hide: Hide,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print state, transition and deadlock counts.
    Analyze { path: PathBuf },
    /// List the maximal traces up to a depth.
    Trace {
        path: PathBuf,
        #[arg(long, default_value_t = MAX_CLI_DEPTH)]
        depth: usize,
        /// Comma-separated data values for unconstrained ports; integers
        /// are read as numbers. Defaults to the single value "x".
        #[arg(long, value_delimiter = ',')]
        pool: Vec<String>,
        #[arg(long, value_enum, default_value = "none")]
        hide: Hide,
        /// Give up (exit 4) beyond this many traces.
        #[arg(long, default_value_t = DEFAULT_TRACE_CAP)]
        cap: usize,
    },
    /// Run a producer/consumer demo through a connector.
    Run {
        /// Builtin name (merger, alternator, sequencer) or a .reo/.json file.
        #[arg(long)]
        demo: String,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        producers: u64,
        /// Items per producer.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        items: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "random")]
        policy: PolicyArg,
        /// Seconds before giving up with exit code 5.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        /// Step the coordinator from one thread so the log depends only on the seed.
        #[arg(long)]
        serial: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hide {
    None,
    Internal,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    RoundRobin,
}

/// An error already reported to stderr, carrying the exit code.
struct Fail(u8);

fn fail(code: u8, msg: impl std::fmt::Display) -> Fail {
    eprintln!("reoc: {msg}");
    Fail(code)
}

fn read(path: &Path) -> Result<Vec<u8>, Fail> {
    fs::read(path).map_err(|e| fail(IO, format!("{}: {e}", path.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn hide_mode(h: Hide) -> HideMode {
    match h {
        Hide::None => HideMode::None,
        Hide::Internal => HideMode::Internal,
    }
}

/// Reads a `.reo` connector (derived with `hide`) or a `.json` automaton.
fn load(path: &Path, hide: &HideMode) -> Result<ConstraintAutomaton, Fail> {
    let bytes = read(path)?;
    if is_json(path) {
        let text = String::from_utf8(bytes).map_err(|e| fail(INPUT, format!("{}: {e}", path.display())))?;
        let a = import_json(&text).map_err(|e| fail(INPUT, format!("{}: {e}", path.display())))?;
        return match hide {
            HideMode::None => Ok(a),
            _ => {
                let internal = a.ports_with(reoc::automata::Direction::Internal).map(str::to_string).collect();
                reoc::automata::hide(&a, &internal).map_err(|e| fail(INPUT, e))
            }
        };
    }
    let connector = parse_bytes(&bytes).map_err(|e| fail(INPUT, format!("{}:{e}", path.display())))?;
    derive(&connector, hide).map_err(|e| fail(INPUT, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Fail> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| fail(IO, format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| fail(IO, e)),
    }
}

fn check(path: &Path) -> Result<u8, Fail> {
    if is_json(path) {
        let a = load(path, &HideMode::None)?;
        a.check_well_formed().map_err(|e| fail(INPUT, format!("{}: {e}", path.display())))?;
    } else {
        let bytes = read(path)?;
        parse_bytes(&bytes).map_err(|e| fail(INPUT, format!("{}:{e}", path.display())))?;
    }
    Ok(OK)
}

fn format_step(s: &Step) -> String {
    let data: Vec<String> = s.data.iter().map(|(p, d)| format!("{p}={d}")).collect();
    format!("{} {{{}}}", sync_label(&s.sync), data.join(","))
}

fn pool_value(s: &str) -> Literal {
    s.parse().map(Literal::Int).unwrap_or_else(|_| Literal::str(s))
}

fn trace(path: &Path, depth: usize, pool: &[String], hide: Hide, cap: usize) -> Result<u8, Fail> {
    if depth > MAX_CLI_DEPTH {
        return Err(fail(INPUT, format!("depth {depth} exceeds the limit of {MAX_CLI_DEPTH}")));
    }
    let a = load(path, &hide_mode(hide))?;
    let pool: Vec<Literal> = if pool.is_empty() {
        vec![Literal::str("x")]
    } else {
        pool.iter().map(|s| pool_value(s)).collect()
    };
    let all = traces(&a, depth, &pool, cap).map_err(|e| fail(CAP, e))?;
    let mut out = String::new();
    for t in all.iter().filter(|t| !t.is_empty()) {
        let steps: Vec<String> = t.iter().map(format_step).collect();
        out.push_str(&steps.join(" ; "));
        out.push('\n');
    }
    emit(None, &out)?;
    Ok(OK)
}

struct RunArgs {
    demo: String,
    producers: u64,
    items: u64,
    seed: u64,
    policy: PolicyArg,
    timeout: u64,
    serial: bool,
}

fn run(args: RunArgs) -> Result<u8, Fail> {
    let (automaton, mut cfg) = if let Some(c) = builtin(&args.demo) {
        let a = derive(&c, &HideMode::Internal).map_err(|e| fail(INPUT, e))?;
        (a, DemoConfig::for_builtin(&args.demo))
    } else {
        let path = Path::new(&args.demo);
        if !path.exists() {
            return Err(fail(
                IO,
                format!("{}: no such file and not a builtin demo ({})", args.demo, BUILTIN_DEMOS.join(", ")),
            ));
        }
        (load(path, &HideMode::Internal)?, DemoConfig::default())
    };
    cfg.producers = args.producers as usize;
    cfg.items = args.items as usize;
    cfg.seed = args.seed;
    cfg.policy = match args.policy {
        PolicyArg::Random => Policy::Random,
        PolicyArg::RoundRobin => Policy::RoundRobin,
    };
    cfg.timeout = Duration::from_secs(args.timeout);
    cfg.serial = args.serial;
    cfg.log_events = std::env::var("REOC_LOG").is_ok_and(|v| v == "events");

    let report = run_automaton(&automaton, &cfg).map_err(|e| fail(INPUT, e))?;
    let mut out = String::new();
    for e in &report.fires {
        out.push_str(&format!("{e}\n"));
    }
    out.push_str(&format!(
        "produced: {}\nexpected: {}\ndelivered: {}\nfired: {}\naborts: {}\n",
        cfg.producers * cfg.items,
        report.expected.len(),
        report.delivered.len(),
        report.stats.fired,
        report.stats.aborts,
    ));
    emit(None, &out)?;
    if report.timed_out {
        return Err(fail(TIMEOUT, format!("timed out after {} s", args.timeout)));
    }
    if !report.is_exact() {
        return Err(fail(INPUT, "delivered items differ from the expected items"));
    }
    Ok(OK)
}

fn dispatch(cmd: Command) -> Result<u8, Fail> {
    match cmd {
        Command::Check { path } => check(&path),
        Command::Compile { path, emit: kind, hide, out } => {
            let a = load(&path, &hide_mode(hide))?;
            let text = match kind {
                Emit::Json => export_json(&a),
                Emit::Dot => export_dot(&a),
            };
            emit(out.as_deref(), &text)?;
            Ok(OK)
        }
        Command::Analyze { path } => {
            let a = load(&path, &HideMode::None)?;
            let report = analyze(&a);
            emit(None, &report.to_string())?;
            Ok(if report.deadlock_states.is_empty() { OK } else { DEADLOCK })
        }
        Command::Trace { path, depth, pool, hide, cap } => trace(&path, depth, &pool, hide, cap),
        Command::Run { demo, producers, items, seed, policy, timeout, serial } => run(RunArgs {
            demo,
            producers,
            items,
            seed,
            policy,
            timeout,
            serial,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INPUT } else { OK });
        }
    };
    match dispatch(cli.command) {
        Ok(code) | Err(Fail(code)) => ExitCode::from(code),
    }
}
