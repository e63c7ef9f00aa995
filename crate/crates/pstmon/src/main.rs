//! Command-line entry point for the pstmon toolkit.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pstmon::monitor::checked_boundaries;
use pstmon::pst::{build_choice_point_table, parse, validate, Direction, SessionType, Successor};
use pstmon::sim;
use pstmon::stats::ConfidenceLevel;
use pstmon::transport::proxy::{run_proxy, SessionConfig};
use pstmon::transport::{parse_trace, replay};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_NOINPUT: u8 = 66;

#[derive(Parser)]
#[command(name = "pstmon", version, about = "Probabilistic session-type monitoring toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a PST file; silent and exit 0 when well-formed.
    Check { file: PathBuf },
    /// Print the dual of the type (the other endpoint's view).
    Dual { file: PathBuf },
    /// Print the choice-point table with indices, directions and annotations.
    Table { file: PathBuf },
    /// Monitor one live session as a TCP intermediary.
    Proxy(ProxyArgs),
    /// Re-run the monitor over a recorded trace file.
    Replay {
        file: PathBuf,
        trace: PathBuf,
        /// Confidence level in [0, 1), e.g. 0.99999.
        #[arg(long)]
        confidence: f64,
        /// Write the event log here instead of standard output.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a TOML config file.
    Simulate { config: PathBuf },
}

#[derive(Args)]
struct ProxyArgs {
    file: PathBuf,
    /// Confidence level in [0, 1), e.g. 0.99999.
    #[arg(long)]
    confidence: f64,
    /// Address the client connects to, e.g. 127.0.0.1:7000.
    #[arg(long)]
    listen: String,
    /// Server address frames are forwarded to.
    #[arg(long)]
    forward: String,
    /// Write the event log here instead of standard output.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Keep forwarding frames unmonitored after a violation.
    #[arg(long)]
    no_halt_on_violation: bool,
    /// Write a replayable trace of the live session here.
    #[arg(long)]
    capture: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("pstmon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug)]
enum CliError {
    NotFound(PathBuf),
    Message(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::NotFound(_) => EXIT_NOINPUT,
            CliError::Message(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::NotFound(p) => write!(f, "no such file: {}", p.display()),
            CliError::Message(m) => f.write_str(m),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::NotFound(path.to_path_buf())
        } else {
            CliError::Message(format!("cannot read {}: {e}", path.display()))
        }
    })
}

fn load_valid_type(path: &Path) -> Result<SessionType, CliError> {
    let source = read_file(path)?;
    let t = parse(&source).map_err(|e| CliError::Message(e.to_string()))?;
    let diags = validate(&t);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(CliError::Message(lines.join("\n")));
    }
    Ok(t)
}

fn write_log(log: &[String], sink: Option<&Path>) -> Result<(), CliError> {
    match sink {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .map_err(|e| CliError::Message(format!("cannot write {}: {e}", path.display())))?;
            for line in log {
                writeln!(f, "{line}")
                    .map_err(|e| CliError::Message(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for line in log {
                writeln!(out, "{line}").map_err(|e| CliError::Message(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Check { file } => {
            let source = read_file(&file)?;
            let t = match parse(&source) {
                Ok(t) => t,
                Err(e) => {
                    println!("{e}");
                    return Ok(EXIT_FAILURE);
                }
            };
            let diags = validate(&t);
            for d in &diags {
                println!("{d}");
            }
            Ok(if diags.is_empty() { 0 } else { EXIT_FAILURE })
        }
        Command::Dual { file } => {
            let t = load_valid_type(&file)?;
            println!("{}", t.dual().pretty());
            Ok(0)
        }
        Command::Table { file } => {
            let t = load_valid_type(&file)?;
            let (table, start) = build_choice_point_table(&t);
            println!("start: {}", successor_str(start));
            for (j, entry) in table.entries.iter().enumerate() {
                let dir = match entry.direction {
                    Direction::External => "external",
                    Direction::Internal => "internal",
                };
                println!("[{j}] {dir}");
                for b in &entry.branches {
                    let checks = checked_boundaries(&b.annotation)
                        .iter()
                        .map(|bd| bd.as_str())
                        .collect::<Vec<_>>()
                        .join(",");
                    let checks = if checks.is_empty() {
                        "unchecked".to_string()
                    } else {
                        checks
                    };
                    println!(
                        "    {} [{}] ({checks}) -> {}",
                        b.label,
                        b.annotation,
                        successor_str(b.successor)
                    );
                }
            }
            Ok(0)
        }
        Command::Proxy(args) => {
            // Surface a missing type file as 66 before binding the socket.
            let _ = read_file(&args.file)?;
            let cfg = SessionConfig {
                type_source: args.file,
                level: args.confidence,
                listen: args.listen,
                forward: args.forward,
                log_sink: args.log,
                halt_on_violation: !args.no_halt_on_violation,
                capture: args.capture,
            };
            let code = run_proxy(&cfg).map_err(|e| CliError::Message(e.to_string()))?;
            Ok(code as u8)
        }
        Command::Replay {
            file,
            trace,
            confidence,
            log,
        } => {
            let t = load_valid_type(&file)?;
            let level =
                ConfidenceLevel::new(confidence).map_err(|e| CliError::Message(e.to_string()))?;
            let records = parse_trace(&read_file(&trace)?)
                .map_err(|e| CliError::Message(e.to_string()))?;
            let report =
                replay(&t, level, &records).map_err(|e| CliError::Message(e.to_string()))?;
            write_log(&report.log, log.as_deref())?;
            Ok(report.exit_code as u8)
        }
        Command::Simulate { config } => {
            // Check existence first so a bad path exits 66 not a TOML error.
            let _ = read_file(&config)?;
            let cfg = sim::load_config(&config).map_err(|e| CliError::Message(e.to_string()))?;
            let base = config.parent().unwrap_or_else(|| Path::new("."));
            let t = load_valid_type(&base.join(&cfg.type_source))?;
            let level = ConfidenceLevel::new(cfg.confidence)
                .map_err(|e| CliError::Message(e.to_string()))?;
            let left = cfg
                .left
                .to_model()
                .map_err(|e| CliError::Message(e.to_string()))?;
            let right = cfg
                .right
                .to_model()
                .map_err(|e| CliError::Message(e.to_string()))?;
            let result = sim::run_experiment(
                &t,
                level,
                &left,
                &right,
                cfg.runs,
                cfg.seed,
                cfg.max_steps,
            )
            .map_err(|e| CliError::Message(e.to_string()))?;
            if let Some(path) = &cfg.csv {
                let path = base.join(path);
                let mut f = std::fs::File::create(&path).map_err(|e| {
                    CliError::Message(format!("cannot write {}: {e}", path.display()))
                })?;
                result
                    .write_csv(&mut f)
                    .map_err(|e| CliError::Message(e.to_string()))?;
            }
            let summary = result.summary_json().to_string();
            if let Some(path) = &cfg.summary {
                let path = base.join(path);
                std::fs::write(&path, format!("{summary}\n")).map_err(|e| {
                    CliError::Message(format!("cannot write {}: {e}", path.display()))
                })?;
            }
            println!("{summary}");
            Ok(0)
        }
    }
}

fn successor_str(s: Successor) -> String {
    match s {
        Successor::Index(j) => j.to_string(),
        Successor::End => "end".to_string(),
    }
}
