//! The live intermediary proxy: one monitored session between a client
//! (Right endpoint, accepted on the listen address) and a server (Left
//! endpoint, dialled on the forward address).
//!
//! Both sockets are read by dedicated reader threads feeding one channel;
//! the monitor loop consumes frames strictly in arrival order, so a frame
//! arriving out of turn is surfaced to the monitor as a direction
//! violation rather than silently reordered. Accepted frames are
//! forwarded byte-identically (partial identity).

use super::{exit, SessionDriver, SessionReport, TraceRecord};
use crate::monitor::Endpoint;
use crate::pst::{parse, validate, Diagnostic, ParseError, SessionType};
use crate::stats::{ConfidenceLevel, StatsError};
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Path of the PST file the monitor is synthesised from.
    pub type_source: PathBuf,
    /// Confidence level in [0, 1).
    pub level: f64,
    /// Address the client (Right endpoint) connects to.
    pub listen: String,
    /// Address of the server (Left endpoint).
    pub forward: String,
    /// Event-log destination; None means standard output.
    pub log_sink: Option<PathBuf>,
    pub halt_on_violation: bool,
    /// Optional replayable trace of the live session.
    pub capture: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("cannot read {path}: {source}")]
    ReadFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("type does not validate: {0:?}")]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Level(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of one live session.
#[derive(Debug)]
pub struct LiveOutcome {
    pub report: SessionReport,
    /// Every frame received, in processing order; replayable.
    pub capture: Vec<TraceRecord>,
}

enum Inbound {
    Frame(Endpoint, String),
    Eof,
    Failed,
}

fn spawn_reader(stream: TcpStream, origin: Endpoint, tx: mpsc::Sender<Inbound>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => {
                    let _ = tx.send(Inbound::Eof);
                    return;
                }
                Ok(_) => {
                    if buf.last() == Some(&b'\n') {
                        buf.pop();
                    }
                    if buf.last() == Some(&b'\r') {
                        buf.pop();
                    }
                    // Invalid UTF-8 cannot decode to any label and is
                    // rejected by the monitor as an unparseable frame.
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    if tx.send(Inbound::Frame(origin, line)).is_err() {
                        return;
                    }
                }
                Err(_) => {
                    let _ = tx.send(Inbound::Failed);
                    return;
                }
            }
        }
    });
}

/// Runs one monitored session over two connected sockets. The type must
/// already validate.
pub fn run_session(
    client: TcpStream,
    server: TcpStream,
    t: &SessionType,
    level: ConfidenceLevel,
    halt_on_violation: bool,
) -> std::io::Result<LiveOutcome> {
    let mut to_client = client.try_clone()?;
    let mut to_server = server.try_clone()?;
    let (tx, rx) = mpsc::channel();
    spawn_reader(client, Endpoint::Right, tx.clone());
    spawn_reader(server, Endpoint::Left, tx);

    let mut driver = SessionDriver::new(t, level).expect("validated type");
    let mut capture = Vec::new();
    let mut passthrough = false;

    for inbound in rx.iter() {
        match inbound {
            Inbound::Frame(origin, line) => {
                capture.push(TraceRecord {
                    origin,
                    text: line.clone(),
                });
                let dest: &mut TcpStream = match origin {
                    Endpoint::Right => &mut to_server,
                    Endpoint::Left => &mut to_client,
                };
                if passthrough {
                    let _ = writeln!(dest, "{line}");
                    continue;
                }
                let outcome = driver.feed(origin, &line);
                if outcome == super::FeedOutcome::Forward && writeln!(dest, "{line}").is_err() {
                    // Peer gone mid-forward: incomplete session.
                    break;
                }
                if driver.monitor().is_violated() {
                    if halt_on_violation {
                        break;
                    }
                    passthrough = true;
                } else if driver.monitor().is_terminated() {
                    break;
                }
            }
            Inbound::Eof | Inbound::Failed => break,
        }
    }

    driver.finish_incomplete();
    let _ = to_client.shutdown(Shutdown::Both);
    let _ = to_server.shutdown(Shutdown::Both);
    Ok(LiveOutcome {
        report: SessionReport {
            exit_code: driver.exit_code(),
            unreachable: driver.unreachable_frames(),
            log: driver.log().to_vec(),
            events: driver.events().to_vec(),
        },
        capture,
    })
}

fn load_type(path: &PathBuf) -> Result<SessionType, ProxyError> {
    let source = std::fs::read_to_string(path).map_err(|source| ProxyError::ReadFile {
        path: path.clone(),
        source,
    })?;
    let t = parse(&source)?;
    let diags = validate(&t);
    if !diags.is_empty() {
        return Err(ProxyError::Invalid(diags));
    }
    Ok(t)
}

/// Binds the listen address and runs one session.
pub fn run_proxy(cfg: &SessionConfig) -> Result<i32, ProxyError> {
    let listener = TcpListener::bind(&cfg.listen)?;
    run_proxy_on(listener, cfg)
}

/// Accepts one client on a pre-bound listener, dials the server, runs the
/// session, then writes the event log and optional capture file.
pub fn run_proxy_on(listener: TcpListener, cfg: &SessionConfig) -> Result<i32, ProxyError> {
    let t = load_type(&cfg.type_source)?;
    let level = ConfidenceLevel::new(cfg.level)?;
    let (client, _) = listener.accept()?;
    let server = match TcpStream::connect(&cfg.forward) {
        Ok(s) => s,
        Err(_) => {
            let _ = client.shutdown(Shutdown::Both);
            return Ok(exit::TRANSPORT);
        }
    };
    let outcome = run_session(client, server, &t, level, cfg.halt_on_violation)?;

    match &cfg.log_sink {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            for line in &outcome.report.log {
                writeln!(f, "{line}")?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for line in &outcome.report.log {
                writeln!(out, "{line}")?;
            }
        }
    }
    if let Some(path) = &cfg.capture {
        let mut f = std::fs::File::create(path)?;
        for rec in &outcome.capture {
            writeln!(f, "{}", rec.to_line())?;
        }
    }
    Ok(outcome.report.exit_code)
}
