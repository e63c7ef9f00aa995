//! Connection management: newline-delimited text frames, the trace-file
//! format, and the session driver shared by the live proxy and the
//! offline replay runner.
//!
//! Wire protocol: UTF-8 lines `LABEL` or `LABEL(v1,...,vk)`, `\n`
//! terminated, at most 64 KiB per frame. Commas inside string payloads
//! are escaped as `\,`. Trace files carry one `L: `/`R: `-prefixed frame
//! per line; `#` starts a comment line.

pub mod proxy;

pub use proxy::{run_proxy, run_proxy_on, ProxyError, SessionConfig};

use crate::monitor::{
    Endpoint, ForwardDecision, Literal, Message, MonitorError, MonitorEvent, MonitorState,
};
use crate::pst::{ChoiceEntry, SessionType, Sort};
use crate::stats::ConfidenceLevel;
use thiserror::Error;

/// Maximum frame body size in bytes (excluding the terminator).
pub const MAX_FRAME: usize = 64 * 1024;

/// Exit statuses shared by the proxy and replay runners.
pub mod exit {
    /// Clean termination, no active warnings.
    pub const CLEAN: i32 = 0;
    /// Termination with active warnings (final verdicts).
    pub const VERDICT_WARNINGS: i32 = 2;
    /// Qualitative protocol violation.
    pub const VIOLATION: i32 = 3;
    /// Transport failure or incomplete session.
    pub const TRANSPORT: i32 = 4;
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("unparseable frame: {detail}")]
    Unparseable { detail: String },
    #[error("payload arity mismatch for {label}: expected {expected}, got {got}")]
    Arity {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("payload sort mismatch for {label} at position {index}: expected {expected}, got `{value}`")]
    Sort {
        label: String,
        index: usize,
        expected: Sort,
        value: String,
    },
}

/// A decoded frame. An unknown label is not a decode error: it is handed
/// to the monitor (with an empty payload) so the monitor itself raises
/// the label violation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub message: Message,
    pub unknown_label: bool,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `args` on commas, honouring `\,` and `\\` escapes.
fn split_args(args: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = args.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(n) => cur.push(n),
                None => cur.push('\\'),
            },
            ',' => {
                out.push(std::mem::take(&mut cur));
            }
            other => cur.push(other),
        }
    }
    out.push(cur);
    out
}

fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ',' => out.push_str("\\,"),
            other => out.push(other),
        }
    }
    out
}

/// Parses one frame body against the expected choice-point entry.
pub fn decode_frame(
    origin: Endpoint,
    line: &str,
    expected: &ChoiceEntry,
) -> Result<DecodedFrame, DecodeError> {
    let (label, args) = match line.find('(') {
        None => {
            if !is_ident(line) {
                return Err(DecodeError::Unparseable {
                    detail: format!("`{line}` is not `LABEL` or `LABEL(args)`"),
                });
            }
            (line, None)
        }
        Some(open) => {
            let label = &line[..open];
            if !is_ident(label) || !line.ends_with(')') {
                return Err(DecodeError::Unparseable {
                    detail: format!("`{line}` is not `LABEL` or `LABEL(args)`"),
                });
            }
            (label, Some(&line[open + 1..line.len() - 1]))
        }
    };

    let Some(branch) = expected.branch(label) else {
        return Ok(DecodedFrame {
            message: Message {
                origin,
                label: label.to_string(),
                payload: Vec::new(),
            },
            unknown_label: true,
        });
    };

    let raw: Vec<String> = match args {
        None => Vec::new(),
        Some("") => Vec::new(),
        Some(inner) => split_args(inner),
    };
    if raw.len() != branch.sorts.len() {
        return Err(DecodeError::Arity {
            label: label.to_string(),
            expected: branch.sorts.len(),
            got: raw.len(),
        });
    }
    let mut payload = Vec::with_capacity(raw.len());
    for (index, (value, sort)) in raw.iter().zip(&branch.sorts).enumerate() {
        let lit = match sort {
            Sort::Int => value.parse::<i64>().ok().map(Literal::Int),
            Sort::Bool => match value.as_str() {
                "true" => Some(Literal::Bool(true)),
                "false" => Some(Literal::Bool(false)),
                _ => None,
            },
            Sort::Str => Some(Literal::Str(value.clone())),
        };
        match lit {
            Some(l) => payload.push(l),
            None => {
                return Err(DecodeError::Sort {
                    label: label.to_string(),
                    index,
                    expected: *sort,
                    value: value.clone(),
                })
            }
        }
    }
    Ok(DecodedFrame {
        message: Message {
            origin,
            label: label.to_string(),
            payload,
        },
        unknown_label: false,
    })
}

/// Renders a message as one frame body (the inverse of `decode_frame`).
pub fn encode_message(m: &Message) -> String {
    if m.payload.is_empty() {
        return m.label.clone();
    }
    let args: Vec<String> = m
        .payload
        .iter()
        .map(|lit| match lit {
            Literal::Int(n) => n.to_string(),
            Literal::Bool(b) => b.to_string(),
            Literal::Str(s) => escape_str(s),
        })
        .collect();
    format!("{}({})", m.label, args.join(","))
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub origin: Endpoint,
    pub text: String,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let side = match self.origin {
            Endpoint::Left => "L",
            Endpoint::Right => "R",
        };
        format!("{side}: {}", self.text)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace line {line}: expected `L: frame` or `R: frame`, got `{text}`")]
    BadLine { line: usize, text: String },
}

pub fn parse_trace(source: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let origin = if let Some(rest) = line.strip_prefix("L:") {
            Some((Endpoint::Left, rest))
        } else {
            line.strip_prefix("R:").map(|rest| (Endpoint::Right, rest))
        };
        match origin {
            Some((origin, rest)) => {
                let text = rest.strip_prefix(' ').unwrap_or(rest).to_string();
                records.push(TraceRecord { origin, text });
            }
            None => {
                return Err(TraceError::BadLine {
                    line: i + 1,
                    text: line.to_string(),
                })
            }
        }
    }
    Ok(records)
}

/// What the transport should do with the frame it just handed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedOutcome {
    /// Forward the raw frame unchanged to the other side.
    Forward,
    /// Drop the frame; the session may or may not be over.
    Drop,
    /// The frame arrived after a verdict; it was not analysed.
    Unreachable,
}

/// Drives one monitor session over a stream of raw frames; shared by the
/// live proxy and the offline replay runner so both produce identical
/// event logs for identical frame sequences.
#[derive(Debug)]
pub struct SessionDriver {
    monitor: MonitorState,
    log: Vec<String>,
    events: Vec<MonitorEvent>,
    frames_seen: u64,
    unreachable: u64,
    incomplete: bool,
}

impl SessionDriver {
    pub fn new(t: &SessionType, level: ConfidenceLevel) -> Result<Self, MonitorError> {
        let monitor = MonitorState::new(t, level)?;
        let mut driver = SessionDriver {
            monitor,
            log: Vec::new(),
            events: Vec::new(),
            frames_seen: 0,
            unreachable: 0,
            incomplete: false,
        };
        // A type that is just `end` denotes the trivially complete session.
        if driver.monitor.position() == crate::pst::Successor::End {
            if let Some(ev) = driver.monitor.finish(false) {
                driver.record(ev);
            }
        }
        Ok(driver)
    }

    pub fn monitor(&self) -> &MonitorState {
        &self.monitor
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    pub fn events(&self) -> &[MonitorEvent] {
        &self.events
    }

    pub fn unreachable_frames(&self) -> u64 {
        self.unreachable
    }

    fn record(&mut self, ev: MonitorEvent) {
        self.log.push(ev.to_log_line());
        self.events.push(ev);
    }

    pub fn feed(&mut self, origin: Endpoint, line: &str) -> FeedOutcome {
        if !self.monitor.is_running() {
            self.unreachable += 1;
            return FeedOutcome::Unreachable;
        }
        self.frames_seen += 1;

        if line.len() > MAX_FRAME {
            let ev = self
                .monitor
                .force_violation(origin, "frame exceeds 64 KiB limit".to_string());
            self.record(ev);
            return FeedOutcome::Drop;
        }

        // Out-of-turn frames go through the monitor's own direction check
        // (the label is never inspected on that path).
        if self.monitor.expected_sender() != Some(origin) {
            let dummy = Message {
                origin,
                label: String::new(),
                payload: Vec::new(),
            };
            let (events, _) = self.monitor.step(&dummy).expect("monitor is running");
            for ev in events {
                self.record(ev);
            }
            return FeedOutcome::Drop;
        }

        let entry = match self.monitor.position() {
            crate::pst::Successor::Index(j) => self.monitor.table().entry(j).clone(),
            crate::pst::Successor::End => {
                // Only reachable for the End-only type; step emits Termination.
                let dummy = Message {
                    origin,
                    label: String::new(),
                    payload: Vec::new(),
                };
                let (events, _) = self.monitor.step(&dummy).expect("monitor is running");
                for ev in events {
                    self.record(ev);
                }
                return FeedOutcome::Drop;
            }
        };

        let decoded = match decode_frame(origin, line, &entry) {
            Ok(d) => d,
            Err(err) => {
                let ev = self.monitor.force_violation(origin, err.to_string());
                self.record(ev);
                return FeedOutcome::Drop;
            }
        };
        let (events, decision) = self
            .monitor
            .step(&decoded.message)
            .expect("monitor is running");
        for ev in events {
            self.record(ev);
        }
        match decision {
            ForwardDecision::Forward => FeedOutcome::Forward,
            ForwardDecision::Drop => FeedOutcome::Drop,
        }
    }

    /// Closes a session whose frames ran out before `end` was reached.
    /// A session that saw no frames at all stays silent (no event); the
    /// exit status still reports it as incomplete.
    pub fn finish_incomplete(&mut self) {
        if !self.monitor.is_running() {
            return;
        }
        self.incomplete = true;
        if let Some(ev) = self.monitor.finish(true) {
            if self.frames_seen > 0 {
                self.record(ev);
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.monitor.is_violated() {
            exit::VIOLATION
        } else if self.incomplete {
            exit::TRANSPORT
        } else if !self.monitor.active_warnings().is_empty() {
            exit::VERDICT_WARNINGS
        } else {
            exit::CLEAN
        }
    }
}

/// Outcome of a completed session (live or replayed).
#[derive(Debug)]
pub struct SessionReport {
    pub log: Vec<String>,
    pub events: Vec<MonitorEvent>,
    pub exit_code: i32,
    pub unreachable: u64,
}

/// Feeds a recorded trace through a fresh monitor. Wholly deterministic:
/// identical inputs produce byte-identical logs.
pub fn replay(
    t: &SessionType,
    level: ConfidenceLevel,
    records: &[TraceRecord],
) -> Result<SessionReport, MonitorError> {
    let mut driver = SessionDriver::new(t, level)?;
    for r in records {
        driver.feed(r.origin, &r.text);
    }
    driver.finish_incomplete();
    Ok(SessionReport {
        exit_code: driver.exit_code(),
        unreachable: driver.unreachable,
        log: driver.log,
        events: driver.events,
    })
}
