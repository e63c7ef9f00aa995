//! Shared helpers for the integration suites: data-file loading, an
//! independent normal-quantile oracle, random type/trace generation, and
//! scripted live proxy sessions over localhost.

#![allow(dead_code)]

use pstmon::monitor::{controller, Endpoint, Literal, Message, MonitorState};
use pstmon::pst::{Branch, ProbAnnotation, SessionType, Sort, Successor};
use pstmon::rng::XorShift64Star;
use pstmon::stats::ConfidenceLevel;
use pstmon::transport::proxy::{run_session, LiveOutcome};
use pstmon::transport::encode_message;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::thread;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn load_type(name: &str) -> SessionType {
    let source = std::fs::read_to_string(data_path(name)).unwrap();
    let t = pstmon::pst::parse(&source).unwrap();
    assert!(pstmon::pst::validate(&t).is_empty(), "{name} must validate");
    t
}

pub fn load_trace(name: &str) -> Vec<pstmon::transport::TraceRecord> {
    let source = std::fs::read_to_string(data_path(name)).unwrap();
    pstmon::transport::parse_trace(&source).unwrap()
}

pub fn level(l: f64) -> ConfidenceLevel {
    ConfidenceLevel::new(l).unwrap()
}

// ---------------------------------------------------------------------
// Independent inverse-normal-CDF oracle: Simpson-rule integration of the
// density plus bisection. Shares no code with the implementation under
// test.

fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ(z) − 0.5, integrating the density over [0, z] with Simpson's rule.
fn normal_cdf_centered(z: f64) -> f64 {
    let steps = 20_000usize;
    let h = z / steps as f64;
    let mut acc = normal_pdf(0.0) + normal_pdf(z);
    for i in 1..steps {
        let x = i as f64 * h;
        acc += normal_pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Inverse standard normal CDF by bisection on the integrated density.
pub fn quantile_oracle(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let target = p - 0.5;
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if normal_cdf_centered(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

// ---------------------------------------------------------------------
// Random well-formed session types.

fn fresh_labels(rng: &mut XorShift64Star, n: usize) -> Vec<String> {
    let mut pool: Vec<String> = (0..8).map(|i| format!("L{i}")).collect();
    let mut out = Vec::new();
    for _ in 0..n {
        let k = rng.next_below(pool.len() as u64) as usize;
        out.push(pool.swap_remove(k));
    }
    out
}

fn random_payload(rng: &mut XorShift64Star) -> Vec<(String, Sort)> {
    let n = rng.next_below(3) as usize;
    (0..n)
        .map(|i| {
            let sort = match rng.next_below(3) {
                0 => Sort::Int,
                1 => Sort::Str,
                _ => Sort::Bool,
            };
            (format!("x{i}"), sort)
        })
        .collect()
}

fn random_annotations(rng: &mut XorShift64Star, n: usize) -> Vec<ProbAnnotation> {
    let weights: Vec<f64> = (0..n).map(|_| 1.0 + rng.next_below(9) as f64).collect();
    let sum: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
    let mut anns: Vec<ProbAnnotation> =
        probs.iter().map(|&p| ProbAnnotation::Exact(p)).collect();
    // Sometimes loosen one branch. One-sided annotations keep their mass;
    // a full star leaves the remaining sum below 1, which the mass rule
    // allows in the presence of a star.
    if n > 1 && rng.next_below(3) == 0 {
        let k = rng.next_below(n as u64) as usize;
        anns[k] = match rng.next_below(3) {
            0 => ProbAnnotation::Unchecked,
            1 => ProbAnnotation::LowerOnly(probs[k]),
            _ => ProbAnnotation::UpperOnly(probs[k]),
        };
    }
    anns
}

fn random_choice(
    rng: &mut XorShift64Star,
    depth: u32,
    vars: &[String],
    external: bool,
) -> SessionType {
    let n = 1 + rng.next_below(3) as usize;
    let labels = fresh_labels(rng, n);
    let anns = random_annotations(rng, n);
    let branches = labels
        .into_iter()
        .zip(anns)
        .map(|(label, annotation)| Branch {
            label,
            payload: random_payload(rng),
            annotation,
            continuation: random_node(rng, depth.saturating_sub(1), vars, true),
        })
        .collect();
    if external {
        SessionType::External(branches)
    } else {
        SessionType::Internal(branches)
    }
}

fn random_node(
    rng: &mut XorShift64Star,
    depth: u32,
    vars: &[String],
    guarded: bool,
) -> SessionType {
    if depth == 0 {
        if guarded && !vars.is_empty() && rng.next_below(2) == 0 {
            let k = rng.next_below(vars.len() as u64) as usize;
            return SessionType::Var(vars[k].clone());
        }
        return SessionType::End;
    }
    match rng.next_below(10) {
        0..=3 => random_choice(rng, depth, vars, true),
        4..=7 => random_choice(rng, depth, vars, false),
        8 => {
            let name = format!("X{}", vars.len());
            let mut inner = vars.to_vec();
            inner.push(name.clone());
            // A recursion body is always a choice so the binder is guarded.
            let external = rng.next_below(2) == 0;
            let body = random_choice(rng, depth, &inner, external);
            SessionType::Rec(name, Box::new(body))
        }
        _ => {
            if guarded && !vars.is_empty() && rng.next_below(2) == 0 {
                let k = rng.next_below(vars.len() as u64) as usize;
                SessionType::Var(vars[k].clone())
            } else {
                SessionType::End
            }
        }
    }
}

/// A random session type that always passes validation.
pub fn random_type(rng: &mut XorShift64Star) -> SessionType {
    let depth = 1 + rng.next_below(4) as u32;
    let t = random_node(rng, depth, &[], false);
    debug_assert!(pstmon::pst::validate(&t).is_empty());
    t
}

// ---------------------------------------------------------------------
// Random conforming sessions driven straight through a monitor.

pub fn random_literal(sort: Sort, rng: &mut XorShift64Star) -> Literal {
    match sort {
        Sort::Int => Literal::Int(rng.next_below(1000) as i64 - 500),
        Sort::Bool => Literal::Bool(rng.next_u64() & 1 == 0),
        Sort::Str => Literal::Str(format!("v{}", rng.next_below(100))),
    }
}

/// Feeds up to `max_steps` uniformly random conforming messages through a
/// fresh monitor and returns it with the message list.
pub fn random_session(
    t: &SessionType,
    lvl: ConfidenceLevel,
    rng: &mut XorShift64Star,
    max_steps: u64,
) -> (MonitorState, Vec<Message>) {
    let mut monitor = MonitorState::new(t, lvl).unwrap();
    let mut messages = Vec::new();
    let mut steps = 0;
    while let Successor::Index(j) = monitor.position() {
        if steps >= max_steps {
            break;
        }
        steps += 1;
        let entry = monitor.table().entry(j).clone();
        let b = &entry.branches[rng.next_below(entry.branches.len() as u64) as usize];
        let msg = Message {
            origin: controller(entry.direction),
            label: b.label.clone(),
            payload: b.sorts.iter().map(|s| random_literal(*s, rng)).collect(),
        };
        monitor.step(&msg).unwrap();
        messages.push(msg);
    }
    (monitor, messages)
}

// ---------------------------------------------------------------------
// Live proxy plumbing.

/// Two connected TCP streams over loopback.
pub fn tcp_pair() -> (TcpStream, TcpStream) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let a = TcpStream::connect(addr).unwrap();
    let (b, _) = listener.accept().unwrap();
    (a, b)
}

/// Plays one side of a scripted session: writes own frames in order and
/// checks that every peer frame arrives byte-identical.
fn play_party(stream: TcpStream, me: Endpoint, script: Vec<Message>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        for m in &script {
            if m.origin == me {
                if writeln!(writer, "{}", encode_message(m)).is_err() {
                    return;
                }
            } else {
                line.clear();
                if reader.read_line(&mut line).is_err() || line.is_empty() {
                    return;
                }
                assert_eq!(line.trim_end(), encode_message(m), "forwarding must be transparent");
            }
        }
    })
}

/// Runs a full live session through the in-process proxy with both
/// endpoints scripted from `script` (as produced by the sim module).
pub fn scripted_proxy_session(
    t: &SessionType,
    lvl: ConfidenceLevel,
    script: &[Message],
) -> LiveOutcome {
    let (client_peer, client_proxy) = tcp_pair();
    let (server_peer, server_proxy) = tcp_pair();
    let client = play_party(client_peer, Endpoint::Right, script.to_vec());
    let server = play_party(server_peer, Endpoint::Left, script.to_vec());
    let outcome = run_session(client_proxy, server_proxy, t, lvl, true).unwrap();
    client.join().unwrap();
    server.join().unwrap();
    outcome
}
