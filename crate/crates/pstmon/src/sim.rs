//! Synthetic parties and a Monte Carlo harness.
//!
//! A `PartyModel` gives each endpoint a true branch distribution per
//! choice point plus an optional stop rule (after so many visits of a
//! choice point, take a designated terminating branch). Sessions are
//! generated from the models with the embedded PRNG and fed through the
//! monitor core directly, no sockets involved, so experiments are fully
//! reproducible from the seed.

use crate::monitor::{controller, Boundary, Endpoint, Literal, Message, MonitorEvent, MonitorState};
use crate::pst::{SessionType, Sort, Successor};
use crate::rng::XorShift64Star;
use crate::stats::ConfidenceLevel;
use serde::Deserialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

const DIST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("model references unknown choice point {0}")]
    UnknownChoicePoint(usize),
    #[error("model references unknown label {label} at choice point {choice_point}")]
    UnknownLabel { choice_point: usize, label: String },
    #[error("distribution at choice point {choice_point} sums to {sum}, expected 1")]
    BadDistribution { choice_point: usize, sum: f64 },
    #[error("no distribution configured for choice point {0}")]
    MissingDistribution(usize),
    #[error("type does not validate")]
    InvalidType,
}

/// Take `branch` at `choice_point` once it has been visited
/// `after_visits` times.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    pub after_visits: u64,
    pub choice_point: usize,
    pub branch: String,
}

/// The true behaviour of one endpoint.
#[derive(Debug, Clone, Default)]
pub struct PartyModel {
    /// Choice point index -> (label, probability), summing to 1.
    pub dists: BTreeMap<usize, Vec<(String, f64)>>,
    pub stop: Option<StopRule>,
}

impl PartyModel {
    fn sample(&self, j: usize, rng: &mut XorShift64Star) -> Result<&str, SimError> {
        let dist = self
            .dists
            .get(&j)
            .ok_or(SimError::MissingDistribution(j))?;
        let r = rng.next_f64();
        let mut acc = 0.0;
        for (label, p) in dist {
            acc += p;
            if r < acc {
                return Ok(label);
            }
        }
        Ok(&dist.last().expect("non-empty distribution").0)
    }
}

fn validate_model(monitor: &MonitorState, model: &PartyModel) -> Result<(), SimError> {
    let table = monitor.table();
    for (&j, dist) in &model.dists {
        if j >= table.len() {
            return Err(SimError::UnknownChoicePoint(j));
        }
        let entry = table.entry(j);
        let mut sum = 0.0;
        for (label, p) in dist {
            if entry.branch(label).is_none() {
                return Err(SimError::UnknownLabel {
                    choice_point: j,
                    label: label.clone(),
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DIST_TOLERANCE {
            return Err(SimError::BadDistribution {
                choice_point: j,
                sum,
            });
        }
    }
    if let Some(stop) = &model.stop {
        if stop.choice_point >= table.len() {
            return Err(SimError::UnknownChoicePoint(stop.choice_point));
        }
        if table.entry(stop.choice_point).branch(&stop.branch).is_none() {
            return Err(SimError::UnknownLabel {
                choice_point: stop.choice_point,
                label: stop.branch.clone(),
            });
        }
    }
    Ok(())
}

fn gen_literal(sort: Sort, rng: &mut XorShift64Star) -> Literal {
    match sort {
        Sort::Int => Literal::Int((rng.next_below(100)) as i64),
        Sort::Bool => Literal::Bool(rng.next_u64() & 1 == 1),
        Sort::Str => Literal::Str(format!("s{}", rng.next_below(1000))),
    }
}

/// One generated and monitored session.
#[derive(Debug)]
pub struct SimRun {
    pub messages: Vec<Message>,
    pub events: Vec<MonitorEvent>,
    /// Warnings emitted over the whole run.
    pub warnings_issued: u64,
    /// Keys with a still-active warning when the session ended.
    pub active_at_end: Vec<(usize, String, Boundary)>,
    /// Per warned key, the choice-point visit count at the first warning.
    pub first_warnings: BTreeMap<(usize, String, Boundary), u64>,
    /// True iff the session reached `end` (rather than the step cap).
    pub completed: bool,
}

/// Generates one session from the two models and monitors it.
pub fn run_session_model(
    t: &SessionType,
    level: ConfidenceLevel,
    left: &PartyModel,
    right: &PartyModel,
    seed: u64,
    max_steps: u64,
) -> Result<SimRun, SimError> {
    let mut monitor = MonitorState::new(t, level).map_err(|_| SimError::InvalidType)?;
    validate_model(&monitor, left)?;
    validate_model(&monitor, right)?;
    let mut rng = XorShift64Star::new(seed);
    let mut messages = Vec::new();
    let mut events = Vec::new();
    let mut warnings_issued = 0u64;
    let mut first_warnings = BTreeMap::new();
    let mut steps = 0u64;

    while let Successor::Index(j) = monitor.position() {
        if steps >= max_steps {
            break;
        }
        steps += 1;
        let entry = monitor.table().entry(j).clone();
        let side = controller(entry.direction);
        let model = match side {
            Endpoint::Left => left,
            Endpoint::Right => right,
        };
        // The stop branch is forced once the threshold is reached and
        // suppressed (re-sampled) before it, so runs have a fixed length.
        let label = loop {
            match &model.stop {
                Some(stop) if stop.choice_point == j => {
                    if monitor.counters(j).total >= stop.after_visits {
                        break stop.branch.clone();
                    }
                    let l = model.sample(j, &mut rng)?;
                    if l != stop.branch {
                        break l.to_string();
                    }
                }
                _ => break model.sample(j, &mut rng)?.to_string(),
            }
        };
        let branch = entry.branch(&label).ok_or_else(|| SimError::UnknownLabel {
            choice_point: j,
            label: label.clone(),
        })?;
        let payload = branch
            .sorts
            .iter()
            .map(|s| gen_literal(*s, &mut rng))
            .collect();
        let msg = Message {
            origin: side,
            label,
            payload,
        };
        let (step_events, _) = monitor.step(&msg).expect("model-generated messages conform");
        for ev in &step_events {
            if let MonitorEvent::Warning {
                choice_point,
                branch,
                boundary,
                count_total,
                ..
            } = ev
            {
                warnings_issued += 1;
                first_warnings
                    .entry((*choice_point, branch.clone(), *boundary))
                    .or_insert(*count_total);
            }
        }
        events.extend(step_events);
        messages.push(msg);
    }
    let completed = monitor.is_terminated();
    Ok(SimRun {
        messages,
        events,
        warnings_issued,
        active_at_end: monitor.active_warnings().iter().cloned().collect(),
        first_warnings,
        completed,
    })
}

/// Aggregate over independent runs.
#[derive(Debug)]
pub struct ExperimentResult {
    pub runs: u64,
    /// Runs with at least one warning.
    pub warnings_issued_ever: u64,
    /// Runs ending with at least one active warning.
    pub active_at_end: u64,
    /// Per run, the visit count at the first warning (None if none).
    pub latency: Vec<Option<u64>>,
    pub per_run: Vec<SimRun>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "run,warnings_issued,active_at_end,first_warning_visits,completed"
        )?;
        for (i, run) in self.per_run.iter().enumerate() {
            let latency = self.latency[i]
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{i},{},{},{latency},{}",
                run.warnings_issued,
                run.active_at_end.len(),
                run.completed
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "runs": self.runs,
            "warnings_issued_ever": self.warnings_issued_ever,
            "active_at_end": self.active_at_end,
            "median_first_warning_visits": median(&self.latency),
        })
    }
}

fn median(latency: &[Option<u64>]) -> Option<u64> {
    let mut xs: Vec<u64> = latency.iter().flatten().copied().collect();
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    Some(xs[xs.len() / 2])
}

/// Runs `runs` independent seeded sessions and aggregates the outcomes.
pub fn run_experiment(
    t: &SessionType,
    level: ConfidenceLevel,
    left: &PartyModel,
    right: &PartyModel,
    runs: u64,
    seed: u64,
    max_steps: u64,
) -> Result<ExperimentResult, SimError> {
    assert!(runs >= 1);
    let mut per_run = Vec::with_capacity(runs as usize);
    let mut warnings_issued_ever = 0;
    let mut active_at_end = 0;
    let mut latency = Vec::with_capacity(runs as usize);
    for i in 0..runs {
        let run_seed = seed ^ (i.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1);
        let run = run_session_model(t, level, left, right, run_seed, max_steps)?;
        if run.warnings_issued > 0 {
            warnings_issued_ever += 1;
        }
        if !run.active_at_end.is_empty() {
            active_at_end += 1;
        }
        latency.push(run.first_warnings.values().min().copied());
        per_run.push(run);
    }
    Ok(ExperimentResult {
        runs,
        warnings_issued_ever,
        active_at_end,
        latency,
        per_run,
    })
}

/// Declarative experiment description (TOML).
#[derive(Debug, Deserialize)]
pub struct ExperimentConfig {
    /// PST file, relative to the config file's directory.
    #[serde(rename = "type")]
    pub type_source: PathBuf,
    pub confidence: f64,
    pub runs: u64,
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    pub left: ModelConfig,
    pub right: ModelConfig,
    /// Optional result files, relative to the config file's directory.
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

fn default_max_steps() -> u64 {
    1_000_000
}

#[derive(Debug, Deserialize)]
pub struct ModelConfig {
    /// Choice point index (as a string key) -> label -> probability.
    #[serde(default)]
    pub dist: BTreeMap<String, BTreeMap<String, f64>>,
    pub stop: Option<StopConfig>,
}

#[derive(Debug, Deserialize)]
pub struct StopConfig {
    pub after_visits: u64,
    pub choice_point: usize,
    pub branch: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad experiment config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad choice point key `{0}` (expected a number)")]
    BadKey(String),
}

impl ModelConfig {
    pub fn to_model(&self) -> Result<PartyModel, ConfigError> {
        let mut dists = BTreeMap::new();
        for (key, dist) in &self.dist {
            let j: usize = key.parse().map_err(|_| ConfigError::BadKey(key.clone()))?;
            let entries: Vec<(String, f64)> =
                dist.iter().map(|(l, p)| (l.clone(), *p)).collect();
            dists.insert(j, entries);
        }
        Ok(PartyModel {
            dists,
            stop: self.stop.as_ref().map(|s| StopRule {
                after_visits: s.after_visits,
                choice_point: s.choice_point,
                branch: s.branch.clone(),
            }),
        })
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&text)?)
}

/// Models for the guessing-game type with the specified probabilities;
/// the client quits after `visits` external-choice rounds.
pub fn conforming_game_models(visits: u64) -> (PartyModel, PartyModel) {
    let left = PartyModel {
        dists: BTreeMap::from([
            (
                1,
                vec![("Correct".to_string(), 0.01), ("Incorrect".to_string(), 0.99)],
            ),
            (2, vec![("Hint".to_string(), 1.0)]),
        ]),
        stop: None,
    };
    let right = PartyModel {
        dists: BTreeMap::from([(
            0,
            vec![
                ("Guess".to_string(), 0.75),
                ("Help".to_string(), 0.2),
                ("Quit".to_string(), 0.05),
            ],
        )]),
        stop: Some(StopRule {
            after_visits: visits,
            choice_point: 0,
            branch: "Quit".to_string(),
        }),
    };
    (left, right)
}
