//! The synthesised monitor core: a communicating-finite-state-machine
//! interpreter whose states are the choice points of a PST.
//!
//! Each accepted message triggers, in order: a direction check, a label
//! check, a payload typecheck, counter updates, and an interval check of
//! every annotated branch of the current choice point. Statistical
//! deviations produce revocable warnings with blame; qualitative breaches
//! produce irrevocable violations and halt the monitor. Warnings and
//! retractions for one (choice point, branch, boundary) key are only
//! emitted on the first transition outside (resp. back inside) the
//! interval; steady states are suppressed.

use crate::pst::{
    build_choice_point_table, validate, ChoicePointTable, Diagnostic, Direction, ProbAnnotation,
    SessionType, Sort, Successor,
};
use crate::stats::{check_interval, judge, round4, BranchStatus, ConfidenceLevel, IntervalReport};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// The two physical parties around the monitor. `Left` plays the type as
/// written; `Right` plays its dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Endpoint {
    Left,
    Right,
}

impl Endpoint {
    pub fn other(self) -> Endpoint {
        match self {
            Endpoint::Left => Endpoint::Right,
            Endpoint::Right => Endpoint::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::Left => "left",
            Endpoint::Right => "right",
        }
    }
}

/// The endpoint that controls (selects at) a choice point: at an external
/// choice the dual party sends, at an internal choice the type's own side.
pub fn controller(direction: Direction) -> Endpoint {
    match direction {
        Direction::External => Endpoint::Right,
        Direction::Internal => Endpoint::Left,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Str(String),
    Bool(bool),
}

impl Literal {
    pub fn sort(&self) -> Sort {
        match self {
            Literal::Int(_) => Sort::Int,
            Literal::Str(_) => Sort::Str,
            Literal::Bool(_) => Sort::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub origin: Endpoint,
    pub label: String,
    pub payload: Vec<Literal>,
}

/// Interval boundary a warning refers to. Low is checked before High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Boundary {
    Low,
    High,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Low => "low",
            Boundary::High => "high",
        }
    }
}

/// Visit counters for one choice point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChoiceCounters {
    pub total: u64,
    pub per_branch: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonitorEvent {
    Warning {
        seq: u64,
        choice_point: usize,
        branch: String,
        boundary: Boundary,
        blamed: Endpoint,
        report: IntervalReport,
        count_total: u64,
        count_branch: u64,
    },
    Retraction {
        seq: u64,
        choice_point: usize,
        branch: String,
        boundary: Boundary,
        report: IntervalReport,
        count_total: u64,
        count_branch: u64,
    },
    Violation {
        seq: u64,
        choice_point: Option<usize>,
        branch: Option<String>,
        blamed: Endpoint,
        reason: String,
    },
    Termination {
        seq: u64,
        abnormal: bool,
    },
}

impl MonitorEvent {
    pub fn seq(&self) -> u64 {
        match self {
            MonitorEvent::Warning { seq, .. }
            | MonitorEvent::Retraction { seq, .. }
            | MonitorEvent::Violation { seq, .. }
            | MonitorEvent::Termination { seq, .. } => *seq,
        }
    }

    /// One JSON object per line; numbers at 4 decimal places, absent
    /// fields omitted. This format is the golden-test surface.
    pub fn to_log_line(&self) -> String {
        let value = match self {
            MonitorEvent::Warning {
                seq,
                choice_point,
                branch,
                boundary,
                blamed,
                report,
                count_total,
                count_branch,
            } => json!({
                "seq": seq,
                "kind": "warning",
                "choice_point": choice_point,
                "branch": branch,
                "boundary": boundary.as_str(),
                "blamed": blamed.as_str(),
                "estimated": round4(report.estimated),
                "expected": round4(report.specified),
                "interval_low": round4(report.low),
                "interval_high": round4(report.high),
                "count_total": count_total,
                "count_branch": count_branch,
            }),
            MonitorEvent::Retraction {
                seq,
                choice_point,
                branch,
                boundary,
                report,
                count_total,
                count_branch,
            } => json!({
                "seq": seq,
                "kind": "retraction",
                "choice_point": choice_point,
                "branch": branch,
                "boundary": boundary.as_str(),
                "estimated": round4(report.estimated),
                "expected": round4(report.specified),
                "interval_low": round4(report.low),
                "interval_high": round4(report.high),
                "count_total": count_total,
                "count_branch": count_branch,
            }),
            MonitorEvent::Violation {
                seq,
                choice_point,
                branch,
                blamed,
                reason,
            } => {
                let mut v = json!({
                    "seq": seq,
                    "kind": "violation",
                });
                let map = v.as_object_mut().unwrap();
                if let Some(j) = choice_point {
                    map.insert("choice_point".into(), json!(j));
                }
                if let Some(b) = branch {
                    map.insert("branch".into(), json!(b));
                }
                map.insert("blamed".into(), json!(blamed.as_str()));
                map.insert("reason".into(), json!(reason));
                v
            }
            MonitorEvent::Termination { seq, abnormal } => {
                let mut v = json!({
                    "seq": seq,
                    "kind": "termination",
                });
                if *abnormal {
                    v.as_object_mut()
                        .unwrap()
                        .insert("reason".into(), json!("incomplete session"));
                }
                v
            }
        };
        value.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    Drop,
}

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("type does not validate: {0:?}")]
    Invalid(Vec<Diagnostic>),
}

/// Stepping a monitor that already reached a verdict is a usage error,
/// distinct from a protocol violation.
#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("monitor already halted on a violation")]
    Violated,
    #[error("monitor already terminated")]
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Running,
    Violated,
    Terminated,
}

/// One branch row of a status snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub choice_point: usize,
    pub direction: Direction,
    pub label: String,
    pub annotation: ProbAnnotation,
    pub count_total: u64,
    pub count_branch: u64,
    /// None until the choice point has been visited at least once.
    pub report: Option<IntervalReport>,
    pub active_low: bool,
    pub active_high: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub rows: Vec<SnapshotRow>,
}

#[derive(Debug, Clone)]
pub struct MonitorState {
    table: ChoicePointTable,
    position: Successor,
    counters: BTreeMap<usize, ChoiceCounters>,
    active: BTreeSet<(usize, String, Boundary)>,
    level: ConfidenceLevel,
    seq: u64,
    phase: Phase,
}

impl MonitorState {
    pub fn new(t: &SessionType, level: ConfidenceLevel) -> Result<Self, MonitorError> {
        let diags = validate(t);
        if !diags.is_empty() {
            return Err(MonitorError::Invalid(diags));
        }
        let (table, position) = build_choice_point_table(t);
        let mut counters = BTreeMap::new();
        for (j, entry) in table.entries.iter().enumerate() {
            let mut per_branch = BTreeMap::new();
            for b in &entry.branches {
                per_branch.insert(b.label.clone(), 0);
            }
            counters.insert(j, ChoiceCounters {
                total: 0,
                per_branch,
            });
        }
        Ok(MonitorState {
            table,
            position,
            counters,
            active: BTreeSet::new(),
            level,
            seq: 0,
            phase: Phase::Running,
        })
    }

    pub fn table(&self) -> &ChoicePointTable {
        &self.table
    }

    pub fn position(&self) -> Successor {
        self.position
    }

    pub fn level(&self) -> &ConfidenceLevel {
        &self.level
    }

    pub fn counters(&self, j: usize) -> &ChoiceCounters {
        &self.counters[&j]
    }

    pub fn is_running(&self) -> bool {
        self.phase == Phase::Running
    }

    pub fn is_violated(&self) -> bool {
        self.phase == Phase::Violated
    }

    pub fn is_terminated(&self) -> bool {
        self.phase == Phase::Terminated
    }

    /// Keys with a currently active (unretracted) warning.
    pub fn active_warnings(&self) -> &BTreeSet<(usize, String, Boundary)> {
        &self.active
    }

    /// The party whose turn it is to send, while the session is running.
    pub fn expected_sender(&self) -> Option<Endpoint> {
        match (self.phase, self.position) {
            (Phase::Running, Successor::Index(j)) => {
                Some(controller(self.table.entry(j).direction))
            }
            _ => None,
        }
    }

    fn next_seq(&mut self) -> u64 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    /// Records a qualitative violation raised outside the step path (for
    /// example an unparseable or oversized frame at the transport).
    pub fn force_violation(&mut self, blamed: Endpoint, reason: String) -> MonitorEvent {
        let choice_point = match self.position {
            Successor::Index(j) => Some(j),
            Successor::End => None,
        };
        self.phase = Phase::Violated;
        MonitorEvent::Violation {
            seq: self.next_seq(),
            choice_point,
            branch: None,
            blamed,
            reason,
        }
    }

    /// Closes the session. Emits a Termination event; active warnings
    /// harden into final verdicts (queryable via `active_warnings`).
    pub fn finish(&mut self, abnormal: bool) -> Option<MonitorEvent> {
        if self.phase != Phase::Running {
            return None;
        }
        self.phase = Phase::Terminated;
        Some(MonitorEvent::Termination {
            seq: self.next_seq(),
            abnormal,
        })
    }

    pub fn step(
        &mut self,
        m: &Message,
    ) -> Result<(Vec<MonitorEvent>, ForwardDecision), StepError> {
        match self.phase {
            Phase::Violated => return Err(StepError::Violated),
            Phase::Terminated => return Err(StepError::Terminated),
            Phase::Running => {}
        }

        let j = match self.position {
            Successor::Index(j) => j,
            Successor::End => {
                // End-only type: the first step closes the session.
                let ev = self.finish(false).expect("running");
                return Ok((vec![ev], ForwardDecision::Drop));
            }
        };
        let entry = self.table.entry(j).clone();

        // 1. Direction: only the controller of this choice point may send.
        let expected = controller(entry.direction);
        if m.origin != expected {
            return Ok(self.violation(
                j,
                None,
                m.origin,
                format!(
                    "out-of-turn message from {}: choice point {} belongs to {}",
                    m.origin.as_str(),
                    j,
                    expected.as_str()
                ),
            ));
        }

        // 2. Label membership.
        let Some(branch) = entry.branch(&m.label) else {
            return Ok(self.violation(
                j,
                Some(m.label.clone()),
                m.origin,
                format!("unknown label {} at choice point {}", m.label, j),
            ));
        };

        // 3. Payload typecheck: arity and sorts are checked, not trusted.
        if m.payload.len() != branch.sorts.len() {
            return Ok(self.violation(
                j,
                Some(m.label.clone()),
                m.origin,
                format!(
                    "payload arity mismatch for {}: expected {}, got {}",
                    m.label,
                    branch.sorts.len(),
                    m.payload.len()
                ),
            ));
        }
        for (i, (lit, sort)) in m.payload.iter().zip(&branch.sorts).enumerate() {
            if lit.sort() != *sort {
                return Ok(self.violation(
                    j,
                    Some(m.label.clone()),
                    m.origin,
                    format!(
                        "payload sort mismatch for {} at position {}: expected {}, got {}",
                        m.label,
                        i,
                        sort,
                        lit.sort()
                    ),
                ));
            }
        }

        // 4. Counters, then an interval check of every annotated branch.
        {
            let counters = self.counters.get_mut(&j).expect("counters for every entry");
            counters.total += 1;
            *counters.per_branch.get_mut(&m.label).expect("branch counter") += 1;
        }
        let counters = self.counters[&j].clone();
        let mut events = Vec::new();
        let blame = controller(entry.direction);
        for b in &entry.branches {
            let Some(p) = b.annotation.probability() else {
                continue;
            };
            let c_branch = counters.per_branch[&b.label];
            let report = check_interval(&self.level, counters.total, c_branch, p);
            let status = judge(&b.annotation, &report);
            for boundary in checked_boundaries(&b.annotation) {
                let key = (j, b.label.clone(), *boundary);
                let deviated = matches!(
                    (status, boundary),
                    (BranchStatus::DeviatedLow, Boundary::Low)
                        | (BranchStatus::DeviatedHigh, Boundary::High)
                );
                let flagged = self.active.contains(&key);
                if deviated && !flagged {
                    self.active.insert(key);
                    events.push(MonitorEvent::Warning {
                        seq: self.next_seq(),
                        choice_point: j,
                        branch: b.label.clone(),
                        boundary: *boundary,
                        blamed: blame,
                        report,
                        count_total: counters.total,
                        count_branch: c_branch,
                    });
                } else if !deviated && flagged {
                    self.active.remove(&key);
                    events.push(MonitorEvent::Retraction {
                        seq: self.next_seq(),
                        choice_point: j,
                        branch: b.label.clone(),
                        boundary: *boundary,
                        report,
                        count_total: counters.total,
                        count_branch: c_branch,
                    });
                }
            }
        }

        // 5. Forward and advance; reaching `end` closes the session.
        self.position = entry.branch(&m.label).expect("checked above").successor;
        if self.position == Successor::End {
            events.push(self.finish(false).expect("running"));
        }
        Ok((events, ForwardDecision::Forward))
    }

    fn violation(
        &mut self,
        j: usize,
        branch: Option<String>,
        blamed: Endpoint,
        reason: String,
    ) -> (Vec<MonitorEvent>, ForwardDecision) {
        self.phase = Phase::Violated;
        let ev = MonitorEvent::Violation {
            seq: self.next_seq(),
            choice_point: Some(j),
            branch,
            blamed,
            reason,
        };
        (vec![ev], ForwardDecision::Drop)
    }

    /// Read-only status dump: per choice point and branch, the counters,
    /// current estimate and interval, annotation and warning flags.
    pub fn snapshot(&self) -> StatusReport {
        let mut rows = Vec::new();
        for (j, entry) in self.table.entries.iter().enumerate() {
            let counters = &self.counters[&j];
            for b in &entry.branches {
                let c_branch = counters.per_branch[&b.label];
                let report = match (counters.total, b.annotation.probability()) {
                    (0, _) | (_, None) => None,
                    (total, Some(p)) => Some(check_interval(&self.level, total, c_branch, p)),
                };
                rows.push(SnapshotRow {
                    choice_point: j,
                    direction: entry.direction,
                    label: b.label.clone(),
                    annotation: b.annotation,
                    count_total: counters.total,
                    count_branch: c_branch,
                    report,
                    active_low: self
                        .active
                        .contains(&(j, b.label.clone(), Boundary::Low)),
                    active_high: self
                        .active
                        .contains(&(j, b.label.clone(), Boundary::High)),
                });
            }
        }
        StatusReport { rows }
    }
}

/// The interval boundaries an annotation asks the monitor to check.
pub fn checked_boundaries(annotation: &ProbAnnotation) -> &'static [Boundary] {
    match annotation {
        ProbAnnotation::Exact(_) => &[Boundary::Low, Boundary::High],
        ProbAnnotation::LowerOnly(_) => &[Boundary::Low],
        ProbAnnotation::UpperOnly(_) => &[Boundary::High],
        ProbAnnotation::Unchecked => &[],
    }
}
