//! Flattened choice-point table: the stable addressing scheme for counters.
//!
//! Indices are assigned by pre-order traversal, numbering each
//! External/Internal node once. Rec/Var nodes get no index; a variable
//! resolves to the index of the first choice point reachable from its
//! binder's body, so unfolding a recursion always returns to the same
//! index and counters accumulate across loop iterations.

use super::{ProbAnnotation, SessionType, Sort};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Successor {
    Index(usize),
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    External,
    Internal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchEntry {
    pub label: String,
    pub sorts: Vec<Sort>,
    pub annotation: ProbAnnotation,
    pub successor: Successor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceEntry {
    pub direction: Direction,
    pub branches: Vec<BranchEntry>,
}

impl ChoiceEntry {
    pub fn branch(&self, label: &str) -> Option<&BranchEntry> {
        self.branches.iter().find(|b| b.label == label)
    }
}

/// Closed graph of choice points; entry `j` lives at `entries[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoicePointTable {
    pub entries: Vec<ChoiceEntry>,
}

impl ChoicePointTable {
    pub fn entry(&self, j: usize) -> &ChoiceEntry {
        &self.entries[j]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the table and returns it with the initial position (`End` when
/// the whole type is `end`). Expects a type that passed `validate`.
pub fn build_choice_point_table(t: &SessionType) -> (ChoicePointTable, Successor) {
    let mut builder = Builder {
        entries: Vec::new(),
    };
    let initial = builder.go(t, &HashMap::new());
    let entries = builder
        .entries
        .into_iter()
        .map(|e| e.expect("every reserved entry is filled"))
        .collect();
    (ChoicePointTable { entries }, initial)
}

struct Builder {
    entries: Vec<Option<ChoiceEntry>>,
}

impl Builder {
    fn go(&mut self, t: &SessionType, env: &HashMap<String, Successor>) -> Successor {
        match t {
            SessionType::End => Successor::End,
            SessionType::Var(x) => *env.get(x).expect("validated type is closed"),
            SessionType::Rec(x, body) => {
                // The binder resolves to whatever the head of its body
                // resolves to; for a choice head that is the next index
                // in pre-order, which `go` on the body will assign.
                let head = self.resolve_head(body, env);
                let mut env2 = env.clone();
                env2.insert(x.clone(), head);
                self.go(body, &env2)
            }
            SessionType::External(branches) | SessionType::Internal(branches) => {
                let direction = match t {
                    SessionType::External(_) => Direction::External,
                    _ => Direction::Internal,
                };
                let j = self.entries.len();
                self.entries.push(None);
                let mut rows = Vec::with_capacity(branches.len());
                for b in branches {
                    let successor = self.go(&b.continuation, env);
                    rows.push(BranchEntry {
                        label: b.label.clone(),
                        sorts: b.payload.iter().map(|(_, s)| *s).collect(),
                        annotation: b.annotation,
                        successor,
                    });
                }
                self.entries[j] = Some(ChoiceEntry {
                    direction,
                    branches: rows,
                });
                Successor::Index(j)
            }
        }
    }

    fn resolve_head(&self, t: &SessionType, env: &HashMap<String, Successor>) -> Successor {
        match t {
            SessionType::External(_) | SessionType::Internal(_) => {
                Successor::Index(self.entries.len())
            }
            SessionType::End => Successor::End,
            SessionType::Var(x) => *env.get(x).expect("validated type is closed"),
            SessionType::Rec(_, body) => self.resolve_head(body, env),
        }
    }
}
