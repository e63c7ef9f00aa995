//! Well-formedness checks beyond syntax.

use super::{ProbAnnotation, SessionType};
use std::collections::HashSet;
use std::fmt;

/// Absolute tolerance for probability-mass comparisons.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagKind {
    UnguardedRecursion,
    UnboundVariable,
    DuplicateLabel,
    ProbabilityOutOfRange,
    BadMassSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Returns an empty list iff all SessionType invariants hold: recursion is
/// guarded and closed, labels within a choice point are distinct, numeric
/// probabilities lie in (0, 1], and per-choice-point mass sums to 1 (or to
/// at most 1 when a `*` branch is present).
pub fn validate(t: &SessionType) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    // (name, guarded-yet) for each rec binder in scope, innermost last.
    let mut scope: Vec<(String, bool)> = Vec::new();
    walk(t, &mut scope, &mut diags);
    diags
}

fn walk(t: &SessionType, scope: &mut Vec<(String, bool)>, diags: &mut Vec<Diagnostic>) {
    match t {
        SessionType::End => {}
        SessionType::Var(x) => {
            match scope.iter().rev().find(|(name, _)| name == x) {
                None => diags.push(Diagnostic {
                    kind: DiagKind::UnboundVariable,
                    message: format!("recursion variable {x} is not bound by an enclosing rec"),
                }),
                Some((_, guarded)) if !guarded => diags.push(Diagnostic {
                    kind: DiagKind::UnguardedRecursion,
                    message: format!(
                        "recursion variable {x} occurs unguarded (not under any choice prefix)"
                    ),
                }),
                Some(_) => {}
            }
        }
        SessionType::Rec(x, body) => {
            scope.push((x.clone(), false));
            walk(body, scope, diags);
            scope.pop();
        }
        SessionType::External(branches) | SessionType::Internal(branches) => {
            let mut seen = HashSet::new();
            for b in branches {
                if !seen.insert(b.label.as_str()) {
                    diags.push(Diagnostic {
                        kind: DiagKind::DuplicateLabel,
                        message: format!("duplicate branch label {} within one choice point", b.label),
                    });
                }
            }
            let mut mass = 0.0;
            let mut has_unchecked = false;
            for b in branches {
                match b.annotation {
                    ProbAnnotation::Unchecked => has_unchecked = true,
                    _ => {
                        let p = b.annotation.probability().expect("numeric annotation");
                        if !(p > 0.0 && p <= 1.0) {
                            diags.push(Diagnostic {
                                kind: DiagKind::ProbabilityOutOfRange,
                                message: format!(
                                    "branch {} has probability {p}, outside (0, 1]",
                                    b.label
                                ),
                            });
                        }
                        mass += p;
                    }
                }
            }
            if has_unchecked {
                if mass > 1.0 + MASS_TOLERANCE {
                    diags.push(Diagnostic {
                        kind: DiagKind::BadMassSum,
                        message: format!(
                            "numeric probabilities sum to {mass}, exceeding 1 despite a `*` branch"
                        ),
                    });
                }
            } else if (mass - 1.0).abs() > MASS_TOLERANCE {
                diags.push(Diagnostic {
                    kind: DiagKind::BadMassSum,
                    message: format!("branch probabilities sum to {mass}, expected 1"),
                });
            }
            // Everything under a choice prefix guards all binders in scope.
            let saved: Vec<bool> = scope.iter().map(|(_, g)| *g).collect();
            for (_, g) in scope.iter_mut() {
                *g = true;
            }
            for b in branches {
                walk(&b.continuation, scope, diags);
            }
            for ((_, g), s) in scope.iter_mut().zip(saved) {
                *g = s;
            }
        }
    }
}
