//! Probabilistic session types: abstract syntax, textual language,
//! validation, duality, and the choice-point table.
//!
//! The concrete syntax is an ASCII rendering of the usual session-type
//! notation. External choices are written `&{ ?L(x:T)[p] . S, ... }`,
//! internal choices `+{ !L(x:T)[p] . S, ... }`, recursion `rec X . S`,
//! termination `end`. The probability annotation `[p]` may instead be
//! `[*]` (never warn), `[p,*]` (warn only below p) or `[*,p]` (warn only
//! above p). Line comments start with `//`.

mod lexer;
mod parser;
mod table;
mod validate;

pub use parser::{parse, ParseError};
pub use table::{
    build_choice_point_table, BranchEntry, ChoiceEntry, ChoicePointTable, Direction, Successor,
};
pub use validate::{validate, DiagKind, Diagnostic};

use std::fmt;

/// Payload sorts. Exactly these three exist; anything else is a parse error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Str,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => write!(f, "Int"),
            Sort::Str => write!(f, "Str"),
            Sort::Bool => write!(f, "Bool"),
        }
    }
}

/// Per-branch probability requirement.
///
/// `Exact(p)` checks both interval boundaries; `LowerOnly(p)` (written
/// `p,*`) warns only when the estimate falls below the lower boundary;
/// `UpperOnly(p)` (written `*,p`) warns only above the upper boundary;
/// `Unchecked` (written `*`) never warns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbAnnotation {
    Exact(f64),
    LowerOnly(f64),
    UpperOnly(f64),
    Unchecked,
}

impl ProbAnnotation {
    /// The numeric probability, when the annotation carries one.
    pub fn probability(&self) -> Option<f64> {
        match self {
            ProbAnnotation::Exact(p)
            | ProbAnnotation::LowerOnly(p)
            | ProbAnnotation::UpperOnly(p) => Some(*p),
            ProbAnnotation::Unchecked => None,
        }
    }
}

impl fmt::Display for ProbAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbAnnotation::Exact(p) => write!(f, "{p}"),
            ProbAnnotation::LowerOnly(p) => write!(f, "{p},*"),
            ProbAnnotation::UpperOnly(p) => write!(f, "*,{p}"),
            ProbAnnotation::Unchecked => write!(f, "*"),
        }
    }
}

/// One labelled branch of a choice point.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub payload: Vec<(String, Sort)>,
    pub annotation: ProbAnnotation,
    pub continuation: SessionType,
}

/// The PST abstract syntax.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionType {
    /// `&{...}`: the party playing this type receives the peer's selection.
    External(Vec<Branch>),
    /// `+{...}`: the party playing this type selects and sends.
    Internal(Vec<Branch>),
    Rec(String, Box<SessionType>),
    Var(String),
    End,
}

impl SessionType {
    /// Structure-preserving duality: swaps External and Internal at every
    /// choice point; labels, payloads, annotations and recursion unchanged.
    pub fn dual(&self) -> SessionType {
        fn dual_branches(branches: &[Branch]) -> Vec<Branch> {
            branches
                .iter()
                .map(|b| Branch {
                    label: b.label.clone(),
                    payload: b.payload.clone(),
                    annotation: b.annotation,
                    continuation: b.continuation.dual(),
                })
                .collect()
        }
        match self {
            SessionType::External(bs) => SessionType::Internal(dual_branches(bs)),
            SessionType::Internal(bs) => SessionType::External(dual_branches(bs)),
            SessionType::Rec(x, body) => SessionType::Rec(x.clone(), Box::new(body.dual())),
            SessionType::Var(x) => SessionType::Var(x.clone()),
            SessionType::End => SessionType::End,
        }
    }

    /// Canonical single-line rendering; reparses to an equal AST.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.write_pretty(&mut out);
        out
    }

    fn write_pretty(&self, out: &mut String) {
        match self {
            SessionType::End => out.push_str("end"),
            SessionType::Var(x) => out.push_str(x),
            SessionType::Rec(x, body) => {
                out.push_str("rec ");
                out.push_str(x);
                out.push_str(" . ");
                body.write_pretty(out);
            }
            SessionType::External(bs) => write_choice(out, '&', '?', bs),
            SessionType::Internal(bs) => write_choice(out, '+', '!', bs),
        }
    }
}

fn write_choice(out: &mut String, opener: char, dir: char, branches: &[Branch]) {
    out.push(opener);
    out.push_str("{ ");
    for (i, b) in branches.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push(dir);
        out.push_str(&b.label);
        if !b.payload.is_empty() {
            out.push('(');
            for (k, (name, sort)) in b.payload.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                out.push_str(name);
                out.push(':');
                out.push_str(&sort.to_string());
            }
            out.push(')');
        }
        out.push('[');
        out.push_str(&b.annotation.to_string());
        out.push_str("] . ");
        b.continuation.write_pretty(out);
    }
    out.push_str(" }");
}

#[cfg(test)]
pub(crate) const S_GAME: &str = "rec X . &{ ?Guess(num:Int)[0.75] . +{ !Correct[0.01] . X,\n                                      !Incorrect[0.99] . X },\n           ?Help[0.2] . +{ !Hint(info:Str)[1] . X },\n           ?Quit[0.05] . end }";
