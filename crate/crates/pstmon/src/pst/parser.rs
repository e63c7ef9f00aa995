//! Recursive descent parser for the PST language.

use super::lexer::{tokenize, LexError, Pos, TokKind, Token};
use super::{Branch, ProbAnnotation, SessionType, Sort};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{pos}: expected {expected}, found {found}")]
    Unexpected {
        expected: String,
        found: TokKind,
        pos: Pos,
    },
    #[error("{pos}: unknown sort `{name}` (expected Int, Str or Bool)")]
    UnknownSort { name: String, pos: Pos },
    #[error("{pos}: `{found}` branch prefix not allowed here (external branches use `?`, internal use `!`)")]
    WrongDirection { found: TokKind, pos: Pos },
}

/// Parse PST source text into an AST. Well-formedness beyond syntax
/// (guardedness, closedness, probability mass) is checked by `validate`.
pub fn parse(source: &str) -> Result<SessionType, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, at: 0 };
    let t = p.session_type()?;
    p.expect_eof()?;
    Ok(t)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> Result<Token, ParseError> {
        let t = self.peek().clone();
        if t.kind == kind {
            Ok(self.advance())
        } else {
            Err(ParseError::Unexpected {
                expected: what.to_string(),
                found: t.kind,
                pos: t.pos,
            })
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        let t = self.peek().clone();
        if t.kind == TokKind::Eof {
            Ok(())
        } else {
            Err(ParseError::Unexpected {
                expected: "end of input".to_string(),
                found: t.kind,
                pos: t.pos,
            })
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        let t = self.peek().clone();
        match t.kind {
            TokKind::Ident(s) => {
                self.advance();
                Ok((s, t.pos))
            }
            other => Err(ParseError::Unexpected {
                expected: what.to_string(),
                found: other,
                pos: t.pos,
            }),
        }
    }

    fn session_type(&mut self) -> Result<SessionType, ParseError> {
        let t = self.peek().clone();
        match t.kind {
            TokKind::KwEnd => {
                self.advance();
                Ok(SessionType::End)
            }
            TokKind::KwRec => {
                self.advance();
                let (var, _) = self.ident("recursion variable")?;
                self.expect(TokKind::Dot, "`.` after recursion variable")?;
                let body = self.session_type()?;
                Ok(SessionType::Rec(var, Box::new(body)))
            }
            TokKind::Ident(name) => {
                self.advance();
                Ok(SessionType::Var(name))
            }
            TokKind::Amp => {
                self.advance();
                let branches = self.branches(TokKind::Query)?;
                Ok(SessionType::External(branches))
            }
            TokKind::Plus => {
                self.advance();
                let branches = self.branches(TokKind::Bang)?;
                Ok(SessionType::Internal(branches))
            }
            other => Err(ParseError::Unexpected {
                expected: "a session type (`&`, `+`, `rec`, `end` or a variable)".to_string(),
                found: other,
                pos: t.pos,
            }),
        }
    }

    fn branches(&mut self, dir: TokKind) -> Result<Vec<Branch>, ParseError> {
        self.expect(TokKind::LBrace, "`{` opening the choice")?;
        let mut out = vec![self.branch(&dir)?];
        while self.peek().kind == TokKind::Comma {
            self.advance();
            out.push(self.branch(&dir)?);
        }
        self.expect(TokKind::RBrace, "`}` or `,` after branch")?;
        Ok(out)
    }

    fn branch(&mut self, dir: &TokKind) -> Result<Branch, ParseError> {
        let t = self.peek().clone();
        match &t.kind {
            k if k == dir => {
                self.advance();
            }
            TokKind::Query | TokKind::Bang => {
                return Err(ParseError::WrongDirection {
                    found: t.kind,
                    pos: t.pos,
                })
            }
            _ => {
                return Err(ParseError::Unexpected {
                    expected: format!("branch prefix {dir}"),
                    found: t.kind,
                    pos: t.pos,
                })
            }
        }
        let (label, _) = self.ident("branch label")?;
        let payload = if self.peek().kind == TokKind::LParen {
            self.advance();
            let mut fields = Vec::new();
            if self.peek().kind != TokKind::RParen {
                fields.push(self.param()?);
                while self.peek().kind == TokKind::Comma {
                    self.advance();
                    fields.push(self.param()?);
                }
            }
            self.expect(TokKind::RParen, "`)` closing the payload")?;
            fields
        } else {
            Vec::new()
        };
        self.expect(TokKind::LBrack, "`[` opening the probability annotation")?;
        let annotation = self.annotation()?;
        self.expect(TokKind::RBrack, "`]` closing the probability annotation")?;
        self.expect(TokKind::Dot, "`.` before the continuation")?;
        let continuation = self.session_type()?;
        Ok(Branch {
            label,
            payload,
            annotation,
            continuation,
        })
    }

    fn param(&mut self) -> Result<(String, Sort), ParseError> {
        let (name, _) = self.ident("payload field name")?;
        self.expect(TokKind::Colon, "`:` between field name and sort")?;
        let (sort_name, pos) = self.ident("sort")?;
        let sort = match sort_name.as_str() {
            "Int" => Sort::Int,
            "Str" => Sort::Str,
            "Bool" => Sort::Bool,
            _ => {
                return Err(ParseError::UnknownSort {
                    name: sort_name,
                    pos,
                })
            }
        };
        Ok((name, sort))
    }

    fn annotation(&mut self) -> Result<ProbAnnotation, ParseError> {
        let t = self.peek().clone();
        match t.kind {
            TokKind::Number(p) => {
                self.advance();
                if self.peek().kind == TokKind::Comma {
                    self.advance();
                    self.expect(TokKind::Star, "`*` after `p,`")?;
                    Ok(ProbAnnotation::LowerOnly(p))
                } else {
                    Ok(ProbAnnotation::Exact(p))
                }
            }
            TokKind::Star => {
                self.advance();
                if self.peek().kind == TokKind::Comma {
                    self.advance();
                    let t = self.peek().clone();
                    match t.kind {
                        TokKind::Number(p) => {
                            self.advance();
                            Ok(ProbAnnotation::UpperOnly(p))
                        }
                        other => Err(ParseError::Unexpected {
                            expected: "probability after `*,`".to_string(),
                            found: other,
                            pos: t.pos,
                        }),
                    }
                } else {
                    Ok(ProbAnnotation::Unchecked)
                }
            }
            other => Err(ParseError::Unexpected {
                expected: "probability annotation (`p`, `*`, `p,*` or `*,p`)".to_string(),
                found: other,
                pos: t.pos,
            }),
        }
    }
}
