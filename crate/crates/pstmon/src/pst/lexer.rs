//! Tokeniser for the PST language.

use std::fmt;
use thiserror::Error;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokKind {
    Ident(String),
    /// Probability literal; raw lexeme kept for error reporting.
    Number(f64),
    KwRec,
    KwEnd,
    Amp,
    Plus,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Dot,
    Colon,
    Query,
    Bang,
    Star,
    Eof,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokKind::Number(n) => write!(f, "number `{n}`"),
            TokKind::KwRec => write!(f, "`rec`"),
            TokKind::KwEnd => write!(f, "`end`"),
            TokKind::Amp => write!(f, "`&`"),
            TokKind::Plus => write!(f, "`+`"),
            TokKind::LBrace => write!(f, "`{{`"),
            TokKind::RBrace => write!(f, "`}}`"),
            TokKind::LParen => write!(f, "`(`"),
            TokKind::RParen => write!(f, "`)`"),
            TokKind::LBrack => write!(f, "`[`"),
            TokKind::RBrack => write!(f, "`]`"),
            TokKind::Comma => write!(f, "`,`"),
            TokKind::Dot => write!(f, "`.`"),
            TokKind::Colon => write!(f, "`:`"),
            TokKind::Query => write!(f, "`?`"),
            TokKind::Bang => write!(f, "`!`"),
            TokKind::Star => write!(f, "`*`"),
            TokKind::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokKind,
    pub pos: Pos,
}

#[derive(Debug, Error, PartialEq)]
pub enum LexError {
    #[error("{pos}: unexpected character `{ch}`")]
    UnexpectedChar { ch: char, pos: Pos },
    #[error("{pos}: malformed probability literal `{lexeme}`")]
    MalformedNumber { lexeme: String, pos: Pos },
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut toks = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(ch) = c {
                if ch == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                // Line comment `//`; a lone `/` is an error.
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&n) = chars.peek() {
                        if n == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(LexError::UnexpectedChar { ch: '/', pos });
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut s = String::new();
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        s.push(n);
                        bump!();
                    } else {
                        break;
                    }
                }
                let kind = match s.as_str() {
                    "rec" => TokKind::KwRec,
                    "end" => TokKind::KwEnd,
                    _ => TokKind::Ident(s),
                };
                toks.push(Token { kind, pos });
            }
            '0'..='9' => {
                let mut s = String::new();
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_digit() || n == '.' {
                        // `0.5 . end`: a dot not followed by a digit ends
                        // the number and is the continuation separator.
                        if n == '.' {
                            let mut ahead = chars.clone();
                            ahead.next();
                            match ahead.peek() {
                                Some(d) if d.is_ascii_digit() => {}
                                _ => break,
                            }
                        }
                        s.push(n);
                        bump!();
                    } else {
                        break;
                    }
                }
                let value: f64 = s.parse().map_err(|_| LexError::MalformedNumber {
                    lexeme: s.clone(),
                    pos,
                })?;
                if s.matches('.').count() > 1 {
                    return Err(LexError::MalformedNumber { lexeme: s, pos });
                }
                toks.push(Token {
                    kind: TokKind::Number(value),
                    pos,
                });
            }
            _ => {
                bump!();
                let kind = match c {
                    '&' => TokKind::Amp,
                    '+' => TokKind::Plus,
                    '{' => TokKind::LBrace,
                    '}' => TokKind::RBrace,
                    '(' => TokKind::LParen,
                    ')' => TokKind::RParen,
                    '[' => TokKind::LBrack,
                    ']' => TokKind::RBrack,
                    ',' => TokKind::Comma,
                    '.' => TokKind::Dot,
                    ':' => TokKind::Colon,
                    '?' => TokKind::Query,
                    '!' => TokKind::Bang,
                    '*' => TokKind::Star,
                    other => return Err(LexError::UnexpectedChar { ch: other, pos }),
                };
                toks.push(Token { kind, pos });
            }
        }
    }
    toks.push(Token {
        kind: TokKind::Eof,
        pos: Pos { line, col },
    });
    Ok(toks)
}
