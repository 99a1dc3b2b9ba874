//! Surface syntax: lexer, parser, desugarer and pretty-printer.
//!
//! The surface language is the sugared notation used for strategy programs:
//! numbers are labels applied to unit, binary operator expressions become
//! `Op (OPLABEL (), (lhs, rhs))`, `a ; b` and `a || b` become applications of
//! the primitive combinators, and juxtaposition is combinator application or
//! strategy execution depending on the argument's syntactic class.
//!
//! `;` and `||` share one precedence level and may not be mixed without
//! parentheses; arithmetic operators do not chain. Application binds tighter
//! than any operator. `//` starts a line comment. A file holds one top-level
//! expression; a trailing `let x = e` without `in` means `let x = e in x`.

use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::span::Span;
use crate::term::{op_label, op_token, CoreKind, CoreTerm, PatKind, Pattern};

#[derive(Debug, Error, Clone)]
pub enum ParseError {
    #[error("syntax error at {span}: {message}")]
    Syntax { message: String, span: Span },
    #[error("syntax error at {span}: mixed `{left}` and `{right}` need parentheses")]
    MixedOperators {
        left: String,
        right: String,
        span: Span,
    },
    #[error("unexpected end of input")]
    UnexpectedEof { span: Span },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::MixedOperators { span, .. }
            | ParseError::UnexpectedEof { span } => *span,
        }
    }
}

#[derive(Debug, Error, Clone)]
#[error("no surface form for this term")]
pub struct PrintError;

// ---------------------------------------------------------------------------
// Surface AST
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceExpr {
    pub kind: SurfaceKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpSlot {
    /// One of `*`, `+`, `-`, `/`.
    Token(char),
    /// An operator variable, legal only inside rules.
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurfaceKind {
    Number(String),
    Var(String),
    Unit,
    /// Label application `L e`; a bare label means a unit payload.
    LabelApp(String, Option<Box<SurfaceExpr>>),
    BinOp {
        op: OpSlot,
        lhs: Box<SurfaceExpr>,
        rhs: Box<SurfaceExpr>,
    },
    Pair(Box<SurfaceExpr>, Box<SurfaceExpr>),
    Rule {
        pattern: Box<SurfaceExpr>,
        body: Box<SurfaceExpr>,
    },
    SeqChain(Vec<SurfaceExpr>),
    ChoiceChain(Vec<SurfaceExpr>),
    St {
        var: String,
        body: Box<SurfaceExpr>,
    },
    /// Combinator application `f x`.
    App {
        fun: Box<SurfaceExpr>,
        arg: Box<SurfaceExpr>,
    },
    /// Strategy execution `s (expr)`: the argument is an input expression or
    /// an execution result; `wrap_succ` records whether desugaring inserts
    /// `succ` around it.
    ExecApp {
        fun: Box<SurfaceExpr>,
        arg: Box<SurfaceExpr>,
        wrap_succ: bool,
    },
    Succ(Box<SurfaceExpr>),
    Fail,
    Let {
        var: String,
        bound: Box<SurfaceExpr>,
        body: Box<SurfaceExpr>,
    },
    Paren(Box<SurfaceExpr>),
}

impl SurfaceExpr {
    fn new(kind: SurfaceKind, span: Span) -> Self {
        SurfaceExpr { kind, span }
    }

    fn unparen(&self) -> &SurfaceExpr {
        match &self.kind {
            SurfaceKind::Paren(inner) => inner.unparen(),
            _ => self,
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Lower(String),
    Upper(String),
    Number(String),
    LParen,
    RParen,
    Comma,
    Semi,
    DoubleBar,
    Star,
    Plus,
    Minus,
    Slash,
    Arrow,     // ->
    FatArrow,  // =>
    Equals,
    KwLet,
    KwIn,
    KwSt,
    KwRule,
    KwSucc,
    KwFail,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Lower(s) | Tok::Upper(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::DoubleBar => write!(f, "`||`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::FatArrow => write!(f, "`=>`"),
            Tok::Equals => write!(f, "`=`"),
            Tok::KwLet => write!(f, "`let`"),
            Tok::KwIn => write!(f, "`in`"),
            Tok::KwSt => write!(f, "`st`"),
            Tok::KwRule => write!(f, "`rule`"),
            Tok::KwSucc => write!(f, "`succ`"),
            Tok::KwFail => write!(f, "`fail`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = source.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            ';' => {
                i += 1;
                Tok::Semi
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    i += 2;
                    Tok::DoubleBar
                } else {
                    return Err(ParseError::Syntax {
                        message: "expected `||`".into(),
                        span: Span::new(start, start + 1),
                    });
                }
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    i += 2;
                    Tok::Arrow
                } else {
                    i += 1;
                    Tok::Minus
                }
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    i += 2;
                    Tok::FatArrow
                } else {
                    i += 1;
                    Tok::Equals
                }
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                Tok::Number(source[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &source[start..i];
                match word {
                    "let" => Tok::KwLet,
                    "in" => Tok::KwIn,
                    "st" => Tok::KwSt,
                    "rule" => Tok::KwRule,
                    "succ" => Tok::KwSucc,
                    "fail" => Tok::KwFail,
                    _ if word.chars().next().unwrap().is_ascii_uppercase() => {
                        Tok::Upper(word.to_string())
                    }
                    _ => Tok::Lower(word.to_string()),
                }
            }
            other => {
                return Err(ParseError::Syntax {
                    message: format!("unexpected character `{other}`"),
                    span: Span::new(start, start + 1),
                })
            }
        };
        toks.push((tok, Span::new(start, i)));
    }
    toks.push((Tok::Eof, Span::new(bytes.len(), bytes.len())));
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

/// Parse one program: a single top-level expression. A trailing
/// `let x = e` (and chains of them) without `in` denotes `let x = e in x`.
pub fn parse(source: &str) -> Result<SurfaceExpr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0 };
    let expr = p.parse_expr(true)?;
    p.expect_eof()?;
    Ok(expr)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Span, ParseError> {
        if self.peek() == &want {
            Ok(self.bump().1)
        } else {
            Err(ParseError::Syntax {
                message: format!("expected {want}, found {}", self.peek()),
                span: self.peek_span(),
            })
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                message: format!("expected end of input, found {}", self.peek()),
                span: self.peek_span(),
            })
        }
    }

    fn lower_ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.bump() {
            (Tok::Lower(s), sp) => Ok((s, sp)),
            (t, sp) => Err(ParseError::Syntax {
                message: format!("expected an identifier, found {t}"),
                span: sp,
            }),
        }
    }

    fn parse_expr(&mut self, top: bool) -> Result<SurfaceExpr, ParseError> {
        match self.peek() {
            Tok::KwLet => {
                let start = self.bump().1;
                let (var, _) = self.lower_ident()?;
                self.expect(Tok::Equals)?;
                let bound = self.parse_expr(false)?;
                let body = match self.peek() {
                    Tok::KwIn => {
                        self.bump();
                        self.parse_expr(top)?
                    }
                    Tok::Eof if top => {
                        // a top-level definition stands for `in <name>`
                        let sp = bound.span;
                        SurfaceExpr::new(SurfaceKind::Var(var.clone()), Span::new(sp.end, sp.end))
                    }
                    Tok::KwLet if top => self.parse_expr(true)?,
                    _ => {
                        return Err(ParseError::Syntax {
                            message: format!("expected `in`, found {}", self.peek()),
                            span: self.peek_span(),
                        })
                    }
                };
                let span = start.merge(body.span);
                Ok(SurfaceExpr::new(
                    SurfaceKind::Let {
                        var,
                        bound: Box::new(bound),
                        body: Box::new(body),
                    },
                    span,
                ))
            }
            Tok::KwSt => {
                let start = self.bump().1;
                let (var, _) = self.lower_ident()?;
                self.expect(Tok::FatArrow)?;
                let body = self.parse_expr(false)?;
                let span = start.merge(body.span);
                Ok(SurfaceExpr::new(
                    SurfaceKind::St {
                        var,
                        body: Box::new(body),
                    },
                    span,
                ))
            }
            _ => self.parse_op_chain(),
        }
    }

    /// `;`, `||` and the arithmetic operators all live on one level.
    /// `;`/`||` chains of the same operator are allowed (left-associative);
    /// any mixing, and any chaining of arithmetic operators, needs
    /// parentheses.
    fn parse_op_chain(&mut self) -> Result<SurfaceExpr, ParseError> {
        let first = self.parse_app()?;
        let op = match self.peek() {
            Tok::Semi => Some(ChainOp::Seq),
            Tok::DoubleBar => Some(ChainOp::Choice),
            Tok::Star => Some(ChainOp::Arith('*')),
            Tok::Plus => Some(ChainOp::Arith('+')),
            Tok::Minus => Some(ChainOp::Arith('-')),
            Tok::Slash => Some(ChainOp::Arith('/')),
            _ => None,
        };
        let Some(op) = op else { return Ok(first) };
        self.bump();
        match op {
            ChainOp::Arith(tok) => {
                let rhs = self.parse_app()?;
                if let Some(next) = self.peek_chain_op() {
                    return Err(ParseError::MixedOperators {
                        left: tok.to_string(),
                        right: next,
                        span: self.peek_span(),
                    });
                }
                let span = first.span.merge(rhs.span);
                Ok(SurfaceExpr::new(
                    SurfaceKind::BinOp {
                        op: OpSlot::Token(tok),
                        lhs: Box::new(first),
                        rhs: Box::new(rhs),
                    },
                    span,
                ))
            }
            ChainOp::Seq | ChainOp::Choice => {
                let mut items = vec![first, self.parse_app()?];
                loop {
                    match (self.peek_chain_op(), &op) {
                        (None, _) => break,
                        (Some(s), ChainOp::Seq) if s == ";" => {
                            self.bump();
                            items.push(self.parse_app()?);
                        }
                        (Some(s), ChainOp::Choice) if s == "||" => {
                            self.bump();
                            items.push(self.parse_app()?);
                        }
                        (Some(other), _) => {
                            return Err(ParseError::MixedOperators {
                                left: if matches!(op, ChainOp::Seq) { ";" } else { "||" }.into(),
                                right: other,
                                span: self.peek_span(),
                            })
                        }
                    }
                }
                let span = items
                    .first()
                    .unwrap()
                    .span
                    .merge(items.last().unwrap().span);
                let kind = if matches!(op, ChainOp::Seq) {
                    SurfaceKind::SeqChain(items)
                } else {
                    SurfaceKind::ChoiceChain(items)
                };
                Ok(SurfaceExpr::new(kind, span))
            }
        }
    }

    fn peek_chain_op(&self) -> Option<String> {
        match self.peek() {
            Tok::Semi => Some(";".into()),
            Tok::DoubleBar => Some("||".into()),
            Tok::Star => Some("*".into()),
            Tok::Plus => Some("+".into()),
            Tok::Minus => Some("-".into()),
            Tok::Slash => Some("/".into()),
            _ => None,
        }
    }

    fn parse_app(&mut self) -> Result<SurfaceExpr, ParseError> {
        let mut expr = self.parse_atom()?;
        while self.starts_atom() {
            let arg = self.parse_atom()?;
            let span = expr.span.merge(arg.span);
            expr = if let Some(wrap) = exec_argument(&arg) {
                SurfaceExpr::new(
                    SurfaceKind::ExecApp {
                        fun: Box::new(expr),
                        arg: Box::new(arg),
                        wrap_succ: wrap,
                    },
                    span,
                )
            } else {
                SurfaceExpr::new(
                    SurfaceKind::App {
                        fun: Box::new(expr),
                        arg: Box::new(arg),
                    },
                    span,
                )
            };
        }
        Ok(expr)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::LParen
                | Tok::Lower(_)
                | Tok::Upper(_)
                | Tok::Number(_)
                | Tok::KwRule
                | Tok::KwSucc
                | Tok::KwFail
        )
    }

    fn parse_atom(&mut self) -> Result<SurfaceExpr, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                let start = self.bump().1;
                if self.peek() == &Tok::RParen {
                    let end = self.bump().1;
                    return Ok(SurfaceExpr::new(SurfaceKind::Unit, start.merge(end)));
                }
                let first = self.parse_expr(false)?;
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                        let second = self.parse_expr(false)?;
                        let end = self.expect(Tok::RParen)?;
                        Ok(SurfaceExpr::new(
                            SurfaceKind::Pair(Box::new(first), Box::new(second)),
                            start.merge(end),
                        ))
                    }
                    _ => {
                        let end = self.expect(Tok::RParen)?;
                        Ok(SurfaceExpr::new(
                            SurfaceKind::Paren(Box::new(first)),
                            start.merge(end),
                        ))
                    }
                }
            }
            Tok::Lower(name) => {
                let sp = self.bump().1;
                Ok(SurfaceExpr::new(SurfaceKind::Var(name), sp))
            }
            Tok::Upper(name) => {
                let sp = self.bump().1;
                if self.starts_atom() {
                    let arg = self.parse_atom()?;
                    let span = sp.merge(arg.span);
                    Ok(SurfaceExpr::new(
                        SurfaceKind::LabelApp(name, Some(Box::new(arg))),
                        span,
                    ))
                } else {
                    Ok(SurfaceExpr::new(SurfaceKind::LabelApp(name, None), sp))
                }
            }
            Tok::Number(n) => {
                let sp = self.bump().1;
                // a numeral is a label; it may take an explicit payload
                if self.starts_atom() {
                    let arg = self.parse_atom()?;
                    let span = sp.merge(arg.span);
                    return Ok(SurfaceExpr::new(
                        SurfaceKind::LabelApp(n, Some(Box::new(arg))),
                        span,
                    ));
                }
                Ok(SurfaceExpr::new(SurfaceKind::Number(n), sp))
            }
            Tok::KwRule => self.parse_rule(),
            Tok::KwSucc => {
                let start = self.bump().1;
                let arg = self.parse_atom()?;
                let span = start.merge(arg.span);
                Ok(SurfaceExpr::new(SurfaceKind::Succ(Box::new(arg)), span))
            }
            Tok::KwFail => {
                let sp = self.bump().1;
                Ok(SurfaceExpr::new(SurfaceKind::Fail, sp))
            }
            t => Err(ParseError::Syntax {
                message: format!("expected an expression, found {t}"),
                span: self.peek_span(),
            }),
        }
    }

    fn parse_rule(&mut self) -> Result<SurfaceExpr, ParseError> {
        let start = self.expect(Tok::KwRule)?;
        let pattern = self.parse_rule_operand(true)?;
        self.expect(Tok::Arrow)?;
        let body = self.parse_rule_operand(true)?;
        let span = start.merge(body.span);
        Ok(SurfaceExpr::new(
            SurfaceKind::Rule {
                pattern: Box::new(pattern),
                body: Box::new(body),
            },
            span,
        ))
    }

    /// One side of a rule: an atom, optionally combined by a binary operator
    /// whose slot may also hold an operator variable. No operator chains.
    fn parse_rule_operand(&mut self, allow_op: bool) -> Result<SurfaceExpr, ParseError> {
        let lhs = self.parse_rule_atom()?;
        if !allow_op {
            return Ok(lhs);
        }
        let op = match self.peek() {
            Tok::Star => Some(OpSlot::Token('*')),
            Tok::Plus => Some(OpSlot::Token('+')),
            Tok::Minus => Some(OpSlot::Token('-')),
            Tok::Slash => Some(OpSlot::Token('/')),
            Tok::Lower(name) => Some(OpSlot::Var(name.clone())),
            _ => None,
        };
        let Some(op) = op else { return Ok(lhs) };
        self.bump();
        let rhs = self.parse_rule_atom()?;
        // a rule side is a single-operator expression: any operator that
        // follows belongs to the enclosing strategy chain
        let span = lhs.span.merge(rhs.span);
        Ok(SurfaceExpr::new(
            SurfaceKind::BinOp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ))
    }

    fn parse_rule_atom(&mut self) -> Result<SurfaceExpr, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                let sp = self.bump().1;
                if matches!(self.peek(), Tok::LParen | Tok::Upper(_) | Tok::Number(_)) {
                    let arg = self.parse_rule_atom()?;
                    let span = sp.merge(arg.span);
                    return Ok(SurfaceExpr::new(
                        SurfaceKind::LabelApp(n, Some(Box::new(arg))),
                        span,
                    ));
                }
                Ok(SurfaceExpr::new(SurfaceKind::Number(n), sp))
            }
            Tok::Lower(name) => {
                let sp = self.bump().1;
                Ok(SurfaceExpr::new(SurfaceKind::Var(name), sp))
            }
            Tok::Upper(name) => {
                let sp = self.bump().1;
                if matches!(self.peek(), Tok::LParen | Tok::Upper(_) | Tok::Number(_)) {
                    let arg = self.parse_rule_atom()?;
                    let span = sp.merge(arg.span);
                    Ok(SurfaceExpr::new(
                        SurfaceKind::LabelApp(name, Some(Box::new(arg))),
                        span,
                    ))
                } else {
                    Ok(SurfaceExpr::new(SurfaceKind::LabelApp(name, None), sp))
                }
            }
            Tok::LParen => {
                let start = self.bump().1;
                if self.peek() == &Tok::RParen {
                    let end = self.bump().1;
                    return Ok(SurfaceExpr::new(SurfaceKind::Unit, start.merge(end)));
                }
                let first = self.parse_rule_operand(true)?;
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                        let second = self.parse_rule_operand(true)?;
                        let end = self.expect(Tok::RParen)?;
                        Ok(SurfaceExpr::new(
                            SurfaceKind::Pair(Box::new(first), Box::new(second)),
                            start.merge(end),
                        ))
                    }
                    _ => {
                        let end = self.expect(Tok::RParen)?;
                        Ok(SurfaceExpr::new(
                            SurfaceKind::Paren(Box::new(first)),
                            start.merge(end),
                        ))
                    }
                }
            }
            t => Err(ParseError::Syntax {
                message: format!("expected a pattern or expression, found {t}"),
                span: self.peek_span(),
            }),
        }
    }
}

enum ChainOp {
    Seq,
    Choice,
    Arith(char),
}

/// Decide whether an application argument is an execution input. Returns
/// `Some(wrap_succ)` when the application is an execution, `None` when it is
/// a combinator application.
fn exec_argument(arg: &SurfaceExpr) -> Option<bool> {
    match &arg.unparen().kind {
        SurfaceKind::Number(_)
        | SurfaceKind::Unit
        | SurfaceKind::Pair(_, _)
        | SurfaceKind::LabelApp(_, _)
        | SurfaceKind::BinOp { .. } => Some(true),
        SurfaceKind::Succ(_) | SurfaceKind::Fail | SurfaceKind::ExecApp { .. } => Some(false),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Desugaring
// ---------------------------------------------------------------------------

/// Lower a parsed surface expression into the core calculus. Total on parsed
/// trees.
pub fn desugar(e: &SurfaceExpr) -> CoreTerm {
    desugar_expr(e, false)
}

fn desugar_expr(e: &SurfaceExpr, in_rule: bool) -> CoreTerm {
    let span = e.span;
    let with = |kind: CoreKind| CoreTerm::with_span(kind, span);
    match &e.kind {
        SurfaceKind::Paren(inner) => desugar_expr(inner, in_rule),
        SurfaceKind::Number(n) => with(CoreKind::Label(
            n.clone(),
            Rc::new(CoreTerm::with_span(CoreKind::Unit, span)),
        )),
        SurfaceKind::Var(name) => match name.as_str() {
            "seq" => with(CoreKind::Seq),
            "choice" => with(CoreKind::Choice),
            _ => with(CoreKind::Var(name.clone())),
        },
        SurfaceKind::Unit => with(CoreKind::Unit),
        SurfaceKind::LabelApp(l, arg) => {
            let payload = match arg {
                Some(a) => desugar_expr(a, in_rule),
                None => CoreTerm::with_span(CoreKind::Unit, span),
            };
            with(CoreKind::Label(l.clone(), Rc::new(payload)))
        }
        SurfaceKind::BinOp { op, lhs, rhs } => {
            let l = desugar_expr(lhs, in_rule);
            let r = desugar_expr(rhs, in_rule);
            let op_term = match op {
                OpSlot::Token(c) => {
                    let label = op_label(*c).expect("operator token");
                    CoreTerm::with_span(
                        CoreKind::Label(
                            label.to_string(),
                            Rc::new(CoreTerm::with_span(CoreKind::Unit, span)),
                        ),
                        span,
                    )
                }
                OpSlot::Var(name) => CoreTerm::with_span(CoreKind::Var(name.clone()), span),
            };
            let inner = CoreTerm::with_span(
                CoreKind::Pair(
                    Rc::new(op_term),
                    Rc::new(CoreTerm::with_span(
                        CoreKind::Pair(Rc::new(l), Rc::new(r)),
                        span,
                    )),
                ),
                span,
            );
            with(CoreKind::Label("Op".to_string(), Rc::new(inner)))
        }
        SurfaceKind::Pair(a, b) => with(CoreKind::Pair(
            Rc::new(desugar_expr(a, in_rule)),
            Rc::new(desugar_expr(b, in_rule)),
        )),
        SurfaceKind::Rule { pattern, body } => {
            let p = desugar_pattern(pattern);
            let b = desugar_expr(body, true);
            with(CoreKind::Rule(Rc::new(p), Rc::new(b)))
        }
        SurfaceKind::SeqChain(items) => chain(items, CoreKind::Seq, span),
        SurfaceKind::ChoiceChain(items) => chain(items, CoreKind::Choice, span),
        SurfaceKind::St { var, body } => with(CoreKind::StLam(
            var.clone(),
            Rc::new(desugar_expr(body, false)),
        )),
        SurfaceKind::App { fun, arg } => with(CoreKind::CombApp(
            Rc::new(desugar_expr(fun, false)),
            Rc::new(desugar_expr(arg, false)),
        )),
        SurfaceKind::ExecApp {
            fun,
            arg,
            wrap_succ,
        } => {
            let input = desugar_expr(arg, false);
            let input = if *wrap_succ {
                CoreTerm::with_span(CoreKind::Succ(Rc::new(input)), arg.span)
            } else {
                input
            };
            with(CoreKind::Exec(
                Rc::new(desugar_expr(fun, false)),
                Rc::new(input),
            ))
        }
        SurfaceKind::Succ(inner) => with(CoreKind::Succ(Rc::new(desugar_expr(inner, false)))),
        SurfaceKind::Fail => with(CoreKind::Fail),
        SurfaceKind::Let { var, bound, body } => with(CoreKind::Let(
            var.clone(),
            Rc::new(desugar_expr(bound, false)),
            Rc::new(desugar_expr(body, false)),
        )),
    }
}

fn chain(items: &[SurfaceExpr], comb: CoreKind, span: Span) -> CoreTerm {
    let mut iter = items.iter();
    let first = desugar_expr(iter.next().expect("chains have two items"), false);
    iter.fold(first, |acc, item| {
        let rhs = desugar_expr(item, false);
        let partial = CoreTerm::with_span(
            CoreKind::CombApp(
                Rc::new(CoreTerm::with_span(comb.clone(), span)),
                Rc::new(acc),
            ),
            span,
        );
        CoreTerm::with_span(CoreKind::CombApp(Rc::new(partial), Rc::new(rhs)), span)
    })
}

fn desugar_pattern(e: &SurfaceExpr) -> Pattern {
    let span = e.span;
    let with = |kind: PatKind| Pattern::with_span(kind, span);
    match &e.kind {
        SurfaceKind::Paren(inner) => desugar_pattern(inner),
        SurfaceKind::Number(n) => with(PatKind::Label(
            n.clone(),
            Rc::new(Pattern::with_span(PatKind::Unit, span)),
        )),
        SurfaceKind::Var(name) => with(PatKind::Var(name.clone())),
        SurfaceKind::Unit => with(PatKind::Unit),
        SurfaceKind::LabelApp(l, arg) => {
            let payload = match arg {
                Some(a) => desugar_pattern(a),
                None => Pattern::with_span(PatKind::Unit, span),
            };
            with(PatKind::Label(l.clone(), Rc::new(payload)))
        }
        SurfaceKind::Pair(a, b) => with(PatKind::Pair(
            Rc::new(desugar_pattern(a)),
            Rc::new(desugar_pattern(b)),
        )),
        SurfaceKind::BinOp { op, lhs, rhs } => {
            let op_pat = match op {
                OpSlot::Token(c) => Pattern::with_span(
                    PatKind::Label(
                        op_label(*c).expect("operator token").to_string(),
                        Rc::new(Pattern::with_span(PatKind::Unit, span)),
                    ),
                    span,
                ),
                OpSlot::Var(name) => Pattern::with_span(PatKind::Var(name.clone()), span),
            };
            let inner = Pattern::with_span(
                PatKind::Pair(
                    Rc::new(op_pat),
                    Rc::new(Pattern::with_span(
                        PatKind::Pair(
                            Rc::new(desugar_pattern(lhs)),
                            Rc::new(desugar_pattern(rhs)),
                        ),
                        span,
                    )),
                ),
                span,
            );
            with(PatKind::Label("Op".to_string(), Rc::new(inner)))
        }
        other => unreachable!("not a pattern shape: {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Pretty-printing back to surface syntax
// ---------------------------------------------------------------------------

/// Print a core term in surface syntax. Fails on terms with no surface form
/// (the nondeterministic result choice, and executions whose input is not a
/// `succ`/`fail`/execution).
pub fn print_term(t: &CoreTerm) -> Result<String, PrintError> {
    match &t.kind {
        CoreKind::Var(x) => Ok(x.clone()),
        CoreKind::Unit => Ok("()".to_string()),
        CoreKind::Pair(a, b) => Ok(format!("({}, {})", print_term(a)?, print_term(b)?)),
        CoreKind::Label(_, _) => print_expr(t),
        CoreKind::Seq => Ok("seq".to_string()),
        CoreKind::Choice => Ok("choice".to_string()),
        CoreKind::Fail => Ok("fail".to_string()),
        CoreKind::Succ(v) => Ok(format!("succ {}", print_succ_payload(v)?)),
        CoreKind::Rule(p, e) => Ok(format!("rule {} -> {}", print_pattern(p)?, print_rule_body(e)?)),
        CoreKind::StLam(x, e) => Ok(format!("st {x} => {}", print_term(e)?)),
        CoreKind::CombApp(f, a) => {
            // full applications of seq/choice print as operators
            if let CoreKind::CombApp(inner, lhs) = &f.kind {
                match inner.kind {
                    CoreKind::Seq => {
                        return Ok(format!("({}) ; ({})", print_term(lhs)?, print_term(a)?))
                    }
                    CoreKind::Choice => {
                        return Ok(format!("({}) || ({})", print_term(lhs)?, print_term(a)?))
                    }
                    _ => {}
                }
            }
            Ok(format!("{} ({})", print_callee(f)?, print_term(a)?))
        }
        CoreKind::Exec(s, i) => {
            let fun = print_callee(s)?;
            match &i.kind {
                CoreKind::Succ(v) => Ok(format!("{fun} ({})", print_expr(v)?)),
                CoreKind::Fail => Ok(format!("{fun} fail")),
                CoreKind::Exec(_, _) => Ok(format!("{fun} ({})", print_term(i)?)),
                _ => Err(PrintError),
            }
        }
        CoreKind::Let(x, a, b) => Ok(format!("let {x} = {} in {}", print_term(a)?, print_term(b)?)),
        CoreKind::Alt(_, _) => Err(PrintError),
    }
}

fn print_callee(t: &CoreTerm) -> Result<String, PrintError> {
    match &t.kind {
        CoreKind::Var(_) | CoreKind::Seq | CoreKind::Choice => print_term(t),
        _ => Ok(format!("({})", print_term(t)?)),
    }
}

/// Print a value-level expression (rule bodies, execution inputs) with
/// number/operator sugar.
fn print_expr(t: &CoreTerm) -> Result<String, PrintError> {
    if let Some((op, l, r)) = binop_parts(t) {
        let ls = print_expr_operand(l)?;
        let rs = print_expr_operand(r)?;
        return Ok(match op {
            OpView::Token(c) => format!("{ls} {c} {rs}"),
            OpView::Var(x) => format!("{ls} {x} {rs}"),
        });
    }
    match &t.kind {
        CoreKind::Var(x) => Ok(x.clone()),
        CoreKind::Unit => Ok("()".to_string()),
        CoreKind::Pair(a, b) => Ok(format!("({}, {})", print_expr(a)?, print_expr(b)?)),
        CoreKind::Label(l, e) => {
            if l.chars().all(|c| c.is_ascii_digit()) && e.kind == CoreKind::Unit {
                return Ok(l.clone());
            }
            match &e.kind {
                CoreKind::Unit => Ok(format!("{l} ()")),
                CoreKind::Pair(_, _) => Ok(format!("{l} {}", print_expr(e)?)),
                _ => Ok(format!("{l} ({})", print_expr(e)?)),
            }
        }
        CoreKind::Succ(v) => Ok(format!("succ {}", print_succ_payload(v)?)),
        CoreKind::Fail => Ok("fail".to_string()),
        _ => Err(PrintError),
    }
}

/// Number literals and unit stand on their own after `succ`; anything
/// compound is parenthesized.
fn print_succ_payload(v: &CoreTerm) -> Result<String, PrintError> {
    match &v.kind {
        CoreKind::Unit => Ok("()".to_string()),
        CoreKind::Label(l, e)
            if l.chars().all(|c| c.is_ascii_digit()) && e.kind == CoreKind::Unit =>
        {
            Ok(l.clone())
        }
        _ => Ok(format!("({})", print_expr(v)?)),
    }
}

fn print_expr_operand(t: &CoreTerm) -> Result<String, PrintError> {
    if binop_parts(t).is_some() {
        Ok(format!("({})", print_expr(t)?))
    } else {
        print_expr(t)
    }
}

fn print_rule_body(t: &CoreTerm) -> Result<String, PrintError> {
    print_expr(t)
}

enum OpView<'a> {
    Token(char),
    Var(&'a str),
}

fn binop_parts(t: &CoreTerm) -> Option<(OpView<'_>, &CoreTerm, &CoreTerm)> {
    if let CoreKind::Label(l, inner) = &t.kind {
        if l == "Op" {
            if let CoreKind::Pair(op, operands) = &inner.kind {
                if let CoreKind::Pair(lhs, rhs) = &operands.kind {
                    match &op.kind {
                        CoreKind::Label(name, u) if u.kind == CoreKind::Unit => {
                            if let Some(c) = op_token(name) {
                                return Some((OpView::Token(c), lhs, rhs));
                            }
                        }
                        CoreKind::Var(x) => return Some((OpView::Var(x), lhs, rhs)),
                        _ => {}
                    }
                }
            }
        }
    }
    None
}

fn print_pattern(p: &Pattern) -> Result<String, PrintError> {
    if let Some((op, l, r)) = pat_binop_parts(p) {
        let ls = print_pattern_operand(l)?;
        let rs = print_pattern_operand(r)?;
        return Ok(match op {
            OpView::Token(c) => format!("{ls} {c} {rs}"),
            OpView::Var(x) => format!("{ls} {x} {rs}"),
        });
    }
    match &p.kind {
        PatKind::Var(x) => Ok(x.clone()),
        PatKind::Unit => Ok("()".to_string()),
        PatKind::Pair(a, b) => Ok(format!("({}, {})", print_pattern(a)?, print_pattern(b)?)),
        PatKind::Label(l, q) => {
            if l.chars().all(|c| c.is_ascii_digit()) && q.kind == PatKind::Unit {
                return Ok(l.clone());
            }
            match &q.kind {
                PatKind::Unit => Ok(format!("{l} ()")),
                PatKind::Pair(_, _) => Ok(format!("{l} {}", print_pattern(q)?)),
                _ => Ok(format!("{l} ({})", print_pattern(q)?)),
            }
        }
    }
}

fn print_pattern_operand(p: &Pattern) -> Result<String, PrintError> {
    if pat_binop_parts(p).is_some() {
        Ok(format!("({})", print_pattern(p)?))
    } else {
        print_pattern(p)
    }
}

fn pat_binop_parts(p: &Pattern) -> Option<(OpView<'_>, &Pattern, &Pattern)> {
    if let PatKind::Label(l, inner) = &p.kind {
        if l == "Op" {
            if let PatKind::Pair(op, operands) = &inner.kind {
                if let PatKind::Pair(lhs, rhs) = &operands.kind {
                    match &op.kind {
                        PatKind::Label(name, u) if u.kind == PatKind::Unit => {
                            if let Some(c) = op_token(name) {
                                return Some((OpView::Token(c), lhs, rhs));
                            }
                        }
                        PatKind::Var(x) => return Some((OpView::Var(x), lhs, rhs)),
                        _ => {}
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::mk;

    fn parse_core(src: &str) -> CoreTerm {
        desugar(&parse(src).expect("parse"))
    }

    #[test]
    fn parses_commutativity_rule() {
        let e = parse("rule m * n -> n * m").unwrap();
        match &e.kind {
            SurfaceKind::Rule { pattern, body } => {
                assert!(matches!(
                    &pattern.kind,
                    SurfaceKind::BinOp { op: OpSlot::Token('*'), .. }
                ));
                assert!(matches!(
                    &body.kind,
                    SurfaceKind::BinOp { op: OpSlot::Token('*'), .. }
                ));
            }
            other => panic!("expected a rule, got {other:?}"),
        }
    }

    #[test]
    fn parses_unit() {
        let e = parse("()").unwrap();
        assert_eq!(e.kind, SurfaceKind::Unit);
        assert_eq!(parse_core("()"), mk::unit());
    }

    /// Independent ambiguity oracle: enumerate every grouping of
    /// `a ; b || c` under the two possible precedence orders. Both orders
    /// produce structurally different trees, so the string is ambiguous and
    /// must be rejected.
    #[test]
    fn mixed_seq_choice_is_a_parse_error() {
        #[derive(PartialEq, Debug)]
        enum Tree {
            Leaf(char),
            Node(char, Box<Tree>, Box<Tree>),
        }
        fn parse_with(ops: [char; 2], tighter_first: bool) -> Tree {
            // three leaves a, b, c with operators `;` then `||`
            let (o1, o2) = (ops[0], ops[1]);
            if tighter_first {
                // (a ; b) || c
                Tree::Node(
                    o2,
                    Box::new(Tree::Node(
                        o1,
                        Box::new(Tree::Leaf('a')),
                        Box::new(Tree::Leaf('b')),
                    )),
                    Box::new(Tree::Leaf('c')),
                )
            } else {
                // a ; (b || c)
                Tree::Node(
                    o1,
                    Box::new(Tree::Leaf('a')),
                    Box::new(Tree::Node(
                        o2,
                        Box::new(Tree::Leaf('b')),
                        Box::new(Tree::Leaf('c')),
                    )),
                )
            }
        }
        let semi_tight = parse_with([';', '|'], true);
        let bar_tight = parse_with([';', '|'], false);
        assert_ne!(semi_tight, bar_tight, "the two precedence orders disagree");

        let err = parse("(rule () -> ()) ; (rule () -> ()) || (rule () -> ())").unwrap_err();
        assert!(matches!(err, ParseError::MixedOperators { .. }));
    }

    #[test]
    fn chains_of_one_operator_are_fine() {
        parse("a ; b ; c").unwrap();
        parse("a || b || c").unwrap();
        assert!(parse("1 * 2 * 3").is_err());
    }

    #[test]
    fn desugars_numbers_and_operators() {
        // a number in input position becomes a label applied to unit
        let e = parse_core("(rule x -> x) (5 * 2)");
        let expected = mk::exec(
            mk::rule(mk::pvar("x"), mk::var("x")),
            mk::succ(mk::binop("Mul", mk::num(5), mk::num(2))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn desugars_seq_and_choice_chains() {
        let e = parse_core("(rule () -> ()) ; (rule () -> ())");
        let r = mk::rule(mk::punit(), mk::unit());
        assert_eq!(e, mk::seq(r.clone(), r.clone()));
        let e = parse_core("(rule () -> ()) || (rule () -> ())");
        assert_eq!(e, mk::choice(r.clone(), r));
    }

    #[test]
    fn desugars_swap_ops_verbatim() {
        // the worked combinator example in its full core form
        let src = "let swapOps = st s => (rule m op n -> n op m) ; s \
                   in swapOps (rule 1 * v -> v) (2 * 1)";
        let got = parse_core(src);
        let rule_swap = mk::rule(
            mk::pbinop_var("op", mk::pvar("m"), mk::pvar("n")),
            mk::binop_term(mk::var("op"), mk::var("n"), mk::var("m")),
        );
        let rule_mul1 = mk::rule(mk::pbinop("Mul", mk::pnum(1), mk::pvar("v")), mk::var("v"));
        let expected = mk::let_in(
            "swapOps",
            mk::st("s", mk::seq(rule_swap, mk::var("s"))),
            mk::exec(
                mk::comb_app(mk::var("swapOps"), rule_mul1),
                mk::succ(mk::binop("Mul", mk::num(2), mk::num(1))),
            ),
        );
        assert_eq!(got, expected);
    }

    #[test]
    fn chained_execution_threads_results() {
        // (rule 5 + 5 -> 10) (e1 (5 * 2)): the inner execution is passed
        // through without an extra succ
        let e = parse_core("let e1 = rule () -> () in (rule 5 + 5 -> 10) (e1 (5 * 2))");
        match &e.kind {
            CoreKind::Let(_, _, body) => match &body.kind {
                CoreKind::Exec(_, i) => assert!(matches!(i.kind, CoreKind::Exec(_, _))),
                other => panic!("expected execution, got {other:?}"),
            },
            other => panic!("expected let, got {other:?}"),
        }
    }

    #[test]
    fn top_level_let_without_in_names_itself() {
        let e = parse_core("let e1 = rule m * n -> n * m");
        match &e.kind {
            CoreKind::Let(x, _, body) => {
                assert_eq!(x, "e1");
                assert_eq!(body.kind, CoreKind::Var("e1".into()));
            }
            other => panic!("expected let, got {other:?}"),
        }
        // and chains of definitions
        let e = parse_core("let a = rule () -> () let b = a ; a");
        match &e.kind {
            CoreKind::Let(x, _, body) => {
                assert_eq!(x, "a");
                assert!(matches!(body.kind, CoreKind::Let(_, _, _)));
            }
            other => panic!("expected let, got {other:?}"),
        }
    }

    #[test]
    fn operator_variable_only_inside_rules() {
        // inside a rule, a lowercase identifier in operator position is an
        // operator variable
        let e = parse("rule m op n -> n op m").unwrap();
        match &e.kind {
            SurfaceKind::Rule { pattern, .. } => assert!(matches!(
                &pattern.kind,
                SurfaceKind::BinOp { op: OpSlot::Var(v), .. } if v == "op"
            )),
            other => panic!("{other:?}"),
        }
        // outside rules there is no operator-variable position: the same
        // spelling is an application chain
        let e = parse("(a op b)").unwrap();
        assert!(matches!(
            &e.unparen().kind,
            SurfaceKind::App { .. }
        ));
    }

    #[test]
    fn comments_are_skipped() {
        let e = parse_core("// leading comment\nrule () -> () // trailing");
        assert_eq!(e, mk::rule(mk::punit(), mk::unit()));
    }

    #[test]
    fn spans_are_contained_in_source() {
        let src = "let e1 = rule m * n -> n * m in e1";
        let e = parse(src).unwrap();
        fn walk(e: &SurfaceExpr, len: usize) {
            assert!(e.span.end <= len, "span {:?} escapes source", e.span);
            match &e.kind {
                SurfaceKind::BinOp { lhs, rhs, .. } => {
                    walk(lhs, len);
                    walk(rhs, len);
                }
                SurfaceKind::Pair(a, b) => {
                    walk(a, len);
                    walk(b, len);
                }
                SurfaceKind::Rule { pattern, body } => {
                    walk(pattern, len);
                    walk(body, len);
                }
                SurfaceKind::SeqChain(xs) | SurfaceKind::ChoiceChain(xs) => {
                    xs.iter().for_each(|x| walk(x, len))
                }
                SurfaceKind::St { body, .. } => walk(body, len),
                SurfaceKind::App { fun, arg } | SurfaceKind::ExecApp { fun, arg, .. } => {
                    walk(fun, len);
                    walk(arg, len);
                }
                SurfaceKind::Succ(x) | SurfaceKind::Paren(x) => walk(x, len),
                SurfaceKind::Let { bound, body, .. } => {
                    walk(bound, len);
                    walk(body, len);
                }
                SurfaceKind::LabelApp(_, Some(a)) => walk(a, len),
                _ => {}
            }
        }
        walk(&e, src.len());
    }

    #[test]
    fn print_parse_round_trip_on_goldens() {
        let sources = [
            "let e1 = rule m * n -> n * m ; (rule 1 * v -> v || rule 2 * w -> w + w)",
            "let swapOps = st s => (rule m op n -> n op m) ; s",
            "(rule 5 + 5 -> 10) ((rule 1 * v -> v) (5 * 2))",
            "succ (4 + 3)",
            "fail",
            "(rule x -> x) fail",
        ];
        for src in sources {
            let core = parse_core(src);
            let printed = print_term(&core).expect("printable");
            let reparsed = desugar(&parse(&printed).unwrap_or_else(|e| {
                panic!("printed form must reparse: {printed:?}: {e}")
            }));
            assert_eq!(core, reparsed, "round trip failed via {printed:?}");
        }
    }
}
