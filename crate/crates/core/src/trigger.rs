//! Trigger programs: the small command language attached to action cards.
//!
//! A program is a `;`-separated list of commands (`show`, `hide`, `enable`,
//! `disable`, `add`) and answer conditionals (`on_correct { .. }`,
//! `on_wrong { .. }`). There are no loops or variables, so every program
//! terminates and its card/item references can be enumerated statically.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conditionals may nest, but not without bound.
pub const MAX_NESTING: usize = 32;

const COMMAND_NAMES: &[&str] = &["show", "hide", "enable", "disable", "add"];
const CONDITIONAL_NAMES: &[&str] = &["on_correct", "on_wrong"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerProgram {
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statement {
    Command(Command),
    OnCorrect(TriggerProgram),
    OnWrong(TriggerProgram),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Show(String),
    Hide(String),
    Enable(String),
    Disable(String),
    Add { item: String, amount: f64 },
}

/// How the analysis question of the triggering card was answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerOutcome {
    Correct,
    Wrong,
    NoQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardChange {
    Show,
    Hide,
    Enable,
    Disable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    Card { card: String, change: CardChange },
    Delta { item: String, amount: f64 },
}

/// Effects in source order. The engine applies them atomically, later card
/// changes overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffectSet(pub Vec<Effect>);

impl EffectSet {
    pub fn iter(&self) -> std::slice::Iter<'_, Effect> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerErrorKind {
    /// A token other than one of `expected` was found.
    Syntax {
        found: String,
    },
    UnknownCommand(String),
    /// A numeric literal that does not fit a finite `f64`.
    NumberOutOfRange,
    TooDeep,
}

/// A parse failure, positioned at a byte offset of the source.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TriggerError {
    pub offset: usize,
    pub kind: TriggerErrorKind,
    pub expected: Vec<String>,
}

impl fmt::Display for TriggerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TriggerErrorKind::Syntax { found } => {
                write!(f, "syntax error at byte {}: found {found}", self.offset)?
            }
            TriggerErrorKind::UnknownCommand(name) => {
                write!(f, "unknown command `{name}` at byte {}", self.offset)?
            }
            TriggerErrorKind::NumberOutOfRange => {
                write!(f, "number out of range at byte {}", self.offset)?
            }
            TriggerErrorKind::TooDeep => write!(
                f,
                "conditionals nested deeper than {MAX_NESTING} at byte {}",
                self.offset
            )?,
        }
        if !self.expected.is_empty() {
            write!(f, "; expected one of: {}", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl TriggerProgram {
    /// Effects produced when the owning card resolves with `outcome`.
    pub fn eval(&self, outcome: AnswerOutcome) -> EffectSet {
        let mut out = Vec::new();
        self.collect(outcome, &mut out);
        EffectSet(out)
    }

    fn collect(&self, outcome: AnswerOutcome, out: &mut Vec<Effect>) {
        for stmt in &self.statements {
            match stmt {
                Statement::Command(cmd) => out.push(cmd.effect()),
                Statement::OnCorrect(body) if outcome == AnswerOutcome::Correct => {
                    body.collect(outcome, out)
                }
                Statement::OnWrong(body) if outcome == AnswerOutcome::Wrong => {
                    body.collect(outcome, out)
                }
                Statement::OnCorrect(_) | Statement::OnWrong(_) => {}
            }
        }
    }

    /// Every command in the program, in source order, including those inside
    /// either conditional branch.
    pub fn commands(&self) -> Vec<&Command> {
        let mut out = Vec::new();
        self.walk(&mut |c| out.push(c));
        out
    }

    fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a Command)) {
        for stmt in &self.statements {
            match stmt {
                Statement::Command(cmd) => visit(cmd),
                Statement::OnCorrect(body) | Statement::OnWrong(body) => body.walk(visit),
            }
        }
    }

    pub fn has_conditionals(&self) -> bool {
        self.statements
            .iter()
            .any(|s| matches!(s, Statement::OnCorrect(_) | Statement::OnWrong(_)))
    }

    pub fn card_refs(&self) -> BTreeSet<&str> {
        self.commands()
            .into_iter()
            .filter_map(Command::card)
            .collect()
    }

    pub fn item_refs(&self) -> BTreeSet<&str> {
        self.commands()
            .into_iter()
            .filter_map(|c| match c {
                Command::Add { item, .. } => Some(item.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Canonical source text. `parse(format(p)) == p` for every program.
    pub fn format(&self) -> String {
        let mut out = String::new();
        self.format_into(&mut out, 0);
        out
    }

    fn format_into(&self, out: &mut String, depth: usize) {
        for (i, stmt) in self.statements.iter().enumerate() {
            if i > 0 {
                out.push_str(";\n");
            }
            indent(out, depth);
            match stmt {
                Statement::Command(cmd) => out.push_str(&cmd.to_string()),
                Statement::OnCorrect(body) | Statement::OnWrong(body) => {
                    let keyword = if matches!(stmt, Statement::OnCorrect(_)) {
                        "on_correct"
                    } else {
                        "on_wrong"
                    };
                    out.push_str(keyword);
                    out.push_str(" {\n");
                    body.format_into(out, depth + 1);
                    out.push('\n');
                    indent(out, depth);
                    out.push('}');
                }
            }
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

impl fmt::Display for TriggerProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

impl Command {
    pub fn card(&self) -> Option<&str> {
        match self {
            Command::Show(c) | Command::Hide(c) | Command::Enable(c) | Command::Disable(c) => {
                Some(c)
            }
            Command::Add { .. } => None,
        }
    }

    fn effect(&self) -> Effect {
        let card = |card: &String, change| Effect::Card {
            card: card.clone(),
            change,
        };
        match self {
            Command::Show(c) => card(c, CardChange::Show),
            Command::Hide(c) => card(c, CardChange::Hide),
            Command::Enable(c) => card(c, CardChange::Enable),
            Command::Disable(c) => card(c, CardChange::Disable),
            Command::Add { item, amount } => Effect::Delta {
                item: item.clone(),
                amount: *amount,
            },
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Show(c) => write!(f, "show({c})"),
            Command::Hide(c) => write!(f, "hide({c})"),
            Command::Enable(c) => write!(f, "enable({c})"),
            Command::Disable(c) => write!(f, "disable({c})"),
            Command::Add { item, amount } => write!(f, "add({item}, {amount})"),
        }
    }
}

/// Parses trigger source into a program.
pub fn parse_trigger(source: &str) -> Result<TriggerProgram, TriggerError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        source,
        tokens,
        pos: 0,
    };
    let program = parser.program(0)?;
    parser.expect(Tok::Eof, &["end of input"])?;
    Ok(program)
}

/// `format(parse(source))`.
pub fn format_trigger(program: &TriggerProgram) -> String {
    program.format()
}

/// True if `s` is a valid identifier: `[a-z_][a-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_lowercase() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Ident,
    Number,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Eof,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, TriggerError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        let single = match b {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'{' => Some(Tok::LBrace),
            b'}' => Some(Tok::RBrace),
            b',' => Some(Tok::Comma),
            b';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            tokens.push(Token { tok, start, end: i });
        } else if b.is_ascii_whitespace() {
            i += 1;
        } else if b.is_ascii_lowercase() || b == b'_' {
            while i < bytes.len()
                && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
            {
                i += 1;
            }
            tokens.push(Token {
                tok: Tok::Ident,
                start,
                end: i,
            });
        } else if b.is_ascii_digit() || b == b'+' || b == b'-' {
            if b == b'+' || b == b'-' {
                i += 1;
            }
            let digits = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i == digits {
                return Err(unexpected_char(source, i, &["digit"]));
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                let frac = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == frac {
                    return Err(unexpected_char(source, i, &["digit"]));
                }
            }
            tokens.push(Token {
                tok: Tok::Number,
                start,
                end: i,
            });
        } else {
            return Err(unexpected_char(source, i, &[]));
        }
    }
    tokens.push(Token {
        tok: Tok::Eof,
        start: bytes.len(),
        end: bytes.len(),
    });
    Ok(tokens)
}

fn unexpected_char(source: &str, offset: usize, expected: &[&str]) -> TriggerError {
    let found = source[offset..]
        .chars()
        .next()
        .map(|c| format!("{c:?}"))
        .unwrap_or_else(|| "end of input".to_string());
    TriggerError {
        offset,
        kind: TriggerErrorKind::Syntax { found },
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

struct Parser<'a> {
    source: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Token {
        self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos];
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn text(&self, t: Token) -> &'a str {
        &self.source[t.start..t.end]
    }

    fn error_at(&self, t: Token, expected: &[&str]) -> TriggerError {
        let found = match t.tok {
            Tok::Eof => "end of input".to_string(),
            _ => format!("`{}`", self.text(t)),
        };
        TriggerError {
            offset: t.start,
            kind: TriggerErrorKind::Syntax { found },
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &[&str]) -> Result<Token, TriggerError> {
        let t = self.peek();
        if t.tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error_at(t, expected))
        }
    }

    fn program(&mut self, depth: usize) -> Result<TriggerProgram, TriggerError> {
        let closer = if depth == 0 { Tok::Eof } else { Tok::RBrace };
        let closer_name = if depth == 0 { "end of input" } else { "}" };
        let mut statements = vec![self.statement(depth)?];
        loop {
            let t = self.peek();
            if t.tok == Tok::Semi {
                self.bump();
                if self.peek().tok == closer {
                    break;
                }
                statements.push(self.statement(depth)?);
            } else if t.tok == closer {
                break;
            } else {
                return Err(self.error_at(t, &[";", closer_name]));
            }
        }
        Ok(TriggerProgram { statements })
    }

    fn statement(&mut self, depth: usize) -> Result<Statement, TriggerError> {
        let statement_start: Vec<&str> = COMMAND_NAMES
            .iter()
            .chain(CONDITIONAL_NAMES)
            .copied()
            .collect();
        let t = self.peek();
        if t.tok != Tok::Ident {
            return Err(self.error_at(t, &statement_start));
        }
        let name = self.text(t);
        match name {
            "on_correct" | "on_wrong" => {
                self.bump();
                if depth + 1 > MAX_NESTING {
                    return Err(TriggerError {
                        offset: t.start,
                        kind: TriggerErrorKind::TooDeep,
                        expected: Vec::new(),
                    });
                }
                self.expect(Tok::LBrace, &["{"])?;
                let body = self.program(depth + 1)?;
                self.expect(Tok::RBrace, &["}"])?;
                Ok(if name == "on_correct" {
                    Statement::OnCorrect(body)
                } else {
                    Statement::OnWrong(body)
                })
            }
            "show" | "hide" | "enable" | "disable" => {
                self.bump();
                self.expect(Tok::LParen, &["("])?;
                let card = self.expect(Tok::Ident, &["card id"])?;
                let card = self.text(card).to_string();
                self.expect(Tok::RParen, &[")"])?;
                Ok(Statement::Command(match name {
                    "show" => Command::Show(card),
                    "hide" => Command::Hide(card),
                    "enable" => Command::Enable(card),
                    _ => Command::Disable(card),
                }))
            }
            "add" => {
                self.bump();
                self.expect(Tok::LParen, &["("])?;
                let item = self.expect(Tok::Ident, &["scoring item id"])?;
                let item = self.text(item).to_string();
                self.expect(Tok::Comma, &[","])?;
                let num = self.expect(Tok::Number, &["number"])?;
                let amount: f64 = self.text(num).parse().map_err(|_| TriggerError {
                    offset: num.start,
                    kind: TriggerErrorKind::NumberOutOfRange,
                    expected: Vec::new(),
                })?;
                if !amount.is_finite() {
                    return Err(TriggerError {
                        offset: num.start,
                        kind: TriggerErrorKind::NumberOutOfRange,
                        expected: Vec::new(),
                    });
                }
                self.expect(Tok::RParen, &[")"])?;
                Ok(Statement::Command(Command::Add { item, amount }))
            }
            other => Err(TriggerError {
                offset: t.start,
                kind: TriggerErrorKind::UnknownCommand(other.to_string()),
                expected: statement_start.iter().map(|s| s.to_string()).collect(),
            }),
        }
    }
}
