//! Scripted play traces, one operation per line:
//!
//! ```text
//! perform <card>
//! answer <card> [<choice>[,<choice>...]]
//! hint
//! note add <solution>|"free:<text>"
//! note mark <line> <+|-> [@<directory index>] <note text>
//! note unmark <line> <mark>
//! note remove <line>
//! diagnose <slot>=<id>[,<id>|"free:<text>"...][;<slot>=...]
//! tick <seconds>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;

use thiserror::Error;

use super::state::*;
use super::{Engine, EngineError};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptOp {
    Perform(String),
    Answer { card: String, choices: Vec<String> },
    Hint,
    Note(NotebookOp),
    Diagnose(DiagnosisSubmission),
    Tick(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    pub line: usize,
    pub op: ScriptOp,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Engine {
        line: usize,
        #[source]
        source: EngineError,
    },
    #[error("script ended without a diagnose step")]
    NoDiagnosis,
}

impl fmt::Display for ScriptOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptOp::Perform(c) => write!(f, "perform {c}"),
            ScriptOp::Answer { card, choices } => write!(f, "answer {card} {}", choices.join(",")),
            ScriptOp::Hint => f.write_str("hint"),
            ScriptOp::Note(_) => f.write_str("note"),
            ScriptOp::Diagnose(_) => f.write_str("diagnose"),
            ScriptOp::Tick(ms) => write!(f, "tick {}", *ms as f64 / 1000.0),
        }
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>, ScriptError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let op = parse_line(trimmed).map_err(|message| ScriptError::Syntax { line, message })?;
        steps.push(ScriptStep { line, op });
    }
    Ok(steps)
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

fn single_word<'a>(rest: &'a str, what: &str) -> Result<&'a str, String> {
    let (word, tail) = split_word(rest);
    if word.is_empty() {
        return Err(format!("expected {what}"));
    }
    if !tail.is_empty() {
        return Err(format!("unexpected `{tail}` after {what}"));
    }
    Ok(word)
}

fn parse_index(word: &str, what: &str) -> Result<usize, String> {
    word.parse()
        .map_err(|_| format!("expected {what} index, found `{word}`"))
}

fn parse_line(line: &str) -> Result<ScriptOp, String> {
    let (verb, rest) = split_word(line);
    match verb {
        "perform" => Ok(ScriptOp::Perform(single_word(rest, "card id")?.to_string())),
        "answer" => {
            let (card, tail) = split_word(rest);
            if card.is_empty() {
                return Err("expected card id".into());
            }
            // an empty list submits no choice at all
            let list = if tail.trim().is_empty() {
                ""
            } else {
                single_word(tail, "choice list")?
            };
            let choices: Vec<String> = list
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            Ok(ScriptOp::Answer {
                card: card.to_string(),
                choices,
            })
        }
        "hint" if rest.is_empty() => Ok(ScriptOp::Hint),
        "tick" => {
            let word = single_word(rest, "seconds")?;
            let secs: f64 = word
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && *s >= 0.0)
                .ok_or_else(|| format!("bad tick `{word}`"))?;
            Ok(ScriptOp::Tick((secs * 1000.0).round() as u64))
        }
        "note" => parse_note(rest).map(ScriptOp::Note),
        "diagnose" => parse_diagnosis(rest).map(ScriptOp::Diagnose),
        other => Err(format!("unknown operation `{other}`")),
    }
}

fn parse_note(rest: &str) -> Result<NotebookOp, String> {
    let (sub, tail) = split_word(rest);
    match sub {
        "add" => {
            let target = if tail.starts_with('"') {
                let (value, after) = quoted(tail)?;
                if !after.trim().is_empty() {
                    return Err(format!("unexpected `{after}` after quoted text"));
                }
                free_or_solution(value)
            } else if let Some(text) = tail.strip_prefix("free:") {
                NotebookTarget::FreeText {
                    text: text.to_string(),
                }
            } else {
                NotebookTarget::Solution {
                    id: single_word(tail, "solution id")?.to_string(),
                }
            };
            Ok(NotebookOp::AddLine { target })
        }
        "remove" => Ok(NotebookOp::RemoveLine {
            line: parse_index(single_word(tail, "line")?, "line")?,
        }),
        "unmark" => {
            let (line, tail) = split_word(tail);
            Ok(NotebookOp::RemoveMark {
                line: parse_index(line, "line")?,
                mark: parse_index(single_word(tail, "mark")?, "mark")?,
            })
        }
        "mark" => {
            let (line, tail) = split_word(tail);
            let line = parse_index(line, "line")?;
            let (sign, mut tail) = split_word(tail);
            let sign = match sign {
                "+" => MarkSign::Strengthen,
                "-" => MarkSign::Weaken,
                other => return Err(format!("expected + or -, found `{other}`")),
            };
            let mut directory_ref = None;
            if let Some(r) = tail.strip_prefix('@') {
                let (index, after) = split_word(r);
                directory_ref = Some(parse_index(index, "directory")?);
                tail = after;
            }
            let note = if tail.starts_with('"') {
                quoted(tail)?.0
            } else {
                tail.to_string()
            };
            Ok(NotebookOp::AddMark {
                line,
                mark: NotebookMark {
                    sign,
                    note,
                    directory_ref,
                },
            })
        }
        other => Err(format!("unknown note operation `{other}`")),
    }
}

fn free_or_solution(value: String) -> NotebookTarget {
    match value.strip_prefix("free:") {
        Some(text) => NotebookTarget::FreeText {
            text: text.to_string(),
        },
        None => NotebookTarget::Solution { id: value },
    }
}

/// Reads a JSON-style quoted string at the start of `s`.
fn quoted(s: &str) -> Result<(String, &str), String> {
    let mut escaped = false;
    for (i, c) in s.char_indices().skip(1) {
        match c {
            '\\' if !escaped => escaped = true,
            '"' if !escaped => {
                let value: String = serde_json::from_str(&s[..=i])
                    .map_err(|e| format!("bad quoted string: {e}"))?;
                return Ok((value, &s[i + 1..]));
            }
            _ => escaped = false,
        }
    }
    Err("unterminated quoted string".into())
}

fn parse_diagnosis(rest: &str) -> Result<DiagnosisSubmission, String> {
    let mut submission = DiagnosisSubmission::default();
    let mut s = rest.trim();
    while !s.is_empty() {
        let eq = s
            .find('=')
            .ok_or_else(|| format!("expected slot=value in `{s}`"))?;
        let slot = s[..eq].trim().to_string();
        if slot.is_empty() {
            return Err("empty slot id".into());
        }
        let answer = submission.0.entry(slot.clone()).or_default();
        s = s[eq + 1..].trim_start();
        loop {
            if s.starts_with('"') {
                let (value, after) = quoted(s)?;
                match value.strip_prefix("free:") {
                    Some(text) => answer.free_text.push(text.to_string()),
                    None => {
                        answer.chosen.insert(value);
                    }
                }
                s = after.trim_start();
            } else {
                let end = s.find([',', ';']).unwrap_or(s.len());
                let value = s[..end].trim();
                if let Some(text) = value.strip_prefix("free:") {
                    answer.free_text.push(text.to_string());
                } else if !value.is_empty() {
                    answer.chosen.insert(value.to_string());
                }
                s = &s[end..];
            }
            match s.chars().next() {
                Some(',') => s = s[1..].trim_start(),
                Some(';') => {
                    s = s[1..].trim_start();
                    break;
                }
                None => break,
                Some(_) => return Err(format!("unexpected `{s}` in slot `{slot}`")),
            }
        }
    }
    Ok(submission)
}

/// The result of running a script to completion.
#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub state: GameState,
    pub report: Option<EvaluationReport>,
    pub hints: Vec<String>,
}

/// Runs `steps` against a fresh play started at `start`. Stops at the first
/// failing step.
pub fn run_steps(
    engine: &Engine,
    steps: &[ScriptStep],
    start: Timestamp,
) -> Result<ScriptRun, ScriptError> {
    let mut now = start;
    let mut state = engine.start_session(now);
    let mut report = None;
    let mut hints = Vec::new();
    for step in steps {
        let at_line = |source| ScriptError::Engine {
            line: step.line,
            source,
        };
        match &step.op {
            ScriptOp::Perform(card) => {
                state = engine.perform_action(&state, card, now).map_err(at_line)?.0;
            }
            ScriptOp::Answer { card, choices } => {
                state = engine
                    .answer_question(&state, card, choices)
                    .map_err(at_line)?
                    .0;
            }
            ScriptOp::Hint => {
                let (next, hint) = engine.request_hint(&state).map_err(at_line)?;
                state = next;
                hints.push(hint);
            }
            ScriptOp::Note(op) => {
                state = engine
                    .edit_notebook(&state, std::slice::from_ref(op))
                    .map_err(at_line)?;
            }
            ScriptOp::Diagnose(submission) => {
                let (next, r) = engine
                    .submit_diagnosis(&state, submission, now)
                    .map_err(at_line)?;
                state = next;
                report = Some(r);
            }
            ScriptOp::Tick(ms) => now = now.plus_millis(*ms),
        }
    }
    Ok(ScriptRun {
        state,
        report,
        hints,
    })
}

/// Parses and runs a script, requiring that it ends in a diagnosis.
pub fn simulate(
    engine: &Engine,
    script: &str,
    start: Timestamp,
) -> Result<EvaluationReport, ScriptError> {
    let steps = parse_script(script)?;
    run_steps(engine, &steps, start)?
        .report
        .ok_or(ScriptError::NoDiagnosis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_operation() {
        let script = r#"
# comment
perform ecg
answer ecg ecg_1,ecg_3
hint
note add mi
note add "free:pericarditis?"
note mark 0 + @1 ST elevation
note mark 1 - "not \"likely\""
note unmark 0 0
note remove 1
tick 12.5
diagnose pathology=mi;ward=cardio ; care=o2,"free:call ahead, quickly";extra=free:none
"#;
        let steps = parse_script(script).unwrap();
        assert_eq!(steps.len(), 11);
        assert_eq!(steps[0].line, 3);
        assert_eq!(
            steps[1].op,
            ScriptOp::Answer {
                card: "ecg".into(),
                choices: vec!["ecg_1".into(), "ecg_3".into()]
            }
        );
        assert_eq!(
            steps[5].op,
            ScriptOp::Note(NotebookOp::AddMark {
                line: 0,
                mark: NotebookMark {
                    sign: MarkSign::Strengthen,
                    note: "ST elevation".into(),
                    directory_ref: Some(1)
                }
            })
        );
        assert_eq!(
            steps[4].op,
            ScriptOp::Note(NotebookOp::AddLine {
                target: NotebookTarget::FreeText {
                    text: "pericarditis?".into()
                }
            })
        );
        assert_eq!(steps[9].op, ScriptOp::Tick(12_500));
        let ScriptOp::Diagnose(d) = &steps[10].op else {
            panic!()
        };
        let expected = DiagnosisSubmission::default()
            .choose("pathology", &["mi"])
            .choose("ward", &["cardio"])
            .choose("care", &["o2"])
            .free_text("care", "call ahead, quickly")
            .free_text("extra", "none");
        assert_eq!(d, &expected);
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_script("perform a\nfly away").unwrap_err();
        assert!(matches!(err, ScriptError::Syntax { line: 2, .. }), "{err}");
        assert!(parse_script("perform").is_err());
        assert!(parse_script("perform a b").is_err());
        assert!(parse_script("tick -1").is_err());
        assert!(parse_script("note mark 0 * x").is_err());
        assert!(parse_script("diagnose pathology").is_err());
        assert!(parse_script("note add \"free:oops").is_err());
    }
}
