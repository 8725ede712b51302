//! The playable case: investigation, analysis questions, hints, notebook,
//! diagnosis and end-of-case evaluation.
//!
//! Every operation takes the current [`GameState`] by reference and returns
//! a new one; a failed operation returns an error and leaves the caller's
//! state untouched. Time is never read here: callers pass a [`Timestamp`]
//! from whatever clock they use.

mod evaluation;
pub mod script;
mod state;
mod view;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CardState, CaseDefinition, MediaRef, SlotMode};
use crate::trigger::{AnswerOutcome, CardChange, Effect, EffectSet, TriggerProgram};

pub use evaluation::{evaluate, grade_from_counts};
pub use state::*;
pub use view::*;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum EngineError {
    #[error("card `{card}` is {state:?} and cannot be performed")]
    IllegalMove { card: String, state: CardState },
    #[error("unknown card `{card}`")]
    UnknownCard { card: String },
    #[error("card `{card}` was already performed")]
    AlreadyPerformed { card: String },
    #[error("the case has already been diagnosed")]
    SessionClosed,
    #[error("no pending question on card `{card}`")]
    NoPendingQuestion { card: String },
    #[error("unknown choice `{choice}` for card `{card}`")]
    UnknownChoice { card: String, choice: String },
    #[error("no hints left")]
    NoHints,
    #[error("notebook: {reason}")]
    Notebook { reason: String },
    #[error("malformed diagnosis: {reason}")]
    MalformedSubmission { reason: String },
    #[error("invalid case: {reason}")]
    InvalidCase { reason: String },
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::IllegalMove { .. } => "illegal_move",
            EngineError::UnknownCard { .. } => "unknown_card",
            EngineError::AlreadyPerformed { .. } => "already_performed",
            EngineError::SessionClosed => "session_closed",
            EngineError::NoPendingQuestion { .. } => "no_pending_question",
            EngineError::UnknownChoice { .. } => "unknown_choice",
            EngineError::NoHints => "no_hints",
            EngineError::Notebook { .. } => "notebook",
            EngineError::MalformedSubmission { .. } => "malformed_submission",
            EngineError::InvalidCase { .. } => "invalid_case",
        }
    }
}

/// What the learner receives after performing a card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub card_id: String,
    pub name: String,
    pub content_text: String,
    pub media: Vec<MediaRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionView>,
}

/// Response to an analysis answer. Correctness fields are present only
/// when the feedback policy reveals answers immediately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerFeedback {
    pub card_id: String,
    pub acknowledged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_choices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// A case bound to a feedback policy, ready to run any number of plays.
#[derive(Debug, Clone)]
pub struct Engine {
    case: Arc<CaseDefinition>,
    policy: FeedbackPolicy,
    triggers: BTreeMap<String, TriggerProgram>,
    card_index: HashMap<String, usize>,
}

impl Engine {
    pub fn new(case: Arc<CaseDefinition>, policy: FeedbackPolicy) -> Result<Self, EngineError> {
        let violations = case.validate();
        if let Some(v) = violations.first() {
            return Err(EngineError::InvalidCase {
                reason: v.message.clone(),
            });
        }
        let triggers = case.parsed_triggers();
        let card_index = case
            .actions
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();
        Ok(Engine {
            case,
            policy,
            triggers,
            card_index,
        })
    }

    pub fn case(&self) -> &CaseDefinition {
        &self.case
    }

    pub fn case_arc(&self) -> &Arc<CaseDefinition> {
        &self.case
    }

    pub fn policy(&self) -> FeedbackPolicy {
        self.policy
    }

    fn card(&self, id: &str) -> Result<&crate::case::ActionCard, EngineError> {
        self.card_index
            .get(id)
            .map(|&i| &self.case.actions[i])
            .ok_or_else(|| EngineError::UnknownCard {
                card: id.to_string(),
            })
    }

    pub fn start_session(&self, at: Timestamp) -> GameState {
        GameState {
            case_id: self.case.id.clone(),
            card_states: self
                .case
                .actions
                .iter()
                .map(|c| (c.id.clone(), c.initial_state))
                .collect(),
            performed: Vec::new(),
            answers: BTreeMap::new(),
            directory: Vec::new(),
            notebook: Vec::new(),
            item_values: self
                .case
                .scoring
                .items
                .iter()
                .map(|i| (i.id.clone(), i.initial))
                .collect(),
            phase: Phase::Investigating,
            started_at: at,
            hints_used: 0,
            report: None,
        }
    }

    fn open(state: &GameState) -> Result<(), EngineError> {
        match state.phase {
            Phase::Investigating => Ok(()),
            Phase::Diagnosed => Err(EngineError::SessionClosed),
        }
    }

    pub fn perform_action(
        &self,
        state: &GameState,
        card_id: &str,
        at: Timestamp,
    ) -> Result<(GameState, ActionOutcome), EngineError> {
        Self::open(state)?;
        let card = self.card(card_id)?;
        let current = state.card_states[card_id];
        if current != CardState::Visible {
            return Err(EngineError::IllegalMove {
                card: card_id.to_string(),
                state: current,
            });
        }
        if state.has_performed(card_id) {
            return Err(EngineError::AlreadyPerformed {
                card: card_id.to_string(),
            });
        }

        let mut next = state.clone();
        next.performed.push(PerformedAction {
            card_id: card_id.to_string(),
            at,
        });
        next.directory.push(DirectoryEntry {
            card_id: card_id.to_string(),
            timestamp: at,
            content_text: card.content_text.clone(),
            media: card.media.clone(),
        });
        if card.question.is_none() {
            let effects = self.resolution_effects(card_id, AnswerOutcome::NoQuestion, &[]);
            apply_effects(&mut next, &effects);
        }
        let outcome = ActionOutcome {
            card_id: card_id.to_string(),
            name: card.name.clone(),
            content_text: card.content_text.clone(),
            media: card.media.clone(),
            question: card.question.as_ref().map(QuestionView::from),
        };
        Ok((next, outcome))
    }

    /// Card deltas, chosen-choice deltas and trigger effects, in that order.
    fn resolution_effects(
        &self,
        card_id: &str,
        outcome: AnswerOutcome,
        chosen: &[&str],
    ) -> EffectSet {
        let card = &self.case.actions[self.card_index[card_id]];
        let mut effects: Vec<Effect> = card
            .score_deltas
            .iter()
            .map(|(item, amount)| Effect::Delta {
                item: item.clone(),
                amount: *amount,
            })
            .collect();
        if let Some(q) = &card.question {
            for choice in chosen {
                if let Some(deltas) = q.choice_deltas.get(*choice) {
                    effects.extend(deltas.iter().map(|(item, amount)| Effect::Delta {
                        item: item.clone(),
                        amount: *amount,
                    }));
                }
            }
        }
        if let Some(program) = self.triggers.get(card_id) {
            effects.extend(program.eval(outcome).0);
        }
        EffectSet(effects)
    }

    /// Maps 1-based choice ordinals (as shown in views) to choice ids.
    pub fn choice_ids(
        &self,
        card_id: &str,
        ordinals: &[usize],
    ) -> Result<Vec<String>, EngineError> {
        let card = self.card(card_id)?;
        let q = card
            .question
            .as_ref()
            .ok_or_else(|| EngineError::NoPendingQuestion {
                card: card_id.to_string(),
            })?;
        ordinals
            .iter()
            .map(|&n| {
                n.checked_sub(1)
                    .and_then(|i| q.choices.get(i))
                    .map(|c| c.id.clone())
                    .ok_or_else(|| EngineError::UnknownChoice {
                        card: card_id.to_string(),
                        choice: n.to_string(),
                    })
            })
            .collect()
    }

    pub fn answer_question(
        &self,
        state: &GameState,
        card_id: &str,
        choice_ids: &[String],
    ) -> Result<(GameState, AnswerFeedback), EngineError> {
        Self::open(state)?;
        let card = self.card(card_id)?;
        let pending = || EngineError::NoPendingQuestion {
            card: card_id.to_string(),
        };
        let q = card.question.as_ref().ok_or_else(pending)?;
        if !state.has_performed(card_id) || state.answers.contains_key(card_id) {
            return Err(pending());
        }
        let mut chosen = BTreeSet::new();
        for id in choice_ids {
            if q.choice_index(id).is_none() {
                return Err(EngineError::UnknownChoice {
                    card: card_id.to_string(),
                    choice: id.clone(),
                });
            }
            chosen.insert(id.clone());
        }
        let correct = chosen == q.correct;
        let outcome = if correct {
            AnswerOutcome::Correct
        } else {
            AnswerOutcome::Wrong
        };
        // Choice deltas apply in choice order, not selection order.
        let ordered: Vec<&str> = q
            .choices
            .iter()
            .filter(|c| chosen.contains(&c.id))
            .map(|c| c.id.as_str())
            .collect();
        let effects = self.resolution_effects(card_id, outcome, &ordered);

        let mut next = state.clone();
        next.answers.insert(card_id.to_string(), chosen);
        apply_effects(&mut next, &effects);

        let feedback = match self.policy.answers {
            Timing::Immediate => AnswerFeedback {
                card_id: card_id.to_string(),
                acknowledged: true,
                correct: Some(correct),
                correct_choices: Some(view::ordinals(q, &q.correct)),
                explanation: q.explanation.clone(),
            },
            Timing::End => AnswerFeedback {
                card_id: card_id.to_string(),
                acknowledged: true,
                correct: None,
                correct_choices: None,
                explanation: None,
            },
        };
        Ok((next, feedback))
    }

    pub fn request_hint(&self, state: &GameState) -> Result<(GameState, String), EngineError> {
        Self::open(state)?;
        let hint = self
            .case
            .help
            .get(state.hints_used as usize)
            .ok_or(EngineError::NoHints)?;
        let mut next = state.clone();
        next.hints_used += 1;
        Ok((next, hint.clone()))
    }

    pub fn edit_notebook(
        &self,
        state: &GameState,
        ops: &[NotebookOp],
    ) -> Result<GameState, EngineError> {
        Self::open(state)?;
        let err = |reason: String| EngineError::Notebook { reason };
        let mut next = state.clone();
        for op in ops {
            match op {
                NotebookOp::AddLine { target } => {
                    match target {
                        NotebookTarget::Solution { id } => {
                            let known = self.case.diagnosis.slots.iter().any(|s| s.has_option(id));
                            if !known {
                                return Err(err(format!("unknown solution `{id}`")));
                            }
                        }
                        NotebookTarget::FreeText { text } => {
                            if text.trim().is_empty() {
                                return Err(err("free-text line is empty".into()));
                            }
                        }
                    }
                    next.notebook.push(NotebookLine {
                        target: target.clone(),
                        marks: Vec::new(),
                    });
                }
                NotebookOp::RemoveLine { line } => {
                    if *line >= next.notebook.len() {
                        return Err(err(format!("no line {line}")));
                    }
                    next.notebook.remove(*line);
                }
                NotebookOp::AddMark { line, mark } => {
                    if let Some(r) = mark.directory_ref {
                        if r >= next.directory.len() {
                            return Err(err(format!("directory entry {r} does not exist")));
                        }
                    }
                    let l = next
                        .notebook
                        .get_mut(*line)
                        .ok_or_else(|| err(format!("no line {line}")))?;
                    l.marks.push(mark.clone());
                }
                NotebookOp::RemoveMark { line, mark } => {
                    let l = next
                        .notebook
                        .get_mut(*line)
                        .ok_or_else(|| err(format!("no line {line}")))?;
                    if *mark >= l.marks.len() {
                        return Err(err(format!("line {line} has no mark {mark}")));
                    }
                    l.marks.remove(*mark);
                }
            }
        }
        Ok(next)
    }

    pub fn check_submission(&self, submission: &DiagnosisSubmission) -> Result<(), EngineError> {
        let bad = |reason: String| EngineError::MalformedSubmission { reason };
        for (slot_id, answer) in &submission.0 {
            let slot = self
                .case
                .diagnosis
                .slot(slot_id)
                .ok_or_else(|| bad(format!("unknown slot `{slot_id}`")))?;
            if slot.mode == SlotMode::Single && answer.chosen.len() > 1 {
                return Err(bad(format!("slot `{slot_id}` accepts a single solution")));
            }
            if let Some(unknown) = answer.chosen.iter().find(|c| !slot.has_option(c)) {
                return Err(bad(format!("slot `{slot_id}` has no solution `{unknown}`")));
            }
            if !answer.free_text.is_empty() && !slot.allow_free_text {
                return Err(bad(format!("slot `{slot_id}` does not accept free text")));
            }
            if answer.free_text.iter().any(|t| t.trim().is_empty()) {
                return Err(bad(format!("empty free-text answer in slot `{slot_id}`")));
            }
        }
        Ok(())
    }

    pub fn submit_diagnosis(
        &self,
        state: &GameState,
        submission: &DiagnosisSubmission,
        at: Timestamp,
    ) -> Result<(GameState, EvaluationReport), EngineError> {
        Self::open(state)?;
        self.check_submission(submission)?;
        let report = evaluate(&self.case, state, submission, at);
        let mut next = state.clone();
        next.phase = Phase::Diagnosed;
        next.report = Some(report.clone());
        Ok((next, report))
    }
}

/// Applies effects in order; card changes are last-write-wins.
fn apply_effects(state: &mut GameState, effects: &EffectSet) {
    for effect in effects.iter() {
        match effect {
            Effect::Card { card, change } => {
                let to = match change {
                    CardChange::Show | CardChange::Enable => CardState::Visible,
                    CardChange::Hide => CardState::Invisible,
                    CardChange::Disable => CardState::Disabled,
                };
                if let Some(s) = state.card_states.get_mut(card) {
                    *s = to;
                }
            }
            Effect::Delta { item, amount } => {
                if let Some(v) = state.item_values.get_mut(item) {
                    *v += amount;
                }
            }
        }
    }
}
