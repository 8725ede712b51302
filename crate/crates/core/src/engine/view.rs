use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::case::{
    AnalysisQuestion, CardState, LabelKey, ProblemStatement, SlotMode, Solution, Unit,
};

use super::state::*;
use super::Engine;

/// An analysis question as shown to the learner. Choices are identified by
/// their 1-based position; ids stay server-side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub prompt: String,
    pub choices: Vec<ChoiceView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceView {
    pub ordinal: usize,
    pub text: String,
}

impl From<&AnalysisQuestion> for QuestionView {
    fn from(q: &AnalysisQuestion) -> Self {
        QuestionView {
            prompt: q.prompt.clone(),
            choices: q
                .choices
                .iter()
                .enumerate()
                .map(|(i, c)| ChoiceView {
                    ordinal: i + 1,
                    text: c.text.clone(),
                })
                .collect(),
        }
    }
}

pub(super) fn ordinals(q: &AnalysisQuestion, ids: &BTreeSet<String>) -> Vec<usize> {
    q.choices
        .iter()
        .enumerate()
        .filter(|(_, c)| ids.contains(&c.id))
        .map(|(i, _)| i + 1)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerView {
    pub chosen: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_choices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// A card on the board. Invisible cards are never listed; disabled ones
/// show only their name and category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardView {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub state: CardState,
    pub performed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_question: Option<QuestionView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotView {
    pub id: String,
    pub label: String,
    pub mode: SlotMode,
    pub options: Vec<Solution>,
    pub allow_free_text: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemValueView {
    pub id: String,
    pub display_name: String,
    pub unit: Unit,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub case_id: String,
    pub phase: Phase,
    pub labels: BTreeMap<LabelKey, String>,
    pub problem: ProblemStatement,
    pub cards: Vec<CardView>,
    pub directory: Vec<DirectoryEntry>,
    pub notebook: Vec<NotebookLine>,
    pub hints_used: u32,
    pub hints_remaining: usize,
    pub diagnosis: Vec<SlotView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_values: Option<Vec<ItemValueView>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
}

impl Engine {
    /// The learner-facing projection of `state`, filtered by the policy.
    pub fn render_view(&self, state: &GameState) -> View {
        let case = self.case();
        let diagnosed = state.phase == Phase::Diagnosed;
        let reveal_answers = diagnosed || self.policy().answers == Timing::Immediate;
        let reveal_scores = diagnosed || self.policy().scores == Timing::Immediate;

        let cards = case
            .actions
            .iter()
            .filter_map(|card| {
                let card_state = state.card_states[&card.id];
                if card_state == CardState::Invisible {
                    return None;
                }
                let performed = state.has_performed(&card.id);
                let answered = state.answers.get(&card.id);
                let mut view = CardView {
                    id: card.id.clone(),
                    name: card.name.clone(),
                    category: card.category.clone(),
                    state: card_state,
                    performed,
                    pending_question: None,
                    answer: None,
                };
                if let Some(q) = &card.question {
                    match answered {
                        None if performed && !diagnosed => {
                            view.pending_question = Some(QuestionView::from(q))
                        }
                        None => {}
                        Some(chosen) => {
                            let mut answer = AnswerView {
                                chosen: ordinals(q, chosen),
                                correct: None,
                                correct_choices: None,
                                explanation: None,
                            };
                            if reveal_answers {
                                answer.correct = Some(chosen == &q.correct);
                                answer.correct_choices = Some(ordinals(q, &q.correct));
                                answer.explanation = q.explanation.clone();
                            }
                            view.answer = Some(answer);
                        }
                    }
                }
                Some(view)
            })
            .collect();

        let item_values = reveal_scores.then(|| {
            let values = state
                .report
                .as_ref()
                .map(|r| &r.item_finals)
                .unwrap_or(&state.item_values);
            case.scoring
                .items
                .iter()
                .map(|i| ItemValueView {
                    id: i.id.clone(),
                    display_name: i.display_name.clone(),
                    unit: i.unit,
                    value: values.get(&i.id).copied().unwrap_or(i.initial),
                })
                .collect()
        });

        View {
            case_id: case.id.clone(),
            phase: state.phase,
            labels: case.labels.resolved(),
            problem: case.problem.clone(),
            cards,
            directory: state.directory.clone(),
            notebook: state.notebook.clone(),
            hints_used: state.hints_used,
            hints_remaining: case.help.len().saturating_sub(state.hints_used as usize),
            diagnosis: case
                .diagnosis
                .slots
                .iter()
                .map(|s| SlotView {
                    id: s.id.clone(),
                    label: s.label.clone(),
                    mode: s.mode,
                    options: s.options.clone(),
                    allow_free_text: s.allow_free_text,
                })
                .collect(),
            item_values,
            report: state.report.clone(),
        }
    }
}
