use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::case::{CardState, MediaRef};

/// Milliseconds on the injected clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_seconds(seconds: f64) -> Self {
        Timestamp((seconds * 1000.0).round().max(0.0) as u64)
    }

    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        self.0.saturating_sub(earlier.0) as f64 / 1000.0
    }

    pub fn plus_millis(self, ms: u64) -> Self {
        Timestamp(self.0.saturating_add(ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Investigating,
    Diagnosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    Immediate,
    #[default]
    End,
}

/// When correctness and score impact are revealed to the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub answers: Timing,
    pub scores: Timing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformedAction {
    pub card_id: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub card_id: String,
    pub timestamp: Timestamp,
    pub content_text: String,
    pub media: Vec<MediaRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NotebookTarget {
    Solution { id: String },
    FreeText { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkSign {
    #[serde(rename = "+")]
    Strengthen,
    #[serde(rename = "-")]
    Weaken,
}

impl fmt::Display for MarkSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarkSign::Strengthen => "+",
            MarkSign::Weaken => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookMark {
    pub sign: MarkSign,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory_ref: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookLine {
    pub target: NotebookTarget,
    pub marks: Vec<NotebookMark>,
}

/// One edit to the notebook. Lines and marks are addressed by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NotebookOp {
    AddLine { target: NotebookTarget },
    RemoveLine { line: usize },
    AddMark { line: usize, mark: NotebookMark },
    RemoveMark { line: usize, mark: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAnswer {
    #[serde(default)]
    pub chosen: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free_text: Vec<String>,
}

/// Final answers, keyed by slot id. Slots left out count as empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiagnosisSubmission(pub BTreeMap<String, SlotAnswer>);

impl DiagnosisSubmission {
    pub fn choose(mut self, slot: &str, ids: &[&str]) -> Self {
        let entry = self.0.entry(slot.to_string()).or_default();
        entry.chosen.extend(ids.iter().map(|s| s.to_string()));
        self
    }

    pub fn free_text(mut self, slot: &str, text: &str) -> Self {
        self.0
            .entry(slot.to_string())
            .or_default()
            .free_text
            .push(text.to_string());
        self
    }

    pub fn has_free_text(&self) -> bool {
        self.0.values().any(|a| !a.free_text.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotResult {
    pub slot_id: String,
    pub chosen: BTreeSet<String>,
    pub correct: BTreeSet<String>,
    pub hits: BTreeSet<String>,
    pub misses: BTreeSet<String>,
    pub false_positives: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub card: String,
    pub prerequisite: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeAnswer {
    pub slot_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub case_id: String,
    pub slots: Vec<SlotResult>,
    pub missed_required: Vec<String>,
    pub useless_performed: Vec<String>,
    pub order_violations: Vec<OrderViolation>,
    pub wrong_answers: Vec<String>,
    pub free_answers_pending: Vec<FreeAnswer>,
    pub diagnosis_errors: usize,
    pub hints_used: u32,
    pub item_finals: BTreeMap<String, f64>,
    pub elapsed_seconds: f64,
    pub grade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub case_id: String,
    pub card_states: BTreeMap<String, CardState>,
    pub performed: Vec<PerformedAction>,
    pub answers: BTreeMap<String, BTreeSet<String>>,
    pub directory: Vec<DirectoryEntry>,
    pub notebook: Vec<NotebookLine>,
    pub item_values: BTreeMap<String, f64>,
    pub phase: Phase,
    pub started_at: Timestamp,
    pub hints_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
}

impl GameState {
    pub fn has_performed(&self, card: &str) -> bool {
        self.performed.iter().any(|p| p.card_id == card)
    }

    pub fn position_of(&self, card: &str) -> Option<usize> {
        self.performed.iter().position(|p| p.card_id == card)
    }
}
