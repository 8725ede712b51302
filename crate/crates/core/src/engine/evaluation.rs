use std::collections::BTreeSet;

use crate::case::{CaseDefinition, PenaltyConfig, Usefulness};

use super::state::*;

/// Grade from fault counts: `grade_max` minus the weighted faults, clamped
/// to `[grade_min, grade_max]`.
pub fn grade_from_counts(
    penalties: &PenaltyConfig,
    missed_required: usize,
    useless_performed: usize,
    order_violations: usize,
    wrong_answers: usize,
    diagnosis_errors: usize,
    hints_used: u32,
) -> f64 {
    let raw = penalties.grade_max
        - missed_required as f64 * penalties.missed_required
        - useless_performed as f64 * penalties.useless_performed
        - order_violations as f64 * penalties.order_violation
        - wrong_answers as f64 * penalties.wrong_analysis_answer
        - diagnosis_errors as f64 * penalties.diagnosis_error
        - hints_used as f64 * penalties.help_used;
    raw.clamp(penalties.grade_min, penalties.grade_max)
}

impl EvaluationReport {
    /// Recomputes the grade from this report's own fault fields.
    pub fn recompute_grade(&self, penalties: &PenaltyConfig) -> f64 {
        grade_from_counts(
            penalties,
            self.missed_required.len(),
            self.useless_performed.len(),
            self.order_violations.len(),
            self.wrong_answers.len(),
            self.diagnosis_errors,
            self.hints_used,
        )
    }
}

/// End-of-case evaluation of a play. `submission` must already be checked
/// against the case's diagnosis form.
pub fn evaluate(
    case: &CaseDefinition,
    state: &GameState,
    submission: &DiagnosisSubmission,
    at: Timestamp,
) -> EvaluationReport {
    let empty = SlotAnswer::default();
    let mut slots = Vec::with_capacity(case.diagnosis.slots.len());
    let mut free_answers_pending = Vec::new();
    for slot in &case.diagnosis.slots {
        let answer = submission.0.get(&slot.id).unwrap_or(&empty);
        let chosen = &answer.chosen;
        slots.push(SlotResult {
            slot_id: slot.id.clone(),
            chosen: chosen.clone(),
            correct: slot.correct.clone(),
            hits: chosen.intersection(&slot.correct).cloned().collect(),
            misses: slot.correct.difference(chosen).cloned().collect(),
            false_positives: chosen.difference(&slot.correct).cloned().collect(),
        });
        free_answers_pending.extend(answer.free_text.iter().map(|text| FreeAnswer {
            slot_id: slot.id.clone(),
            text: text.clone(),
        }));
    }
    let diagnosis_errors = slots
        .iter()
        .map(|s| s.misses.len() + s.false_positives.len())
        .sum();

    let performed: BTreeSet<&str> = state.performed.iter().map(|p| p.card_id.as_str()).collect();
    let missed_required = case
        .actions
        .iter()
        .filter(|c| c.usefulness == Usefulness::Required && !performed.contains(c.id.as_str()))
        .map(|c| c.id.clone())
        .collect();

    let mut useless_performed = Vec::new();
    let mut order_violations = Vec::new();
    let mut wrong_answers = Vec::new();
    for (position, entry) in state.performed.iter().enumerate() {
        let Some(card) = case.card(&entry.card_id) else {
            continue;
        };
        if card.usefulness == Usefulness::Useless {
            useless_performed.push(card.id.clone());
        }
        for prereq in &card.prerequisites {
            let satisfied = state.performed[..position]
                .iter()
                .any(|p| &p.card_id == prereq);
            if !satisfied {
                order_violations.push(OrderViolation {
                    card: card.id.clone(),
                    prerequisite: prereq.clone(),
                });
            }
        }
        if let Some(q) = &card.question {
            if state.answers.get(&card.id) != Some(&q.correct) {
                wrong_answers.push(card.id.clone());
            }
        }
    }

    let elapsed_seconds = at.seconds_since(state.started_at);
    let mut item_finals = state.item_values.clone();
    if let Some(item) = case.scoring.time_item() {
        item_finals.insert(item.id.clone(), elapsed_seconds);
    }

    let mut report = EvaluationReport {
        case_id: case.id.clone(),
        slots,
        missed_required,
        useless_performed,
        order_violations,
        wrong_answers,
        free_answers_pending,
        diagnosis_errors,
        hints_used: state.hints_used,
        item_finals,
        elapsed_seconds,
        grade: 0.0,
    };
    report.grade = report.recompute_grade(&case.penalties);
    report
}
