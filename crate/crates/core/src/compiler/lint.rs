use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use crate::case::{CardState, CaseDefinition, Usefulness};

use super::{compile_workbook, Diagnostic, DiagnosticCode, Diagnostics};

/// Cards a learner can ever get to perform: breadth-first from the
/// initially visible cards along `show`/`enable` edges of their triggers
/// (either answer branch).
pub fn reachable_cards(case: &CaseDefinition) -> BTreeSet<String> {
    let triggers = case.parsed_triggers();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<&str> = case
        .actions
        .iter()
        .filter(|c| c.initial_state == CardState::Visible)
        .map(|c| c.id.as_str())
        .collect();
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id.to_string()) {
            continue;
        }
        let Some(program) = triggers.get(id) else {
            continue;
        };
        for cmd in program.commands() {
            use crate::trigger::Command::*;
            if let Show(target) | Enable(target) = cmd {
                if !seen.contains(target) {
                    queue.push_back(target);
                }
            }
        }
    }
    seen
}

/// Compile diagnostics plus advisory warnings. Always returns a sorted list.
pub fn lint_workbook(dir: &Path) -> Vec<Diagnostic> {
    let compilation = compile_workbook(dir);
    let Some(case) = &compilation.case else {
        return compilation.diagnostics;
    };
    let mut diags = Diagnostics(compilation.diagnostics.clone());
    let card_row = |id: &str| {
        compilation
            .source_map
            .card_rows
            .get(id)
            .copied()
            .unwrap_or(0)
    };

    let reachable = reachable_cards(case);
    for card in &case.actions {
        if reachable.contains(&card.id) {
            continue;
        }
        if card.usefulness == Usefulness::Required {
            diags.warning(
                "actions",
                card_row(&card.id),
                "usefulness",
                DiagnosticCode::RequiredUnreachable,
                format!(
                    "required card `{}` has no path to visibility, so it will always be missed",
                    card.id
                ),
            );
        } else {
            diags.warning(
                "actions",
                card_row(&card.id),
                "initial_state",
                DiagnosticCode::UnreachableCard,
                format!(
                    "unreachable card `{}`: it starts {} and no reachable trigger shows or enables it",
                    card.id,
                    card.initial_state.as_str()
                ),
            );
        }
    }

    for card in &case.actions {
        if let Some(q) = &card.question {
            if q.correct.len() == q.choices.len() {
                diags.warning(
                    "actions",
                    card_row(&card.id),
                    "correct",
                    DiagnosticCode::AllChoicesCorrect,
                    format!("every choice of the question on `{}` is correct", card.id),
                );
            }
        }
    }

    let mut used: HashMap<&str, bool> = case
        .scoring
        .items
        .iter()
        .map(|i| (i.id.as_str(), false))
        .collect();
    if let Some(time) = case.scoring.time_item() {
        used.insert(&time.id, true);
    }
    let triggers = case.parsed_triggers();
    for card in &case.actions {
        let question_items = card
            .question
            .iter()
            .flat_map(|q| q.choice_deltas.values())
            .flat_map(|d| d.keys());
        for item in card.score_deltas.keys().chain(question_items) {
            used.insert(item, true);
        }
        if let Some(program) = triggers.get(&card.id) {
            for item in program.item_refs() {
                if let Some(flag) = used.get_mut(item) {
                    *flag = true;
                }
            }
        }
    }
    for item in &case.scoring.items {
        if !used[item.id.as_str()] {
            diags.warning(
                "scoring",
                compilation
                    .source_map
                    .item_rows
                    .get(&item.id)
                    .copied()
                    .unwrap_or(0),
                "id",
                DiagnosticCode::UnusedScoringItem,
                format!("scoring item `{}` is never changed by any card", item.id),
            );
        }
    }
    diags.into_sorted()
}
