//! Independent reference implementations used to check the engine and the
//! trigger evaluator. Written from the rules, not from the engine code.

use std::collections::{BTreeMap, BTreeSet};

use casegen_core::case::{CaseDefinition, Unit, Usefulness};
use casegen_core::engine::{EvaluationReport, FreeAnswer, OrderViolation, SlotResult};
use casegen_core::trigger::{
    AnswerOutcome, CardChange, Command, Effect, Statement, TriggerProgram,
};

use super::gen::{Event, Play};

/// Tree walk: unconditional commands always fire, a conditional block
/// fires only for its own outcome, in source order.
pub fn naive_eval(program: &TriggerProgram, outcome: AnswerOutcome) -> Vec<Effect> {
    let mut out = Vec::new();
    for stmt in &program.statements {
        match stmt {
            Statement::Command(cmd) => out.push(effect_of(cmd)),
            Statement::OnCorrect(body) => {
                if outcome == AnswerOutcome::Correct {
                    out.extend(naive_eval(body, outcome));
                }
            }
            Statement::OnWrong(body) => {
                if outcome == AnswerOutcome::Wrong {
                    out.extend(naive_eval(body, outcome));
                }
            }
        }
    }
    out
}

fn effect_of(cmd: &Command) -> Effect {
    let card = |c: &String, change| Effect::Card {
        card: c.clone(),
        change,
    };
    match cmd {
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

fn add_all(values: &mut BTreeMap<String, f64>, deltas: &BTreeMap<String, f64>) {
    for (k, v) in deltas {
        *values.get_mut(k).expect("declared item") += v;
    }
}

fn add_trigger_deltas(
    values: &mut BTreeMap<String, f64>,
    case: &CaseDefinition,
    card: &str,
    outcome: AnswerOutcome,
) {
    let Some(src) = &case.card(card).unwrap().trigger else {
        return;
    };
    let program = casegen_core::parse_trigger(src).unwrap();
    for e in naive_eval(&program, outcome) {
        if let Effect::Delta { item, amount } = e {
            *values.get_mut(&item).expect("declared item") += amount;
        }
    }
}

/// Evaluates a legal play from first principles.
pub fn brute_force_report(case: &CaseDefinition, play: &Play) -> EvaluationReport {
    let mut values: BTreeMap<String, f64> = case
        .scoring
        .items
        .iter()
        .map(|i| (i.id.clone(), i.initial))
        .collect();
    let mut order: Vec<String> = Vec::new();
    let mut answers: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut hints = 0u32;

    for event in &play.events {
        match event {
            Event::Perform(id) => {
                order.push(id.clone());
                let c = case.card(id).unwrap();
                if c.question.is_none() {
                    add_all(&mut values, &c.score_deltas);
                    add_trigger_deltas(&mut values, case, id, AnswerOutcome::NoQuestion);
                }
            }
            Event::Answer(id, chosen) => {
                let c = case.card(id).unwrap();
                let q = c.question.as_ref().unwrap();
                let chosen: BTreeSet<String> = chosen.iter().cloned().collect();
                add_all(&mut values, &c.score_deltas);
                for ch in &chosen {
                    if let Some(d) = q.choice_deltas.get(ch) {
                        add_all(&mut values, d);
                    }
                }
                let outcome = if chosen == q.correct {
                    AnswerOutcome::Correct
                } else {
                    AnswerOutcome::Wrong
                };
                add_trigger_deltas(&mut values, case, id, outcome);
                answers.insert(id.clone(), chosen);
            }
            Event::Hint => hints += 1,
            Event::Tick(_) => {}
        }
    }

    let mut slots = Vec::new();
    let mut free = Vec::new();
    let mut diagnosis_errors = 0;
    for s in &case.diagnosis.slots {
        let answer = play.submission.0.get(&s.id);
        let chosen: BTreeSet<String> = answer.map(|a| a.chosen.clone()).unwrap_or_default();
        let mut hits = BTreeSet::new();
        let mut misses = BTreeSet::new();
        let mut false_positives = BTreeSet::new();
        for o in &s.options {
            match (chosen.contains(&o.id), s.correct.contains(&o.id)) {
                (true, true) => {
                    hits.insert(o.id.clone());
                }
                (false, true) => {
                    misses.insert(o.id.clone());
                }
                (true, false) => {
                    false_positives.insert(o.id.clone());
                }
                (false, false) => {}
            }
        }
        diagnosis_errors += misses.len() + false_positives.len();
        for text in answer.map(|a| a.free_text.clone()).unwrap_or_default() {
            free.push(FreeAnswer {
                slot_id: s.id.clone(),
                text,
            });
        }
        slots.push(SlotResult {
            slot_id: s.id.clone(),
            chosen,
            correct: s.correct.clone(),
            hits,
            misses,
            false_positives,
        });
    }

    let missed_required: Vec<String> = case
        .actions
        .iter()
        .filter(|c| c.usefulness == Usefulness::Required && !order.contains(&c.id))
        .map(|c| c.id.clone())
        .collect();
    let mut useless = Vec::new();
    let mut violations = Vec::new();
    let mut wrong = Vec::new();
    for (i, id) in order.iter().enumerate() {
        let c = case.card(id).unwrap();
        if c.usefulness == Usefulness::Useless {
            useless.push(id.clone());
        }
        for p in &c.prerequisites {
            let before = order.iter().position(|o| o == p).is_some_and(|j| j < i);
            if !before {
                violations.push(OrderViolation {
                    card: id.clone(),
                    prerequisite: p.clone(),
                });
            }
        }
        if let Some(q) = &c.question {
            if answers.get(id) != Some(&q.correct) {
                wrong.push(id.clone());
            }
        }
    }

    let elapsed = (play.end.0 - play.start.0) as f64 / 1000.0;
    for it in &case.scoring.items {
        if it.unit == Unit::Seconds {
            values.insert(it.id.clone(), elapsed);
        }
    }

    let p = &case.penalties;
    let raw = p.grade_max
        - p.missed_required * missed_required.len() as f64
        - p.useless_performed * useless.len() as f64
        - p.order_violation * violations.len() as f64
        - p.wrong_analysis_answer * wrong.len() as f64
        - p.diagnosis_error * diagnosis_errors as f64
        - p.help_used * hints as f64;
    let grade = raw.max(p.grade_min).min(p.grade_max);

    EvaluationReport {
        case_id: case.id.clone(),
        slots,
        missed_required,
        useless_performed: useless,
        order_violations: violations,
        wrong_answers: wrong,
        free_answers_pending: free,
        diagnosis_errors,
        hints_used: hints,
        item_finals: values,
        elapsed_seconds: elapsed,
        grade,
    }
}
