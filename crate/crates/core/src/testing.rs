//! Small hand-built cases shared by unit and integration tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::NaiveDate;

use crate::case::*;

/// Directory holding the shipped fixture workbooks and traces.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn meta(name: &str) -> CaseMeta {
    CaseMeta {
        name: name.to_string(),
        created: NaiveDate::from_ymd_opt(2024, 1, 15).unwrap(),
        author: "Test Author".into(),
        difficulty: 2,
        field: "testing".into(),
        description: String::new(),
        suggestions: String::new(),
    }
}

pub fn card(id: &str, state: CardState, usefulness: Usefulness) -> ActionCard {
    ActionCard {
        id: id.to_string(),
        name: format!("Card {id}"),
        category: None,
        initial_state: state,
        content_text: format!("Result of {id}"),
        media: Vec::new(),
        question: None,
        usefulness,
        prerequisites: BTreeSet::new(),
        score_deltas: BTreeMap::new(),
        trigger: None,
    }
}

pub fn question(card: &str, n: usize, correct: &[usize]) -> AnalysisQuestion {
    AnalysisQuestion {
        prompt: format!("What does {card} show?"),
        choices: (1..=n)
            .map(|i| Choice {
                id: format!("{card}_{i}"),
                text: format!("Option {i}"),
            })
            .collect(),
        correct: correct.iter().map(|i| format!("{card}_{i}")).collect(),
        explanation: Some("Because.".into()),
        choice_deltas: BTreeMap::new(),
    }
}

pub fn slot(id: &str, mode: SlotMode, options: &[&str], correct: &[&str]) -> DiagnosisSlot {
    DiagnosisSlot {
        id: id.to_string(),
        label: format!("Slot {id}"),
        mode,
        options: options
            .iter()
            .map(|o| Solution {
                id: o.to_string(),
                text: format!("Solution {o}"),
            })
            .collect(),
        correct: correct.iter().map(|s| s.to_string()).collect(),
        allow_free_text: false,
    }
}

pub fn item(id: &str, unit: Unit, initial: f64) -> ScoringItem {
    ScoringItem {
        id: id.to_string(),
        display_name: id.to_uppercase(),
        direction: if unit == Unit::Points {
            Direction::HigherBetter
        } else {
            Direction::LowerBetter
        },
        initial,
        unit,
    }
}

/// One visible card, one single-choice slot, one scoring item.
pub fn minimal_case() -> CaseDefinition {
    CaseDefinition {
        id: "minimal".into(),
        meta: meta("Minimal"),
        labels: LabelSet::new(),
        problem: ProblemStatement {
            text: "Something is wrong.".into(),
            media: Vec::new(),
        },
        actions: vec![card("look", CardState::Visible, Usefulness::Required)],
        diagnosis: DiagnosisForm {
            slots: vec![slot("answer", SlotMode::Single, &["yes", "no"], &["yes"])],
        },
        scoring: ScoringSpec {
            items: vec![item("accuracy", Unit::Points, 0.0)],
        },
        penalties: PenaltyConfig::default(),
        help: vec!["Look closer.".into()],
    }
}

/// A five-card case exercising visibility, questions, triggers and
/// prerequisites:
///
/// * `stabilize` visible, required
/// * `ecg` visible, required, needs `stabilize`, question (3 choices, #2
///   correct), trigger enables `cardio` on a correct answer
/// * `xray` visible, optional, adds 20 to `cost`, trigger shows `troponin`
/// * `troponin` invisible, optional
/// * `cardio` disabled, required
/// * `scan` visible, useless
pub fn demo_case() -> CaseDefinition {
    let mut stabilize = card("stabilize", CardState::Visible, Usefulness::Required);
    stabilize.score_deltas.insert("accuracy".into(), 5.0);

    let mut ecg = card("ecg", CardState::Visible, Usefulness::Required);
    ecg.prerequisites.insert("stabilize".into());
    let mut q = question("ecg", 3, &[2]);
    q.choice_deltas.insert(
        "ecg_3".into(),
        BTreeMap::from([("accuracy".to_string(), -5.0)]),
    );
    ecg.question = Some(q);
    ecg.trigger = Some("on_correct { enable(cardio) }; on_wrong { add(accuracy, -2) }".into());

    let mut xray = card("xray", CardState::Visible, Usefulness::Optional);
    xray.score_deltas.insert("cost".into(), 20.0);
    xray.trigger = Some("show(troponin)".into());

    let troponin = card("troponin", CardState::Invisible, Usefulness::Optional);
    let cardio = card("cardio", CardState::Disabled, Usefulness::Required);
    let scan = card("scan", CardState::Visible, Usefulness::Useless);

    let mut dx = slot(
        "pathology",
        SlotMode::Single,
        &["mi", "pe", "gerd"],
        &["mi"],
    );
    dx.allow_free_text = true;
    CaseDefinition {
        id: "demo".into(),
        meta: meta("Demo chest pain"),
        labels: LabelSet::from_iter([(LabelKey::Problem, "Initial state".to_string())]),
        problem: ProblemStatement {
            text: "A 58-year-old man with chest pain.".into(),
            media: Vec::new(),
        },
        actions: vec![stabilize, ecg, xray, troponin, cardio, scan],
        diagnosis: DiagnosisForm {
            slots: vec![
                dx,
                slot(
                    "ward",
                    SlotMode::Single,
                    &["cardiology", "surgery"],
                    &["cardiology"],
                ),
                slot(
                    "treatment",
                    SlotMode::Multi,
                    &["aspirin", "heparin", "antacid"],
                    &["aspirin", "heparin"],
                ),
            ],
        },
        scoring: ScoringSpec {
            items: vec![
                item("accuracy", Unit::Points, 10.0),
                item("cost", Unit::Currency, 0.0),
                item("time", Unit::Seconds, 0.0),
            ],
        },
        penalties: PenaltyConfig::default(),
        help: vec![
            "Check the heart.".into(),
            "Think about the coronaries.".into(),
        ],
    }
}
