//! Random cases and random legal plays for oracle comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use casegen_core::case::*;
use casegen_core::engine::{DiagnosisSubmission, Engine, FeedbackPolicy, GameState, Timestamp};
use casegen_core::testing::{card, item, meta, question, slot};
use casegen_core::trigger::{Command, Statement, TriggerProgram};
use rand::seq::SliceRandom;
use rand::Rng;

/// One accepted play step. Only steps the engine accepted are kept, so the
/// list is always a legal play of its case.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Perform(String),
    Answer(String, Vec<String>),
    Hint,
    Tick(u64),
}

#[derive(Debug, Clone)]
pub struct Play {
    pub start: Timestamp,
    pub events: Vec<Event>,
    pub submission: DiagnosisSubmission,
    pub end: Timestamp,
}

/// Deltas are whole numbers so float sums are exact whatever the order.
fn delta(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-10i32..=10) as f64
}

fn random_state(rng: &mut impl Rng) -> CardState {
    match rng.gen_range(0..6) {
        0 => CardState::Invisible,
        1 => CardState::Disabled,
        _ => CardState::Visible,
    }
}

fn random_command(rng: &mut impl Rng, cards: &[String], items: &[String]) -> String {
    let target = cards.choose(rng).unwrap();
    match rng.gen_range(0..5) {
        0 => format!("show({target})"),
        1 => format!("hide({target})"),
        2 => format!("enable({target})"),
        3 => format!("disable({target})"),
        _ => format!("add({}, {})", items.choose(rng).unwrap(), delta(rng)),
    }
}

fn random_trigger(
    rng: &mut impl Rng,
    cards: &[String],
    items: &[String],
    conditional: bool,
) -> String {
    let n = rng.gen_range(1..=3);
    let mut parts = Vec::new();
    for _ in 0..n {
        if conditional && rng.gen_bool(0.5) {
            let kw = if rng.gen_bool(0.5) {
                "on_correct"
            } else {
                "on_wrong"
            };
            let body: Vec<String> = (0..rng.gen_range(1..=2))
                .map(|_| random_command(rng, cards, items))
                .collect();
            parts.push(format!("{kw} {{ {} }}", body.join("; ")));
        } else {
            parts.push(random_command(rng, cards, items));
        }
    }
    parts.join("; ")
}

/// A valid case with at most 6 cards and 3 slots.
pub fn random_case(rng: &mut impl Rng) -> CaseDefinition {
    let n_cards = rng.gen_range(1..=6);
    let ids: Vec<String> = (0..n_cards).map(|i| format!("k{i}")).collect();
    let mut items = vec![item("accuracy", Unit::Points, rng.gen_range(0..20) as f64)];
    if rng.gen_bool(0.5) {
        items.push(item("cost", Unit::Currency, 0.0));
    }
    if rng.gen_bool(0.5) {
        items.push(item("time", Unit::Seconds, 0.0));
    }
    let delta_items: Vec<String> = items
        .iter()
        .filter(|i| i.unit != Unit::Seconds)
        .map(|i| i.id.clone())
        .collect();

    let mut actions = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let usefulness = match rng.gen_range(0..3) {
            0 => Usefulness::Required,
            1 => Usefulness::Optional,
            _ => Usefulness::Useless,
        };
        let mut c = card(id, random_state(rng), usefulness);
        // prerequisites only point backwards, so there is never a cycle
        for earlier in &ids[..i] {
            if rng.gen_bool(0.3) {
                c.prerequisites.insert(earlier.clone());
            }
        }
        for it in &delta_items {
            if rng.gen_bool(0.4) {
                c.score_deltas.insert(it.clone(), delta(rng));
            }
        }
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(2..=4);
            let mut correct: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.4)).collect();
            if correct.is_empty() {
                correct.push(rng.gen_range(1..=n));
            }
            let mut q = question(id, n, &correct);
            for k in 1..=n {
                if rng.gen_bool(0.3) {
                    let it = delta_items.choose(rng).unwrap().clone();
                    q.choice_deltas
                        .insert(format!("{id}_{k}"), BTreeMap::from([(it, delta(rng))]));
                }
            }
            c.question = Some(q);
        }
        if rng.gen_bool(0.5) {
            c.trigger = Some(random_trigger(
                rng,
                &ids,
                &delta_items,
                c.question.is_some(),
            ));
        }
        actions.push(c);
    }

    let n_slots = rng.gen_range(1..=3);
    let slots = (0..n_slots)
        .map(|s| {
            let n = rng.gen_range(1..=4);
            let options: Vec<String> = (0..n).map(|o| format!("s{s}o{o}")).collect();
            let option_refs: Vec<&str> = options.iter().map(String::as_str).collect();
            let mode = if rng.gen_bool(0.5) {
                SlotMode::Single
            } else {
                SlotMode::Multi
            };
            let correct: Vec<&str> = match mode {
                SlotMode::Single => vec![*option_refs.choose(rng).unwrap()],
                SlotMode::Multi => {
                    let mut c: Vec<&str> = option_refs
                        .iter()
                        .copied()
                        .filter(|_| rng.gen_bool(0.5))
                        .collect();
                    if c.is_empty() {
                        c.push(option_refs[0]);
                    }
                    c
                }
            };
            let mut sl = slot(&format!("slot{s}"), mode, &option_refs, &correct);
            sl.allow_free_text = rng.gen_bool(0.3);
            sl
        })
        .collect();

    let mut penalties = PenaltyConfig::default();
    for key in PenaltyConfig::KEYS
        .iter()
        .filter(|k| !k.starts_with("grade"))
    {
        *penalties.get_mut(key).unwrap() = rng.gen_range(0..=15) as f64;
    }

    let hints = (0..rng.gen_range(0..=3))
        .map(|h| format!("Hint {h}"))
        .collect();
    let case = CaseDefinition {
        id: "random".into(),
        meta: meta("Random case"),
        labels: LabelSet::new(),
        problem: ProblemStatement {
            text: "Generated.".into(),
            media: Vec::new(),
        },
        actions,
        diagnosis: DiagnosisForm { slots },
        scoring: ScoringSpec { items },
        penalties,
        help: hints,
    };
    debug_assert!(case.validate().is_empty(), "{:?}", case.validate());
    case
}

pub fn random_submission(rng: &mut impl Rng, case: &CaseDefinition) -> DiagnosisSubmission {
    let mut sub = DiagnosisSubmission::default();
    for s in &case.diagnosis.slots {
        let mut picked: BTreeSet<String> = BTreeSet::new();
        match s.mode {
            SlotMode::Single => {
                if rng.gen_bool(0.8) {
                    picked.insert(s.options.choose(rng).unwrap().id.clone());
                }
            }
            SlotMode::Multi => {
                for o in &s.options {
                    if rng.gen_bool(0.5) {
                        picked.insert(o.id.clone());
                    }
                }
            }
        }
        if picked.is_empty() && rng.gen_bool(0.5) {
            continue;
        }
        let refs: Vec<&str> = picked.iter().map(String::as_str).collect();
        sub = sub.choose(&s.id, &refs);
        if s.allow_free_text && rng.gen_bool(0.5) {
            sub = sub.free_text(&s.id, "my own idea");
        }
    }
    sub
}

/// Plays random moves against `engine`, keeping the ones it accepts.
/// Returns the play and the final pre-diagnosis state.
pub fn random_play(rng: &mut impl Rng, engine: &Engine) -> (Play, GameState) {
    let case = engine.case();
    let start = Timestamp(rng.gen_range(0..1_000_000));
    let mut now = start;
    let mut state = engine.start_session(now);
    let mut events = Vec::new();
    for _ in 0..rng.gen_range(0..25) {
        let c = &case.actions[rng.gen_range(0..case.actions.len())];
        match rng.gen_range(0..10) {
            0..=4 => {
                if let Ok((next, _)) = engine.perform_action(&state, &c.id, now) {
                    state = next;
                    events.push(Event::Perform(c.id.clone()));
                }
            }
            5..=6 => {
                let choices: Vec<String> = match &c.question {
                    Some(q) => q
                        .choices
                        .iter()
                        .filter(|_| rng.gen_bool(0.5))
                        .map(|ch| ch.id.clone())
                        .collect(),
                    None => vec![],
                };
                if let Ok((next, _)) = engine.answer_question(&state, &c.id, &choices) {
                    state = next;
                    events.push(Event::Answer(c.id.clone(), choices));
                }
            }
            7 => {
                if let Ok((next, _)) = engine.request_hint(&state) {
                    state = next;
                    events.push(Event::Hint);
                }
            }
            _ => {
                let ms = rng.gen_range(0..120_000);
                now = now.plus_millis(ms);
                events.push(Event::Tick(ms));
            }
        }
    }
    let submission = random_submission(rng, case);
    let end = now.plus_millis(rng.gen_range(0..60_000));
    (
        Play {
            start,
            events,
            submission,
            end,
        },
        state,
    )
}

pub fn engine_for(case: CaseDefinition) -> Engine {
    Engine::new(Arc::new(case), FeedbackPolicy::default()).unwrap()
}

fn random_ident(rng: &mut impl Rng) -> String {
    const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyz_";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    let mut s = String::new();
    s.push(*FIRST.choose(rng).unwrap() as char);
    for _ in 0..rng.gen_range(0..8) {
        s.push(*REST.choose(rng).unwrap() as char);
    }
    s
}

fn random_amount(rng: &mut impl Rng) -> f64 {
    let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    sign * match rng.gen_range(0..4) {
        0 => rng.gen_range(0..1000) as f64,
        1 => rng.gen::<f64>() * 100.0,
        2 => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-12..40)),
        _ => 0.0,
    }
}

/// A random well-formed program, nesting at most `depth` levels.
pub fn random_program(rng: &mut impl Rng, depth: usize) -> TriggerProgram {
    let n = rng.gen_range(1..=4);
    let statements = (0..n)
        .map(|_| {
            if depth > 0 && rng.gen_bool(0.25) {
                let body = random_program(rng, depth - 1);
                if rng.gen_bool(0.5) {
                    Statement::OnCorrect(body)
                } else {
                    Statement::OnWrong(body)
                }
            } else {
                let id = random_ident(rng);
                Statement::Command(match rng.gen_range(0..5) {
                    0 => Command::Show(id),
                    1 => Command::Hide(id),
                    2 => Command::Enable(id),
                    3 => Command::Disable(id),
                    _ => Command::Add {
                        item: id,
                        amount: random_amount(rng),
                    },
                })
            }
        })
        .collect();
    TriggerProgram { statements }
}

/// Mostly trigger-shaped noise: DSL tokens, identifiers, numbers, and
/// arbitrary characters glued together.
pub fn random_source(rng: &mut impl Rng) -> String {
    const TOKENS: &[&str] = &[
        "show",
        "hide",
        "enable",
        "disable",
        "add",
        "on_correct",
        "on_wrong",
        "(",
        ")",
        "{",
        "}",
        ";",
        ",",
        " ",
        "\n",
        "-",
        "+",
        ".",
        "1",
        "2.5",
        "-3",
        "99999999999999999999",
        "1e5",
        "é",
        "\"",
        "#",
        "\t",
        "0.",
        ".5",
    ];
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..30) {
        match rng.gen_range(0..10) {
            0..=5 => s.push_str(TOKENS.choose(rng).unwrap()),
            6..=7 => s.push_str(&random_ident(rng)),
            8 => s.push(rng.gen::<char>()),
            _ => s.push_str(&"{".repeat(rng.gen_range(1..50))),
        }
    }
    s
}
