use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use proptest::prelude::*;
use tempfile::TempDir;

use super::lint::reachable_cards;
use super::scaffold::scaffold_workbook_dated;
use super::*;
use crate::case::{CardState, CaseDefinition, LabelKey, Usefulness};
use crate::testing::{card, fixtures_dir, minimal_case};
use crate::trigger::{Command, Statement, TriggerProgram};

const FIXTURES: [&str; 4] = [
    "medical_emergency",
    "general_practitioner",
    "law",
    "mechanics",
];

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn fixture_copy(name: &str) -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join(name);
    copy_dir(&fixtures_dir().join("workbooks").join(name), &dir);
    (tmp, dir)
}

/// Overwrites one cell; `row` counts the header as 1.
fn set_cell(dir: &Path, sheet: &str, row: usize, column: &str, value: &str) {
    let path = dir.join(format!("{sheet}.csv"));
    let mut rows: Vec<Vec<String>> = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(&path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    let col = rows[0].iter().position(|h| h == column).unwrap();
    rows[row - 1][col] = value.to_string();
    let mut w = csv::Writer::from_path(&path).unwrap();
    for r in rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
}

fn codes_at(diags: &[Diagnostic]) -> Vec<(String, usize, String, DiagnosticCode)> {
    diags
        .iter()
        .map(|d| (d.sheet.clone(), d.row, d.column.clone(), d.code))
        .collect()
}

#[test]
fn fixtures_compile_and_lint_clean() {
    for name in FIXTURES {
        let dir = fixtures_dir().join("workbooks").join(name);
        let c = compile_workbook(&dir);
        assert!(c.diagnostics.is_empty(), "{name}: {:?}", c.diagnostics);
        assert!(c.case.is_some());
        assert!(lint_workbook(&dir).is_empty(), "{name}");
    }
}

#[test]
fn medical_fixture_labels() {
    let case = compile_workbook(&fixtures_dir().join("workbooks/medical_emergency"))
        .case
        .unwrap();
    assert_eq!(case.id, "chest-pain-at-admission");
    assert_eq!(case.labels.get(LabelKey::Help), "Call a senior");
    assert_eq!(case.labels.get(LabelKey::Diagnosis), "Diagnosis");
    let ecg = case.card("ecg").unwrap();
    assert_eq!(ecg.media[0].path, "media/ecg.png");
    let q = ecg.question.as_ref().unwrap();
    assert_eq!(q.correct.iter().collect::<Vec<_>>(), vec!["ecg_1"]);
    assert_eq!(q.choice_deltas["ecg_2"]["accuracy"], -5.0);
}

#[test]
fn compilation_is_deterministic() {
    let dir = fixtures_dir().join("workbooks/law");
    let a = crate::serialize_case(&compile_workbook(&dir).case.unwrap());
    let b = crate::serialize_case(&compile_workbook(&dir).case.unwrap());
    assert_eq!(a, b);
}

#[test]
fn misspelled_state_is_located() {
    let (_tmp, dir) = fixture_copy("medical_emergency");
    set_cell(&dir, "actions", 3, "initial_state", "hiden");
    let c = compile_workbook(&dir);
    assert!(c.case.is_none());
    assert_eq!(
        codes_at(&c.diagnostics),
        vec![(
            "actions".into(),
            3,
            "initial_state".into(),
            DiagnosticCode::BadEnum
        )]
    );
    let text = c.diagnostics[0].to_string();
    assert!(
        text.starts_with("error: actions.csv:3:initial_state:"),
        "{text}"
    );
    assert!(text.contains("hiden"));
}

#[test]
fn missing_required_sheet() {
    let (_tmp, dir) = fixture_copy("law");
    fs::remove_file(dir.join("solutions.csv")).unwrap();
    let c = compile_workbook(&dir);
    assert_eq!(
        c.errors().next().unwrap().code,
        DiagnosticCode::MissingSheet
    );
    assert_eq!(c.errors().next().unwrap().sheet, "solutions");
}

#[test]
fn unknown_column_warns_only() {
    let (_tmp, dir) = fixture_copy("law");
    let path = dir.join("help.csv");
    fs::write(&path, "hint,comment\nLook at the dates.,internal\n").unwrap();
    let c = compile_workbook(&dir);
    assert!(c.case.is_some());
    assert_eq!(
        codes_at(&c.diagnostics),
        vec![(
            "help".into(),
            1,
            "comment".into(),
            DiagnosticCode::UnknownColumn
        )]
    );
}

#[test]
fn unreachable_card_fixture_warns() {
    let dir = fixtures_dir().join("workbooks_lint/unreachable_card");
    assert!(!compile_workbook(&dir).has_errors());
    let diags = lint_workbook(&dir);
    assert_eq!(
        codes_at(&diags),
        vec![(
            "actions".into(),
            6,
            "initial_state".into(),
            DiagnosticCode::UnreachableCard
        )]
    );
    assert!(diags.iter().all(|d| !d.is_error()));
}

#[test]
fn unused_item_warns() {
    let (_tmp, dir) = fixture_copy("mechanics");
    let path = dir.join("scoring.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("safety,Safety,higher_better,0,points\n");
    fs::write(&path, text).unwrap();
    assert_eq!(
        codes_at(&lint_workbook(&dir)),
        vec![(
            "scoring".into(),
            4,
            "id".into(),
            DiagnosticCode::UnusedScoringItem
        )]
    );
}

#[test]
fn every_skin_scaffolds_clean() {
    let date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    for skin in DomainSkin::ALL {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("wb");
        scaffold_workbook_dated(&dir, skin, date).unwrap();
        let c = compile_workbook(&dir);
        assert!(c.diagnostics.is_empty(), "{skin}: {:?}", c.diagnostics);
        assert!(lint_workbook(&dir).is_empty(), "{skin}");
        let case = c.case.unwrap();
        let spec = skin.spec();
        let items: Vec<&str> = case
            .scoring
            .items
            .iter()
            .map(|i| i.display_name.as_str())
            .collect();
        let expected: Vec<&str> = spec.scoring.iter().map(|s| s.1).collect();
        assert_eq!(items, expected);
        if let Some(label) = spec.problem_label {
            assert_eq!(case.labels.get(LabelKey::Problem), label);
        }
    }
}

#[test]
fn scaffold_refuses_occupied_target() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("notes.txt"), "keep me").unwrap();
    let err = scaffold_workbook_dated(
        tmp.path(),
        DomainSkin::Law,
        NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        super::scaffold::ScaffoldError::PathCollision(_)
    ));
    assert_eq!(
        fs::read_to_string(tmp.path().join("notes.txt")).unwrap(),
        "keep me"
    );
}

/// Fixed-point reachability straight from the definition: keep adding
/// targets of show/enable found anywhere in a reachable card's trigger.
fn reachable_oracle(case: &CaseDefinition) -> BTreeSet<String> {
    fn targets(p: &TriggerProgram, out: &mut Vec<String>) {
        for s in &p.statements {
            match s {
                Statement::Command(Command::Show(t) | Command::Enable(t)) => out.push(t.clone()),
                Statement::Command(_) => {}
                Statement::OnCorrect(b) | Statement::OnWrong(b) => targets(b, out),
            }
        }
    }
    let mut set: BTreeSet<String> = case
        .actions
        .iter()
        .filter(|c| c.initial_state == CardState::Visible)
        .map(|c| c.id.clone())
        .collect();
    loop {
        let mut grown = set.clone();
        for c in case.actions.iter().filter(|c| set.contains(&c.id)) {
            if let Some(t) = &c.trigger {
                let mut out = Vec::new();
                targets(&crate::parse_trigger(t).unwrap(), &mut out);
                grown.extend(out);
            }
        }
        if grown == set {
            return set;
        }
        set = grown;
    }
}

fn random_case(states: Vec<u8>, edges: Vec<(usize, usize, u8)>) -> CaseDefinition {
    let mut case = minimal_case();
    let n = states.len();
    case.actions = (0..n)
        .map(|i| {
            let state = match states[i] % 3 {
                0 => CardState::Visible,
                1 => CardState::Invisible,
                _ => CardState::Disabled,
            };
            card(&format!("c{i}"), state, Usefulness::Optional)
        })
        .collect();
    for (from, to, verb) in edges {
        let (from, to) = (from % n, to % n);
        let cmd = match verb % 3 {
            0 => format!("show(c{to})"),
            1 => format!("enable(c{to})"),
            _ => format!("hide(c{to})"),
        };
        let slot = &mut case.actions[from].trigger;
        *slot = Some(match slot.take() {
            Some(prev) => format!("{prev}; {cmd}"),
            None => cmd,
        });
    }
    case
}

proptest! {
    #[test]
    fn reachability_matches_fixed_point(
        states in prop::collection::vec(any::<u8>(), 1..8),
        edges in prop::collection::vec((0usize..8, 0usize..8, any::<u8>()), 0..12),
    ) {
        let case = random_case(states, edges);
        prop_assert_eq!(reachable_cards(&case), reachable_oracle(&case));
    }
}
