//! Workbook compiler: a directory of CSV sheets into a [`CaseDefinition`].
//!
//! Sheets and their header rows:
//!
//! | sheet            | columns                                                                 |
//! |------------------|-------------------------------------------------------------------------|
//! | `meta.csv`       | key,value                                                               |
//! | `labels.csv`     | key,value                                                               |
//! | `problem.csv`    | text,media                                                              |
//! | `solutions.csv`  | slot_id,slot_label,mode,option_id,option_text,correct,allow_free_text   |
//! | `actions.csv`    | id,name,category,initial_state,usefulness,prerequisites,text,media,question,choices,correct,explanation,deltas,trigger (+ optional choice_deltas) |
//! | `scoring.csv`    | id,display_name,direction,initial,unit (optional)                       |
//! | `help.csv`       | hint (optional)                                                         |
//! | `penalties.csv`  | key,value (optional)                                                    |
//!
//! Rows are numbered from 1 with the header as row 1, so the first data row
//! is row 2. Sheet-level problems use row 0.

mod lint;
mod scaffold;
mod sheet;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::case::*;
use crate::trigger::{self, is_identifier};

pub use lint::{lint_workbook, reachable_cards};
pub use scaffold::{
    scaffold_workbook, scaffold_workbook_dated, DomainSkin, ScaffoldError, SkinSpec,
};

use sheet::{Row, Sheet, SheetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// The class of a diagnostic, stable across message wording changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    MissingSheet,
    MalformedCsv,
    MissingColumn,
    DuplicateColumn,
    UnknownColumn,
    UnknownKey,
    DuplicateKey,
    MissingValue,
    BadEnum,
    BadNumber,
    BadDate,
    OutOfRange,
    InvalidId,
    DuplicateId,
    BadMedia,
    DanglingMedia,
    DanglingReference,
    SelfPrerequisite,
    PrerequisiteCycle,
    BadQuestion,
    OrphanQuestionField,
    BadDeltas,
    TriggerSyntax,
    ConditionalWithoutQuestion,
    SlotNotGrouped,
    SlotInconsistent,
    NoCorrectSolution,
    NoSlots,
    TimeItems,
    CaseInvariant,
    UnreachableCard,
    RequiredUnreachable,
    AllChoicesCorrect,
    UnusedScoringItem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub sheet: String,
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{severity}: {}.csv", self.sheet)?;
        if self.row > 0 {
            write!(f, ":{}", self.row)?;
        }
        if !self.column.is_empty() {
            write!(f, ":{}", self.column)?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Default)]
pub(crate) struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn push(
        &mut self,
        severity: Severity,
        sheet: &str,
        row: usize,
        column: &str,
        code: DiagnosticCode,
        message: String,
    ) {
        self.0.push(Diagnostic {
            severity,
            code,
            sheet: sheet.to_string(),
            row,
            column: column.to_string(),
            message,
        });
    }

    pub(crate) fn error(
        &mut self,
        sheet: &str,
        row: usize,
        column: &str,
        code: DiagnosticCode,
        message: String,
    ) {
        self.push(Severity::Error, sheet, row, column, code, message)
    }

    pub(crate) fn warning(
        &mut self,
        sheet: &str,
        row: usize,
        column: &str,
        code: DiagnosticCode,
        message: String,
    ) {
        self.push(Severity::Warning, sheet, row, column, code, message)
    }

    fn has_errors(&self) -> bool {
        self.0.iter().any(Diagnostic::is_error)
    }

    fn into_sorted(mut self) -> Vec<Diagnostic> {
        self.0.sort_by(|a, b| {
            (&a.sheet, a.row, &a.column, &a.message, a.code)
                .cmp(&(&b.sheet, b.row, &b.column, &b.message, b.code))
        });
        self.0.dedup();
        self.0
    }
}

/// Where compiled entities came from, for positioning lint warnings.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    pub card_rows: HashMap<String, usize>,
    pub item_rows: HashMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Compilation {
    /// Present iff there are no error diagnostics.
    pub case: Option<CaseDefinition>,
    pub diagnostics: Vec<Diagnostic>,
    pub source_map: SourceMap,
}

impl Compilation {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

const META: SheetSpec = SheetSpec {
    name: "meta",
    required: true,
    columns: &["key", "value"],
    optional_columns: &[],
};
const LABELS: SheetSpec = SheetSpec {
    name: "labels",
    required: true,
    columns: &["key", "value"],
    optional_columns: &[],
};
const PROBLEM: SheetSpec = SheetSpec {
    name: "problem",
    required: true,
    columns: &["text", "media"],
    optional_columns: &[],
};
const SOLUTIONS: SheetSpec = SheetSpec {
    name: "solutions",
    required: true,
    columns: &[
        "slot_id",
        "slot_label",
        "mode",
        "option_id",
        "option_text",
        "correct",
        "allow_free_text",
    ],
    optional_columns: &[],
};
const ACTIONS: SheetSpec = SheetSpec {
    name: "actions",
    required: true,
    columns: &[
        "id",
        "name",
        "category",
        "initial_state",
        "usefulness",
        "prerequisites",
        "text",
        "media",
        "question",
        "choices",
        "correct",
        "explanation",
        "deltas",
        "trigger",
    ],
    optional_columns: &["choice_deltas"],
};
const SCORING: SheetSpec = SheetSpec {
    name: "scoring",
    required: false,
    columns: &["id", "display_name", "direction", "initial", "unit"],
    optional_columns: &[],
};
const HELP: SheetSpec = SheetSpec {
    name: "help",
    required: false,
    columns: &["hint"],
    optional_columns: &[],
};
const PENALTIES: SheetSpec = SheetSpec {
    name: "penalties",
    required: false,
    columns: &["key", "value"],
    optional_columns: &[],
};

const META_KEYS: [&str; 7] = [
    "name",
    "created",
    "author",
    "difficulty",
    "field",
    "description",
    "suggestions",
];
const META_REQUIRED: [&str; 5] = ["name", "created", "author", "difficulty", "field"];

/// Compiles the workbook at `dir`. The case is returned only when no
/// error-severity diagnostic was produced.
pub fn compile_workbook(dir: &Path) -> Compilation {
    let mut c = Compiler {
        dir,
        diags: Diagnostics::default(),
        source_map: SourceMap::default(),
    };
    let case = c.run();
    let case = if c.diags.has_errors() { None } else { case };
    Compilation {
        case,
        diagnostics: c.diags.into_sorted(),
        source_map: c.source_map,
    }
}

struct Compiler<'a> {
    dir: &'a Path,
    diags: Diagnostics,
    source_map: SourceMap,
}

fn split_list(cell: &str) -> Vec<&str> {
    cell.split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_bool(cell: &str) -> Option<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "" | "false" | "no" | "0" | "n" => Some(false),
        "true" | "yes" | "1" | "y" | "x" => Some(true),
        _ => None,
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl Compiler<'_> {
    fn err(&mut self, sheet: &str, row: usize, col: &str, code: DiagnosticCode, msg: String) {
        self.diags.error(sheet, row, col, code, msg);
    }

    fn run(&mut self) -> Option<CaseDefinition> {
        let meta = sheet::load(self.dir, &META, &mut self.diags);
        let labels = sheet::load(self.dir, &LABELS, &mut self.diags);
        let problem = sheet::load(self.dir, &PROBLEM, &mut self.diags);
        let solutions = sheet::load(self.dir, &SOLUTIONS, &mut self.diags);
        let actions = sheet::load(self.dir, &ACTIONS, &mut self.diags);
        let scoring = sheet::load(self.dir, &SCORING, &mut self.diags);
        let help = sheet::load(self.dir, &HELP, &mut self.diags);
        let penalties = sheet::load(self.dir, &PENALTIES, &mut self.diags);

        let meta = meta.and_then(|s| self.meta(&s));
        let labels = labels.map(|s| self.labels(&s));
        let problem = problem.and_then(|s| self.problem(&s));
        let slots = solutions.map(|s| self.solutions(&s));
        let items = match &scoring {
            Some(s) => Some(self.scoring(s)),
            None if self.dir.join("scoring.csv").exists() => None,
            None => Some(Vec::new()),
        };
        let penalties = match &penalties {
            Some(s) => self.penalties(s),
            None => PenaltyConfig::default(),
        };
        let help = help
            .map(|s| {
                s.rows
                    .iter()
                    .map(|r| s.cell(r, "hint").to_string())
                    .filter(|h| !h.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let cards = actions.map(|s| self.actions(&s, items.as_deref()));

        let (meta, labels, problem, slots, items, cards) =
            (meta?, labels?, problem?, slots?, items?, cards?);
        let case = CaseDefinition {
            id: slugify(&meta.name),
            meta,
            labels,
            problem,
            actions: cards,
            diagnosis: DiagnosisForm { slots },
            scoring: ScoringSpec { items },
            penalties,
            help,
        };
        if !self.diags.has_errors() {
            // Anything the sheet-level checks let through is still caught here.
            for v in case.validate() {
                self.err("case", 0, "", DiagnosticCode::CaseInvariant, v.message);
            }
        }
        Some(case)
    }

    fn key_values<'s>(
        &mut self,
        sheet: &'s Sheet,
        allowed: &[&str],
    ) -> BTreeMap<String, (&'s Row, String)> {
        let mut out: BTreeMap<String, (&Row, String)> = BTreeMap::new();
        for row in &sheet.rows {
            let key = sheet.cell(row, "key");
            if key.is_empty() {
                self.err(
                    sheet.name,
                    row.number,
                    "key",
                    DiagnosticCode::MissingValue,
                    "key is empty".into(),
                );
                continue;
            }
            if !allowed.contains(&key) {
                self.err(
                    sheet.name,
                    row.number,
                    "key",
                    DiagnosticCode::UnknownKey,
                    format!("unknown key `{key}`; allowed: {}", allowed.join(", ")),
                );
                continue;
            }
            if let Some((first, _)) = out.get(key) {
                let first = first.number;
                self.err(
                    sheet.name,
                    row.number,
                    "key",
                    DiagnosticCode::DuplicateKey,
                    format!("key `{key}` already set on row {first}"),
                );
                continue;
            }
            out.insert(key.to_string(), (row, sheet.cell(row, "value").to_string()));
        }
        out
    }

    fn meta(&mut self, sheet: &Sheet) -> Option<CaseMeta> {
        let kv = self.key_values(sheet, &META_KEYS);
        let mut ok = true;
        for key in META_REQUIRED {
            match kv.get(key) {
                None => {
                    self.err(
                        "meta",
                        0,
                        "key",
                        DiagnosticCode::MissingValue,
                        format!("required key `{key}` is missing"),
                    );
                    ok = false;
                }
                Some((row, value)) if value.is_empty() => {
                    let n = row.number;
                    self.err(
                        "meta",
                        n,
                        "value",
                        DiagnosticCode::MissingValue,
                        format!("`{key}` must not be empty"),
                    );
                    ok = false;
                }
                Some(_) => {}
            }
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.clone()).unwrap_or_default();

        let created = match kv.get("created") {
            Some((row, v)) if !v.is_empty() => match NaiveDate::parse_from_str(v, "%Y-%m-%d") {
                Ok(d) => Some(d),
                Err(_) => {
                    let n = row.number;
                    self.err(
                        "meta",
                        n,
                        "value",
                        DiagnosticCode::BadDate,
                        format!("`created` must be an ISO-8601 date (YYYY-MM-DD), found `{v}`"),
                    );
                    None
                }
            },
            _ => None,
        };
        let difficulty = match kv.get("difficulty") {
            Some((row, v)) if !v.is_empty() => {
                let n = row.number;
                match v.parse::<i64>() {
                    Ok(d) if (1..=5).contains(&d) => Some(d as u8),
                    Ok(d) => {
                        self.err(
                            "meta",
                            n,
                            "value",
                            DiagnosticCode::OutOfRange,
                            format!("difficulty must be between 1 and 5, found {d}"),
                        );
                        None
                    }
                    Err(_) => {
                        self.err(
                            "meta",
                            n,
                            "value",
                            DiagnosticCode::BadNumber,
                            format!("difficulty must be an integer, found `{v}`"),
                        );
                        None
                    }
                }
            }
            _ => None,
        };
        if !ok {
            return None;
        }
        Some(CaseMeta {
            name: get("name"),
            created: created?,
            author: get("author"),
            difficulty: difficulty?,
            field: get("field"),
            description: get("description"),
            suggestions: get("suggestions"),
        })
    }

    fn labels(&mut self, sheet: &Sheet) -> LabelSet {
        let keys: Vec<&str> = LabelKey::ALL.iter().map(|k| k.as_str()).collect();
        let kv = self.key_values(sheet, &keys);
        let mut labels = LabelSet::new();
        for (key, (row, value)) in kv {
            if value.is_empty() {
                self.err(
                    "labels",
                    row.number,
                    "value",
                    DiagnosticCode::MissingValue,
                    format!("label `{key}` is empty; remove the row to use the default"),
                );
            } else if let Some(k) = LabelKey::parse(&key) {
                labels.set(k, value);
            }
        }
        labels
    }

    fn penalties(&mut self, sheet: &Sheet) -> PenaltyConfig {
        let kv = self.key_values(sheet, &PenaltyConfig::KEYS);
        let mut config = PenaltyConfig::default();
        let mut min_row = 0;
        for (key, (row, value)) in kv {
            let Some(v) = parse_number(&value) else {
                self.err(
                    "penalties",
                    row.number,
                    "value",
                    DiagnosticCode::BadNumber,
                    format!("`{key}` must be a number, found `{value}`"),
                );
                continue;
            };
            let is_weight = !key.starts_with("grade_");
            if is_weight && v < 0.0 {
                self.err(
                    "penalties",
                    row.number,
                    "value",
                    DiagnosticCode::OutOfRange,
                    format!("penalty `{key}` must not be negative"),
                );
                continue;
            }
            if key == "grade_min" {
                min_row = row.number;
            }
            if let Some(slot) = config.get_mut(&key) {
                *slot = v;
            }
        }
        if config.grade_min > config.grade_max {
            self.err(
                "penalties",
                min_row,
                "value",
                DiagnosticCode::OutOfRange,
                format!(
                    "grade_min {} exceeds grade_max {}",
                    config.grade_min, config.grade_max
                ),
            );
        }
        config
    }

    fn scoring(&mut self, sheet: &Sheet) -> Vec<ScoringItem> {
        let mut items: Vec<ScoringItem> = Vec::new();
        let mut time_row: Option<usize> = None;
        for row in &sheet.rows {
            let n = row.number;
            let id = sheet.cell(row, "id");
            if !is_identifier(id) {
                self.err(
                    "scoring",
                    n,
                    "id",
                    DiagnosticCode::InvalidId,
                    format!("scoring item id `{id}` must match [a-z_][a-z0-9_]*"),
                );
                continue;
            }
            if items.iter().any(|i| i.id == id) {
                self.err(
                    "scoring",
                    n,
                    "id",
                    DiagnosticCode::DuplicateId,
                    format!("duplicate scoring item `{id}`"),
                );
                continue;
            }
            let display_name = sheet.cell(row, "display_name");
            if display_name.is_empty() {
                self.err(
                    "scoring",
                    n,
                    "display_name",
                    DiagnosticCode::MissingValue,
                    format!("scoring item `{id}` needs a display name"),
                );
            }
            let direction = match sheet.cell(row, "direction") {
                "higher_better" | "" => Some(Direction::HigherBetter),
                "lower_better" => Some(Direction::LowerBetter),
                other => {
                    self.err(
                        "scoring",
                        n,
                        "direction",
                        DiagnosticCode::BadEnum,
                        format!("direction `{other}` is not one of: higher_better, lower_better"),
                    );
                    None
                }
            };
            let initial_cell = sheet.cell(row, "initial");
            let initial = if initial_cell.is_empty() {
                Some(0.0)
            } else {
                let v = parse_number(initial_cell);
                if v.is_none() {
                    self.err(
                        "scoring",
                        n,
                        "initial",
                        DiagnosticCode::BadNumber,
                        format!("initial value `{initial_cell}` is not a number"),
                    );
                }
                v
            };
            let unit = match sheet.cell(row, "unit") {
                "points" | "" => Some(Unit::Points),
                "seconds" => Some(Unit::Seconds),
                "currency" => Some(Unit::Currency),
                other => {
                    self.err(
                        "scoring",
                        n,
                        "unit",
                        DiagnosticCode::BadEnum,
                        format!("unit `{other}` is not one of: points, seconds, currency"),
                    );
                    None
                }
            };
            if unit == Some(Unit::Seconds) {
                if let Some(first) = time_row {
                    self.err(
                        "scoring",
                        n,
                        "unit",
                        DiagnosticCode::TimeItems,
                        format!("only one item may use seconds (already declared on row {first})"),
                    );
                    continue;
                }
                time_row = Some(n);
            }
            let (Some(direction), Some(initial), Some(unit)) = (direction, initial, unit) else {
                continue;
            };
            self.source_map.item_rows.insert(id.to_string(), n);
            items.push(ScoringItem {
                id: id.to_string(),
                display_name: display_name.to_string(),
                direction,
                initial,
                unit,
            });
        }
        items
    }

    fn media(&mut self, sheet: &str, row: usize, cell: &str) -> Vec<MediaRef> {
        let mut out = Vec::new();
        for entry in split_list(cell) {
            let Some(kind) = MediaKind::infer(entry) else {
                self.err(
                    sheet,
                    row,
                    "media",
                    DiagnosticCode::BadMedia,
                    format!(
                        "cannot tell the media type of `{entry}`; use .png/.jpg, .mp4, .mp3/.wav or an http(s) link"
                    ),
                );
                continue;
            };
            let path = if kind == MediaKind::WebLink {
                entry.to_string()
            } else {
                let rel = entry.strip_prefix(MEDIA_DIR).unwrap_or(entry);
                format!("{MEDIA_DIR}{rel}")
            };
            let media = MediaRef {
                kind,
                path,
                caption: None,
            };
            if !media.path_is_well_formed() {
                self.err(
                    sheet,
                    row,
                    "media",
                    DiagnosticCode::BadMedia,
                    format!("media path `{entry}` must stay inside the media folder"),
                );
                continue;
            }
            if !media.is_link() && !self.dir.join(&media.path).is_file() {
                self.err(
                    sheet,
                    row,
                    "media",
                    DiagnosticCode::DanglingMedia,
                    format!("media file `{}` does not exist", media.path),
                );
                continue;
            }
            out.push(media);
        }
        out
    }

    fn problem(&mut self, sheet: &Sheet) -> Option<ProblemStatement> {
        let mut paragraphs = Vec::new();
        let mut media = Vec::new();
        for row in &sheet.rows {
            let text = sheet.cell(row, "text");
            if !text.is_empty() {
                paragraphs.push(text.to_string());
            }
            media.extend(self.media("problem", row.number, sheet.cell(row, "media")));
        }
        if paragraphs.is_empty() {
            self.err(
                "problem",
                0,
                "text",
                DiagnosticCode::MissingValue,
                "the problem statement is empty".into(),
            );
            return None;
        }
        Some(ProblemStatement {
            text: paragraphs.join("\n\n"),
            media,
        })
    }

    fn solutions(&mut self, sheet: &Sheet) -> Vec<DiagnosisSlot> {
        struct Building {
            slot: DiagnosisSlot,
            first_row: usize,
            correct_rows: Vec<usize>,
            free_text_set: bool,
        }
        let mut slots: Vec<Building> = Vec::new();
        for row in &sheet.rows {
            let n = row.number;
            let slot_id = sheet.cell(row, "slot_id");
            if !is_identifier(slot_id) {
                self.err(
                    "solutions",
                    n,
                    "slot_id",
                    DiagnosticCode::InvalidId,
                    format!("slot id `{slot_id}` must match [a-z_][a-z0-9_]*"),
                );
                continue;
            }
            let label = sheet.cell(row, "slot_label");
            let mode_cell = sheet.cell(row, "mode");
            let mode = match mode_cell {
                "" => None,
                "single" => Some(SlotMode::Single),
                "multi" => Some(SlotMode::Multi),
                other => {
                    self.err(
                        "solutions",
                        n,
                        "mode",
                        DiagnosticCode::BadEnum,
                        format!("mode `{other}` is not one of: single, multi"),
                    );
                    continue;
                }
            };
            let free_cell = sheet.cell(row, "allow_free_text");
            let Some(allow_free) = parse_bool(free_cell) else {
                self.err(
                    "solutions",
                    n,
                    "allow_free_text",
                    DiagnosticCode::BadEnum,
                    format!("allow_free_text `{free_cell}` is not true/false"),
                );
                continue;
            };
            let correct_cell = sheet.cell(row, "correct");
            let Some(correct) = parse_bool(correct_cell) else {
                self.err(
                    "solutions",
                    n,
                    "correct",
                    DiagnosticCode::BadEnum,
                    format!("correct `{correct_cell}` is not true/false"),
                );
                continue;
            };

            let is_last = slots.last().map(|b| b.slot.id == slot_id).unwrap_or(false);
            if !is_last {
                if let Some(earlier) = slots.iter().find(|b| b.slot.id == slot_id) {
                    let first = earlier.first_row;
                    self.err(
                        "solutions",
                        n,
                        "slot_id",
                        DiagnosticCode::SlotNotGrouped,
                        format!(
                            "rows of slot `{slot_id}` must be contiguous (slot started on row {first})"
                        ),
                    );
                    continue;
                }
                if label.is_empty() {
                    self.err(
                        "solutions",
                        n,
                        "slot_label",
                        DiagnosticCode::MissingValue,
                        format!("slot `{slot_id}` needs a label on its first row"),
                    );
                }
                let Some(mode) = mode else {
                    self.err(
                        "solutions",
                        n,
                        "mode",
                        DiagnosticCode::MissingValue,
                        format!("slot `{slot_id}` needs a mode (single or multi) on its first row"),
                    );
                    continue;
                };
                slots.push(Building {
                    slot: DiagnosisSlot {
                        id: slot_id.to_string(),
                        label: label.to_string(),
                        mode,
                        options: Vec::new(),
                        correct: BTreeSet::new(),
                        allow_free_text: allow_free,
                    },
                    first_row: n,
                    correct_rows: Vec::new(),
                    free_text_set: !free_cell.is_empty(),
                });
            } else {
                let b = slots.last_mut().expect("current slot");
                let mut inconsistent = None;
                if !label.is_empty() && label != b.slot.label {
                    inconsistent = Some((
                        "slot_label",
                        format!("label `{label}` differs from `{}`", b.slot.label),
                    ));
                } else if mode.is_some() && mode != Some(b.slot.mode) {
                    inconsistent = Some((
                        "mode",
                        format!("mode `{mode_cell}` differs from the slot's first row"),
                    ));
                } else if !free_cell.is_empty() {
                    if b.free_text_set && allow_free != b.slot.allow_free_text {
                        inconsistent = Some((
                            "allow_free_text",
                            "allow_free_text differs from an earlier row".to_string(),
                        ));
                    } else {
                        b.slot.allow_free_text = allow_free;
                        b.free_text_set = true;
                    }
                }
                if let Some((col, msg)) = inconsistent {
                    self.err(
                        "solutions",
                        n,
                        col,
                        DiagnosticCode::SlotInconsistent,
                        format!("slot `{slot_id}`: {msg}"),
                    );
                    continue;
                }
            }

            let option_id = sheet.cell(row, "option_id");
            let option_text = sheet.cell(row, "option_text");
            let b = slots.last_mut().expect("current slot");
            if option_id.is_empty() {
                if !option_text.is_empty() {
                    self.diags.error(
                        "solutions",
                        n,
                        "option_id",
                        DiagnosticCode::MissingValue,
                        "an option with text needs an option_id".into(),
                    );
                } else if correct {
                    self.diags.error(
                        "solutions",
                        n,
                        "correct",
                        DiagnosticCode::MissingValue,
                        "a row without an option cannot be marked correct".into(),
                    );
                }
                continue;
            }
            if !is_token(option_id) {
                self.diags.error(
                    "solutions",
                    n,
                    "option_id",
                    DiagnosticCode::InvalidId,
                    format!("option id `{option_id}` may only use letters, digits, `_`, `-`, `.`"),
                );
                continue;
            }
            if b.slot.has_option(option_id) {
                self.diags.error(
                    "solutions",
                    n,
                    "option_id",
                    DiagnosticCode::DuplicateId,
                    format!("duplicate option `{option_id}` in slot `{slot_id}`"),
                );
                continue;
            }
            if option_text.is_empty() {
                self.diags.error(
                    "solutions",
                    n,
                    "option_text",
                    DiagnosticCode::MissingValue,
                    format!("option `{option_id}` needs a text"),
                );
            }
            b.slot.options.push(Solution {
                id: option_id.to_string(),
                text: option_text.to_string(),
            });
            if correct {
                b.slot.correct.insert(option_id.to_string());
                b.correct_rows.push(n);
            }
        }

        if slots.is_empty() {
            self.err(
                "solutions",
                0,
                "",
                DiagnosticCode::NoSlots,
                "the diagnosis needs at least one slot".into(),
            );
        }
        for b in &slots {
            let id = &b.slot.id;
            if b.slot.options.is_empty() {
                if !b.slot.allow_free_text {
                    self.err(
                        "solutions",
                        b.first_row,
                        "option_id",
                        DiagnosticCode::MissingValue,
                        format!("slot `{id}` has no options and does not allow free text"),
                    );
                }
            } else if b.slot.correct.is_empty() {
                self.err(
                    "solutions",
                    b.first_row,
                    "correct",
                    DiagnosticCode::NoCorrectSolution,
                    format!("slot `{id}` has no option marked correct"),
                );
            } else if b.slot.mode == SlotMode::Single && b.correct_rows.len() > 1 {
                self.err(
                    "solutions",
                    b.correct_rows[1],
                    "correct",
                    DiagnosticCode::SlotInconsistent,
                    format!("single-choice slot `{id}` has more than one correct option"),
                );
            }
        }
        slots.into_iter().map(|b| b.slot).collect()
    }

    fn deltas(
        &mut self,
        row: usize,
        column: &str,
        entries: &[&str],
    ) -> Option<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for entry in entries {
            let parsed = entry
                .split_once(':')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, v)| !k.is_empty() && (v.starts_with('+') || v.starts_with('-')))
                .and_then(|(k, v)| parse_number(v).map(|n| (k, n)));
            match parsed {
                Some((item, amount)) => {
                    *out.entry(item.to_string()).or_insert(0.0) += amount;
                }
                None => {
                    self.err(
                        "actions",
                        row,
                        column,
                        DiagnosticCode::BadDeltas,
                        format!("`{entry}` is not of the form item:+n or item:-n"),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn actions(&mut self, sheet: &Sheet, items: Option<&[ScoringItem]>) -> Vec<ActionCard> {
        let mut cards: Vec<ActionCard> = Vec::new();
        let mut rows: HashMap<String, usize> = HashMap::new();
        let mut programs: Vec<(usize, String, trigger::TriggerProgram)> = Vec::new();

        for row in &sheet.rows {
            let n = row.number;
            let cell = |col: &str| sheet.cell(row, col);
            let id = cell("id");
            if !is_identifier(id) {
                self.err(
                    "actions",
                    n,
                    "id",
                    DiagnosticCode::InvalidId,
                    format!("card id `{id}` must match [a-z_][a-z0-9_]*"),
                );
                continue;
            }
            if let Some(first) = rows.get(id) {
                let first = *first;
                self.err(
                    "actions",
                    n,
                    "id",
                    DiagnosticCode::DuplicateId,
                    format!("duplicate card id `{id}` (first on row {first})"),
                );
                continue;
            }
            rows.insert(id.to_string(), n);
            let mut ok = true;

            let name = cell("name");
            if name.is_empty() {
                self.err(
                    "actions",
                    n,
                    "name",
                    DiagnosticCode::MissingValue,
                    format!("card `{id}` needs a name"),
                );
                ok = false;
            }
            let initial_state = match cell("initial_state") {
                "" => CardState::Visible,
                s => match CardState::parse(s) {
                    Some(state) => state,
                    None => {
                        self.err(
                            "actions",
                            n,
                            "initial_state",
                            DiagnosticCode::BadEnum,
                            format!(
                                "initial_state `{s}` is not one of: visible, invisible, disabled"
                            ),
                        );
                        ok = false;
                        CardState::Visible
                    }
                },
            };
            let usefulness = match cell("usefulness") {
                "" => Usefulness::Optional,
                s => match Usefulness::parse(s) {
                    Some(u) => u,
                    None => {
                        self.err(
                            "actions",
                            n,
                            "usefulness",
                            DiagnosticCode::BadEnum,
                            format!("usefulness `{s}` is not one of: required, optional, useless"),
                        );
                        ok = false;
                        Usefulness::Optional
                    }
                },
            };
            let mut prerequisites = BTreeSet::new();
            for p in split_list(cell("prerequisites")) {
                if !is_identifier(p) {
                    self.err(
                        "actions",
                        n,
                        "prerequisites",
                        DiagnosticCode::InvalidId,
                        format!("prerequisite `{p}` is not a card id"),
                    );
                    ok = false;
                } else {
                    prerequisites.insert(p.to_string());
                }
            }
            let media = self.media("actions", n, cell("media"));

            let question = self.question(sheet, row, id);
            let question = match question {
                Ok(q) => q,
                Err(()) => {
                    ok = false;
                    None
                }
            };

            let score_deltas = match self.deltas(n, "deltas", &split_list(cell("deltas"))) {
                Some(d) => d,
                None => {
                    ok = false;
                    BTreeMap::new()
                }
            };

            let trigger_src = cell("trigger");
            let trigger = if trigger_src.is_empty() {
                None
            } else {
                match trigger::parse_trigger(trigger_src) {
                    Ok(program) => {
                        programs.push((n, id.to_string(), program));
                        Some(trigger_src.to_string())
                    }
                    Err(e) => {
                        self.err(
                            "actions",
                            n,
                            "trigger",
                            DiagnosticCode::TriggerSyntax,
                            format!("trigger: {e}"),
                        );
                        ok = false;
                        None
                    }
                }
            };

            if !ok {
                continue;
            }
            let category = Some(cell("category"))
                .filter(|c| !c.is_empty())
                .map(str::to_string);
            self.source_map.card_rows.insert(id.to_string(), n);
            cards.push(ActionCard {
                id: id.to_string(),
                name: name.to_string(),
                category,
                initial_state,
                content_text: cell("text").to_string(),
                media,
                question,
                usefulness,
                prerequisites,
                score_deltas,
                trigger,
            });
        }

        // Cross references. Ids of rows that failed above still count as
        // declared, so one mistake does not cascade.
        let declared: HashSet<&str> = rows.keys().map(String::as_str).collect();
        for card in &cards {
            let n = rows[&card.id];
            for p in &card.prerequisites {
                if p == &card.id {
                    self.err(
                        "actions",
                        n,
                        "prerequisites",
                        DiagnosticCode::SelfPrerequisite,
                        format!("card `{p}` cannot be its own prerequisite"),
                    );
                } else if !declared.contains(p.as_str()) {
                    self.err(
                        "actions",
                        n,
                        "prerequisites",
                        DiagnosticCode::DanglingReference,
                        format!("prerequisite `{p}` is not a declared card"),
                    );
                }
            }
        }
        if let Some(items) = items {
            let item_ids: HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
            for card in &cards {
                let n = rows[&card.id];
                for item in card.score_deltas.keys() {
                    if !item_ids.contains(item.as_str()) {
                        self.err(
                            "actions",
                            n,
                            "deltas",
                            DiagnosticCode::DanglingReference,
                            format!("scoring item `{item}` is not declared in scoring.csv"),
                        );
                    }
                }
                let choice_items = card
                    .question
                    .iter()
                    .flat_map(|q| q.choice_deltas.values())
                    .flat_map(|d| d.keys());
                for item in choice_items {
                    if !item_ids.contains(item.as_str()) {
                        self.err(
                            "actions",
                            n,
                            "choice_deltas",
                            DiagnosticCode::DanglingReference,
                            format!("scoring item `{item}` is not declared in scoring.csv"),
                        );
                    }
                }
            }
            for (n, id, program) in &programs {
                let Some(card) = cards.iter().find(|c| &c.id == id) else {
                    continue;
                };
                let mut found: Vec<Violation> = Vec::new();
                check_program(&mut found, id, card, program, &declared, &item_ids);
                for v in found {
                    let code = match v.invariant {
                        Invariant::ConditionalWithoutQuestion => {
                            DiagnosticCode::ConditionalWithoutQuestion
                        }
                        _ => DiagnosticCode::DanglingReference,
                    };
                    self.err("actions", *n, "trigger", code, v.message);
                }
            }
        }
        if let Some(cycle) = prerequisite_cycle(&cards) {
            let n = rows[&cycle[0]];
            self.err(
                "actions",
                n,
                "prerequisites",
                DiagnosticCode::PrerequisiteCycle,
                format!("prerequisite cycle {}", cycle.join(" -> ")),
            );
        }
        cards
    }

    /// Reads the inline analysis question of an action row. `Err` means a
    /// diagnostic was emitted.
    fn question(
        &mut self,
        sheet: &Sheet,
        row: &Row,
        card_id: &str,
    ) -> Result<Option<AnalysisQuestion>, ()> {
        let n = row.number;
        let prompt = sheet.cell(row, "question");
        let choices = split_list(sheet.cell(row, "choices"));
        let correct_cell = sheet.cell(row, "correct");
        let explanation = sheet.cell(row, "explanation");
        let choice_deltas_cell = if sheet.has_column("choice_deltas") {
            sheet.cell(row, "choice_deltas")
        } else {
            ""
        };

        if prompt.is_empty() {
            let stray = [
                ("choices", !choices.is_empty()),
                ("correct", !correct_cell.is_empty()),
                ("explanation", !explanation.is_empty()),
                ("choice_deltas", !choice_deltas_cell.is_empty()),
            ];
            let mut failed = false;
            for (col, present) in stray {
                if present {
                    self.err(
                        "actions",
                        n,
                        col,
                        DiagnosticCode::OrphanQuestionField,
                        format!("`{col}` is set but the card has no question"),
                    );
                    failed = true;
                }
            }
            return if failed { Err(()) } else { Ok(None) };
        }

        if choices.len() < 2 {
            self.err(
                "actions",
                n,
                "choices",
                DiagnosticCode::BadQuestion,
                "a question needs at least two `|`-separated choices".into(),
            );
            return Err(());
        }
        let ids: Vec<String> = (1..=choices.len())
            .map(|i| format!("{card_id}_{i}"))
            .collect();
        let index = |s: &str| -> Option<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|i| (1..=choices.len()).contains(i))
        };
        let correct_list = split_list(correct_cell);
        if correct_list.is_empty() {
            self.err(
                "actions",
                n,
                "correct",
                DiagnosticCode::MissingValue,
                "a question needs its correct choice number(s)".into(),
            );
            return Err(());
        }
        let mut correct = BTreeSet::new();
        for c in correct_list {
            match index(c) {
                Some(i) => {
                    correct.insert(ids[i - 1].clone());
                }
                None => {
                    self.err(
                        "actions",
                        n,
                        "correct",
                        DiagnosticCode::BadQuestion,
                        format!(
                            "correct choice `{c}` is not a number between 1 and {}",
                            choices.len()
                        ),
                    );
                    return Err(());
                }
            }
        }
        let mut choice_deltas: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for entry in split_list(choice_deltas_cell) {
            let Some((which, delta)) = entry.split_once(':') else {
                self.err(
                    "actions",
                    n,
                    "choice_deltas",
                    DiagnosticCode::BadDeltas,
                    format!("`{entry}` is not of the form choice:item:+n"),
                );
                return Err(());
            };
            let Some(i) = index(which.trim()) else {
                self.err(
                    "actions",
                    n,
                    "choice_deltas",
                    DiagnosticCode::BadDeltas,
                    format!(
                        "`{which}` is not a choice number between 1 and {}",
                        choices.len()
                    ),
                );
                return Err(());
            };
            let parsed = self.deltas(n, "choice_deltas", &[delta]).ok_or(())?;
            let slot = choice_deltas.entry(ids[i - 1].clone()).or_default();
            for (item, amount) in parsed {
                *slot.entry(item).or_insert(0.0) += amount;
            }
        }
        Ok(Some(AnalysisQuestion {
            prompt: prompt.to_string(),
            choices: choices
                .iter()
                .zip(&ids)
                .map(|(text, id)| Choice {
                    id: id.clone(),
                    text: text.to_string(),
                })
                .collect(),
            correct,
            explanation: Some(explanation)
                .filter(|e| !e.is_empty())
                .map(str::to_string),
            choice_deltas,
        }))
    }
}

#[cfg(test)]
mod tests;
