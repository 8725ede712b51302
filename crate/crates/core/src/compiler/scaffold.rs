use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::case::{PenaltyConfig, Unit};

/// Interface vocabulary and scoring items for one teaching domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainSkin {
    Generic,
    MedicalEmergency,
    GeneralPractitioner,
    Law,
    Mechanics,
}

pub struct SkinSpec {
    pub field: &'static str,
    pub problem_label: Option<&'static str>,
    pub solutions_label: Option<&'static str>,
    pub help_label: Option<&'static str>,
    pub repository_label: Option<&'static str>,
    pub categories: &'static [&'static str],
    /// (id, display name, unit)
    pub scoring: &'static [(&'static str, &'static str, Unit)],
}

impl DomainSkin {
    pub const ALL: [DomainSkin; 5] = [
        DomainSkin::Generic,
        DomainSkin::MedicalEmergency,
        DomainSkin::GeneralPractitioner,
        DomainSkin::Law,
        DomainSkin::Mechanics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainSkin::Generic => "generic",
            DomainSkin::MedicalEmergency => "medical_emergency",
            DomainSkin::GeneralPractitioner => "general_practitioner",
            DomainSkin::Law => "law",
            DomainSkin::Mechanics => "mechanics",
        }
    }

    pub fn spec(self) -> SkinSpec {
        match self {
            DomainSkin::Generic => SkinSpec {
                field: "general",
                problem_label: None,
                solutions_label: None,
                help_label: None,
                repository_label: None,
                categories: &[],
                scoring: &[("accuracy", "Accuracy", Unit::Points)],
            },
            DomainSkin::MedicalEmergency => SkinSpec {
                field: "medicine",
                problem_label: Some("Initial state of admission"),
                solutions_label: Some("Pathologies"),
                help_label: Some("Call a senior"),
                repository_label: Some("Patient file"),
                categories: &[
                    "Stabilization actions",
                    "Questions",
                    "Physical examinations",
                    "Further explorations",
                ],
                scoring: &[
                    ("accuracy", "Accuracy of the medical care", Unit::Points),
                    ("time", "Time of the medical care", Unit::Seconds),
                ],
            },
            DomainSkin::GeneralPractitioner => SkinSpec {
                field: "medicine",
                problem_label: Some("Patient's requests"),
                solutions_label: Some("Pathologies"),
                help_label: Some("Help"),
                repository_label: Some("Patient file"),
                categories: &["Dialogue", "Physical examinations", "Further analysis"],
                scoring: &[
                    (
                        "accuracy",
                        "Accuracy of the medical care and treatment",
                        Unit::Points,
                    ),
                    (
                        "time",
                        "Time of the medical care and treatment",
                        Unit::Seconds,
                    ),
                    (
                        "cost",
                        "Cost of the medical care and treatment",
                        Unit::Currency,
                    ),
                ],
            },
            DomainSkin::Law => SkinSpec {
                field: "law",
                problem_label: Some("Problem"),
                solutions_label: Some("Legal qualifications"),
                help_label: Some("Use a joker"),
                repository_label: Some("Client file"),
                categories: &["Rules of law", "Facts"],
                scoring: &[
                    ("reasoning", "Accuracy of the reasoning", Unit::Points),
                    (
                        "qualification",
                        "Choice of legal qualifications",
                        Unit::Points,
                    ),
                ],
            },
            DomainSkin::Mechanics => SkinSpec {
                field: "mechanics",
                problem_label: Some("Machine failure"),
                solutions_label: Some("Investigation leads"),
                help_label: Some("A helping hand?"),
                repository_label: Some("Technical report"),
                categories: &["View documentation", "Disassemble", "Analyze"],
                scoring: &[
                    ("accuracy", "Accuracy of the diagnosis", Unit::Points),
                    ("cost", "Cost of the investigation", Unit::Currency),
                ],
            },
        }
    }
}

impl fmt::Display for DomainSkin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainSkin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainSkin::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = DomainSkin::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown skin `{s}`; expected one of: {}", names.join(", "))
            })
    }
}

#[derive(Debug, Error)]
pub enum ScaffoldError {
    #[error("{0} already exists and is not empty")]
    PathCollision(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn write_sheet(dir: &Path, name: &str, rows: &[Vec<String>]) -> Result<(), ScaffoldError> {
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn row<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

/// Writes a starter workbook for `skin`, dated today.
pub fn scaffold_workbook(target: &Path, skin: DomainSkin) -> Result<(), ScaffoldError> {
    scaffold_workbook_dated(target, skin, chrono::Local::now().date_naive())
}

pub fn scaffold_workbook_dated(
    target: &Path,
    skin: DomainSkin,
    created: NaiveDate,
) -> Result<(), ScaffoldError> {
    if target.exists() {
        let occupied = !target.is_dir() || fs::read_dir(target)?.next().is_some();
        if occupied {
            return Err(ScaffoldError::PathCollision(target.display().to_string()));
        }
    }
    fs::create_dir_all(target.join("media"))?;
    let spec = skin.spec();
    let skin_title = skin.as_str().replace('_', " ");

    let name = format!("New {skin_title} case");
    let created = created.format("%Y-%m-%d").to_string();
    write_sheet(
        target,
        "meta",
        &[
            row(["key", "value"]),
            row(["name", &name]),
            row(["created", &created]),
            row(["author", "Case author"]),
            row(["difficulty", "1"]),
            row(["field", spec.field]),
            row(["description", "Describe the case in a few sentences."]),
            row(["suggestions", "Suggest how to use the case in class."]),
        ],
    )?;

    let mut labels = vec![row(["key", "value"])];
    for (key, value) in [
        ("problem", spec.problem_label),
        ("solutions", spec.solutions_label),
        ("help", spec.help_label),
        ("repository", spec.repository_label),
    ] {
        if let Some(v) = value {
            labels.push(row([key, v]));
        }
    }
    write_sheet(target, "labels", &labels)?;

    write_sheet(
        target,
        "problem",
        &[
            row(["text", "media"]),
            row(["Describe the situation the learner is confronted with.", ""]),
        ],
    )?;

    let slot_label = spec.solutions_label.unwrap_or("Solution");
    write_sheet(
        target,
        "solutions",
        &[
            row([
                "slot_id",
                "slot_label",
                "mode",
                "option_id",
                "option_text",
                "correct",
                "allow_free_text",
            ]),
            row([
                "solution",
                slot_label,
                "single",
                "first",
                "First candidate",
                "true",
                "false",
            ]),
            row([
                "solution",
                "",
                "",
                "second",
                "Second candidate",
                "false",
                "",
            ]),
        ],
    )?;

    let mut scoring = vec![row(["id", "display_name", "direction", "initial", "unit"])];
    for (id, display, unit) in spec.scoring {
        let (direction, unit) = match unit {
            Unit::Points => ("higher_better", "points"),
            Unit::Seconds => ("lower_better", "seconds"),
            Unit::Currency => ("lower_better", "currency"),
        };
        scoring.push(row([id, display, direction, "0", unit]));
    }
    write_sheet(target, "scoring", &scoring)?;

    // One card per category; every non-time item is touched by some card so
    // the starter is lint-clean.
    let categories: Vec<Option<&str>> = if spec.categories.is_empty() {
        vec![None]
    } else {
        spec.categories.iter().map(|c| Some(*c)).collect()
    };
    let delta_items: Vec<(&str, Unit)> = spec
        .scoring
        .iter()
        .filter(|(_, _, u)| *u != Unit::Seconds)
        .map(|(id, _, u)| (*id, *u))
        .collect();
    let mut actions = vec![row([
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
    ])];
    for (i, category) in categories.iter().enumerate() {
        let id = format!("action_{}", i + 1);
        let deltas = delta_items
            .get(i)
            .map(|(item, unit)| match unit {
                Unit::Currency => format!("{item}:+10"),
                _ => format!("{item}:+1"),
            })
            .unwrap_or_default();
        let usefulness = if i == 0 { "required" } else { "optional" };
        let name = match category {
            Some(c) => format!("{c} {}", i + 1),
            None => format!("Action {}", i + 1),
        };
        actions.push(row([
            &id,
            &name,
            category.unwrap_or(""),
            "visible",
            usefulness,
            "",
            "What the learner finds out.",
            "",
            "",
            "",
            "",
            "",
            &deltas,
            "",
        ]));
    }
    // Items beyond the card count go on the first card.
    if delta_items.len() > categories.len() {
        let extra: Vec<String> = delta_items[categories.len()..]
            .iter()
            .map(|(item, _)| format!("{item}:+1"))
            .collect();
        let cell = &mut actions[1][12];
        let mut all: Vec<String> = cell
            .split('|')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        all.extend(extra);
        *cell = all.join("|");
    }
    write_sheet(target, "actions", &actions)?;

    write_sheet(
        target,
        "help",
        &[
            row(["hint"]),
            row(["A first hint for learners who are stuck."]),
        ],
    )?;

    let mut penalties = vec![row(["key", "value"])];
    let mut values = PenaltyConfig::default();
    for key in PenaltyConfig::KEYS {
        let v = *values.get_mut(key).expect("known key");
        penalties.push(vec![key.to_string(), v.to_string()]);
    }
    write_sheet(target, "penalties", &penalties)?;
    Ok(())
}
