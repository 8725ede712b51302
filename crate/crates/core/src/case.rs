//! In-memory representation of a compiled case study.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::trigger::{self, is_identifier, TriggerProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDefinition {
    pub id: String,
    pub meta: CaseMeta,
    #[serde(default)]
    pub labels: LabelSet,
    pub problem: ProblemStatement,
    pub actions: Vec<ActionCard>,
    pub diagnosis: DiagnosisForm,
    pub scoring: ScoringSpec,
    #[serde(default)]
    pub penalties: PenaltyConfig,
    /// Ordered hints handed out by the help button.
    #[serde(default)]
    pub help: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseMeta {
    pub name: String,
    pub created: NaiveDate,
    pub author: String,
    pub difficulty: u8,
    pub field: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub suggestions: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKey {
    Problem,
    Solutions,
    Help,
    Repository,
    Diagnosis,
    Notebook,
    Validate,
}

impl LabelKey {
    pub const ALL: [LabelKey; 7] = [
        LabelKey::Problem,
        LabelKey::Solutions,
        LabelKey::Help,
        LabelKey::Repository,
        LabelKey::Diagnosis,
        LabelKey::Notebook,
        LabelKey::Validate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelKey::Problem => "problem",
            LabelKey::Solutions => "solutions",
            LabelKey::Help => "help",
            LabelKey::Repository => "repository",
            LabelKey::Diagnosis => "diagnosis",
            LabelKey::Notebook => "notebook",
            LabelKey::Validate => "validate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn default_text(self) -> &'static str {
        match self {
            LabelKey::Problem => "Problem",
            LabelKey::Solutions => "Solutions",
            LabelKey::Help => "Help",
            LabelKey::Repository => "Directory",
            LabelKey::Diagnosis => "Diagnosis",
            LabelKey::Notebook => "Notebook",
            LabelKey::Validate => "Validate",
        }
    }
}

/// Interface label overrides. Keys left out fall back to the built-in text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeMap<LabelKey, String>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: LabelKey, text: impl Into<String>) {
        self.0.insert(key, text.into());
    }

    pub fn get(&self, key: LabelKey) -> &str {
        self.0
            .get(&key)
            .map(String::as_str)
            .unwrap_or_else(|| key.default_text())
    }

    pub fn overrides(&self) -> &BTreeMap<LabelKey, String> {
        &self.0
    }

    /// All seven labels with defaults filled in.
    pub fn resolved(&self) -> BTreeMap<LabelKey, String> {
        LabelKey::ALL
            .into_iter()
            .map(|k| (k, self.get(k).to_string()))
            .collect()
    }
}

impl FromIterator<(LabelKey, String)> for LabelSet {
    fn from_iter<I: IntoIterator<Item = (LabelKey, String)>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemStatement {
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
    Sound,
    WebLink,
}

impl MediaKind {
    /// Infers the kind from a URL scheme or file extension.
    pub fn infer(path: &str) -> Option<Self> {
        let lower = path.to_ascii_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") {
            return Some(MediaKind::WebLink);
        }
        let ext = lower.rsplit_once('.')?.1;
        match ext {
            "png" | "jpg" | "jpeg" | "gif" => Some(MediaKind::Image),
            "mp4" | "webm" => Some(MediaKind::Video),
            "mp3" | "wav" | "ogg" => Some(MediaKind::Sound),
            _ => None,
        }
    }
}

/// Prefix of every bundle-relative media path.
pub const MEDIA_DIR: &str = "media/";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaRef {
    pub kind: MediaKind,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl MediaRef {
    pub fn is_link(&self) -> bool {
        self.kind == MediaKind::WebLink
    }

    /// Checks the path shape: links are absolute http(s) URLs, everything else
    /// is a `media/...` path that cannot escape the media directory.
    pub fn path_is_well_formed(&self) -> bool {
        if self.is_link() {
            let lower = self.path.to_ascii_lowercase();
            return lower.starts_with("http://") || lower.starts_with("https://");
        }
        match self.path.strip_prefix(MEDIA_DIR) {
            Some(rest) => {
                !rest.is_empty()
                    && !rest.contains('\\')
                    && rest
                        .split('/')
                        .all(|seg| !seg.is_empty() && seg != "." && seg != "..")
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardState {
    Visible,
    Invisible,
    Disabled,
}

impl CardState {
    pub fn as_str(self) -> &'static str {
        match self {
            CardState::Visible => "visible",
            CardState::Invisible => "invisible",
            CardState::Disabled => "disabled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "visible" => Some(CardState::Visible),
            "invisible" => Some(CardState::Invisible),
            "disabled" => Some(CardState::Disabled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Usefulness {
    Required,
    #[default]
    Optional,
    Useless,
}

impl Usefulness {
    pub fn as_str(self) -> &'static str {
        match self {
            Usefulness::Required => "required",
            Usefulness::Optional => "optional",
            Usefulness::Useless => "useless",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "required" => Some(Usefulness::Required),
            "optional" => Some(Usefulness::Optional),
            "useless" => Some(Usefulness::Useless),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionCard {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub initial_state: CardState,
    #[serde(default)]
    pub content_text: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<AnalysisQuestion>,
    #[serde(default)]
    pub usefulness: Usefulness,
    #[serde(default)]
    pub prerequisites: BTreeSet<String>,
    #[serde(default)]
    pub score_deltas: BTreeMap<String, f64>,
    /// Trigger source, kept verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisQuestion {
    pub prompt: String,
    pub choices: Vec<Choice>,
    pub correct: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    /// Extra item deltas applied when a given choice is picked.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub choice_deltas: BTreeMap<String, BTreeMap<String, f64>>,
}

impl AnalysisQuestion {
    pub fn choice_index(&self, id: &str) -> Option<usize> {
        self.choices.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choice {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisForm {
    pub slots: Vec<DiagnosisSlot>,
}

impl DiagnosisForm {
    pub fn slot(&self, id: &str) -> Option<&DiagnosisSlot> {
        self.slots.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisSlot {
    pub id: String,
    pub label: String,
    pub mode: SlotMode,
    #[serde(default)]
    pub options: Vec<Solution>,
    #[serde(default)]
    pub correct: BTreeSet<String>,
    #[serde(default)]
    pub allow_free_text: bool,
}

impl DiagnosisSlot {
    pub fn is_free_text_only(&self) -> bool {
        self.options.is_empty() && self.allow_free_text
    }

    pub fn has_option(&self, id: &str) -> bool {
        self.options.iter().any(|o| o.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSpec {
    pub items: Vec<ScoringItem>,
}

impl ScoringSpec {
    pub fn item(&self, id: &str) -> Option<&ScoringItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// The item that receives elapsed play time, if one is declared.
    pub fn time_item(&self) -> Option<&ScoringItem> {
        self.items.iter().find(|i| i.unit == Unit::Seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Points,
    Seconds,
    Currency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringItem {
    pub id: String,
    pub display_name: String,
    pub direction: Direction,
    pub initial: f64,
    pub unit: Unit,
}

/// Per-fault grade deductions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub missed_required: f64,
    pub useless_performed: f64,
    pub order_violation: f64,
    pub wrong_analysis_answer: f64,
    pub diagnosis_error: f64,
    pub help_used: f64,
    pub grade_max: f64,
    pub grade_min: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            missed_required: 10.0,
            useless_performed: 5.0,
            order_violation: 5.0,
            wrong_analysis_answer: 5.0,
            diagnosis_error: 10.0,
            help_used: 5.0,
            grade_max: 100.0,
            grade_min: 0.0,
        }
    }
}

impl PenaltyConfig {
    pub const KEYS: [&'static str; 8] = [
        "missed_required",
        "useless_performed",
        "order_violation",
        "wrong_analysis_answer",
        "diagnosis_error",
        "help_used",
        "grade_max",
        "grade_min",
    ];

    pub fn get_mut(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "missed_required" => &mut self.missed_required,
            "useless_performed" => &mut self.useless_performed,
            "order_violation" => &mut self.order_violation,
            "wrong_analysis_answer" => &mut self.wrong_analysis_answer,
            "diagnosis_error" => &mut self.diagnosis_error,
            "help_used" => &mut self.help_used,
            "grade_max" => &mut self.grade_max,
            "grade_min" => &mut self.grade_min,
            _ => return None,
        })
    }

    fn weights(&self) -> [(&'static str, f64); 6] {
        [
            ("missed_required", self.missed_required),
            ("useless_performed", self.useless_performed),
            ("order_violation", self.order_violation),
            ("wrong_analysis_answer", self.wrong_analysis_answer),
            ("diagnosis_error", self.diagnosis_error),
            ("help_used", self.help_used),
        ]
    }
}

/// Which case invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    InvalidId,
    DuplicateId,
    EmptyText,
    DifficultyRange,
    UndeclaredItem,
    UnknownCard,
    SelfPrerequisite,
    PrerequisiteCycle,
    TriggerSyntax,
    ConditionalWithoutQuestion,
    QuestionShape,
    SlotShape,
    NoSlots,
    NonFinite,
    TimeItems,
    Penalties,
    MediaPath,
}

/// A broken invariant, naming the offending id (or cycle path).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Ids used on the wire and in trace scripts: no whitespace or separators.
pub fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

/// Case slugs: lowercase alphanumerics separated by `-` or `_`.
pub fn is_slug(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_lowercase() || b.is_ascii_digit())
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

/// Derives a case slug from a display name.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let trimmed = out.trim_end_matches('-');
    if trimmed.is_empty() {
        "case".to_string()
    } else {
        trimmed.to_string()
    }
}

struct Checker {
    found: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, invariant: Invariant, subject: impl Into<String>, message: String) {
        self.found.push(Violation {
            invariant,
            subject: subject.into(),
            message,
        });
    }

    fn unique<'a>(&mut self, what: &str, ids: impl IntoIterator<Item = &'a str>) {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                self.push(
                    Invariant::DuplicateId,
                    id,
                    format!("duplicate {what} id `{id}`"),
                );
            }
        }
    }

    fn finite(&mut self, subject: &str, value: f64) {
        if !value.is_finite() {
            self.push(
                Invariant::NonFinite,
                subject,
                format!("`{subject}` must be a finite number"),
            );
        }
    }

    fn nonempty(&mut self, subject: &str, what: &str, text: &str) {
        if text.trim().is_empty() {
            self.push(
                Invariant::EmptyText,
                subject,
                format!("{what} of `{subject}` must not be empty"),
            );
        }
    }

    fn media(&mut self, owner: &str, media: &[MediaRef]) {
        for m in media {
            if !m.path_is_well_formed() {
                self.push(
                    Invariant::MediaPath,
                    m.path.clone(),
                    format!(
                        "media `{}` of `{owner}` must be an http(s) URL or a path under {MEDIA_DIR}",
                        m.path
                    ),
                );
            }
        }
    }
}

impl CaseDefinition {
    pub fn card(&self, id: &str) -> Option<&ActionCard> {
        self.actions.iter().find(|c| c.id == id)
    }

    /// Checks every structural invariant, returning all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut ck = Checker { found: Vec::new() };

        if !is_slug(&self.id) {
            ck.push(
                Invariant::InvalidId,
                self.id.clone(),
                format!("case id `{}` is not a lowercase slug", self.id),
            );
        }
        ck.nonempty("meta", "name", &self.meta.name);
        if !(1..=5).contains(&self.meta.difficulty) {
            ck.push(
                Invariant::DifficultyRange,
                self.meta.difficulty.to_string(),
                format!("difficulty {} outside 1..=5", self.meta.difficulty),
            );
        }
        for (key, text) in self.labels.overrides() {
            ck.nonempty(key.as_str(), "label", text);
        }
        ck.nonempty("problem", "text", &self.problem.text);
        ck.media("problem", &self.problem.media);

        let items: HashSet<&str> = self.scoring.items.iter().map(|i| i.id.as_str()).collect();
        ck.unique(
            "scoring item",
            self.scoring.items.iter().map(|i| i.id.as_str()),
        );
        for item in &self.scoring.items {
            if !is_identifier(&item.id) {
                ck.push(
                    Invariant::InvalidId,
                    item.id.clone(),
                    format!("scoring item id `{}` is not an identifier", item.id),
                );
            }
            ck.nonempty(&item.id, "display name", &item.display_name);
            ck.finite(&item.id, item.initial);
        }
        let time_items: Vec<&str> = self
            .scoring
            .items
            .iter()
            .filter(|i| i.unit == Unit::Seconds)
            .map(|i| i.id.as_str())
            .collect();
        if time_items.len() > 1 {
            ck.push(
                Invariant::TimeItems,
                time_items.join(", "),
                format!(
                    "only one scoring item may use seconds, found {}",
                    time_items.join(", ")
                ),
            );
        }

        for (key, value) in self.penalties.weights() {
            ck.finite(key, value);
            if value < 0.0 {
                ck.push(
                    Invariant::Penalties,
                    key,
                    format!("penalty `{key}` must be >= 0"),
                );
            }
        }
        ck.finite("grade_max", self.penalties.grade_max);
        ck.finite("grade_min", self.penalties.grade_min);
        if self.penalties.grade_min > self.penalties.grade_max {
            ck.push(
                Invariant::Penalties,
                "grade_min",
                "grade_min exceeds grade_max".to_string(),
            );
        }

        let cards: HashSet<&str> = self.actions.iter().map(|c| c.id.as_str()).collect();
        ck.unique("action card", self.actions.iter().map(|c| c.id.as_str()));
        for card in &self.actions {
            self.check_card(&mut ck, card, &cards, &items);
        }
        if let Some(cycle) = prerequisite_cycle(&self.actions) {
            let path = cycle.join(" -> ");
            ck.push(
                Invariant::PrerequisiteCycle,
                path.clone(),
                format!("prerequisite cycle {path}"),
            );
        }

        if self.diagnosis.slots.is_empty() {
            ck.push(
                Invariant::NoSlots,
                "diagnosis",
                "diagnosis form needs at least one slot".to_string(),
            );
        }
        ck.unique(
            "diagnosis slot",
            self.diagnosis.slots.iter().map(|s| s.id.as_str()),
        );
        for slot in &self.diagnosis.slots {
            check_slot(&mut ck, slot);
        }

        for (i, hint) in self.help.iter().enumerate() {
            ck.nonempty(&format!("help[{i}]"), "hint", hint);
        }
        ck.found
    }

    fn check_card(
        &self,
        ck: &mut Checker,
        card: &ActionCard,
        cards: &HashSet<&str>,
        items: &HashSet<&str>,
    ) {
        let id = card.id.as_str();
        if !is_identifier(id) {
            ck.push(
                Invariant::InvalidId,
                id,
                format!("action card id `{id}` is not an identifier"),
            );
        }
        ck.nonempty(id, "name", &card.name);
        ck.media(id, &card.media);
        for prereq in &card.prerequisites {
            if prereq == id {
                ck.push(
                    Invariant::SelfPrerequisite,
                    id,
                    format!("card `{id}` lists itself as a prerequisite"),
                );
            } else if !cards.contains(prereq.as_str()) {
                ck.push(
                    Invariant::UnknownCard,
                    prereq.clone(),
                    format!("card `{id}` requires unknown card `{prereq}`"),
                );
            }
        }
        for (item, delta) in &card.score_deltas {
            if !items.contains(item.as_str()) {
                ck.push(
                    Invariant::UndeclaredItem,
                    item.clone(),
                    format!("card `{id}` has a delta on undeclared scoring item `{item}`"),
                );
            }
            ck.finite(item, *delta);
        }
        if let Some(q) = &card.question {
            ck.nonempty(id, "question prompt", &q.prompt);
            if q.choices.len() < 2 {
                ck.push(
                    Invariant::QuestionShape,
                    id,
                    format!("question on `{id}` needs at least two choices"),
                );
            }
            ck.unique("choice", q.choices.iter().map(|c| c.id.as_str()));
            for c in &q.choices {
                if !is_token(&c.id) {
                    ck.push(
                        Invariant::InvalidId,
                        c.id.clone(),
                        format!("choice id `{}` on `{id}` is malformed", c.id),
                    );
                }
                ck.nonempty(&c.id, "choice text", &c.text);
            }
            if q.correct.is_empty() {
                ck.push(
                    Invariant::QuestionShape,
                    id,
                    format!("question on `{id}` has no correct choice"),
                );
            }
            for c in q.correct.iter().chain(q.choice_deltas.keys()) {
                if q.choice_index(c).is_none() {
                    ck.push(
                        Invariant::QuestionShape,
                        c.clone(),
                        format!("question on `{id}` refers to unknown choice `{c}`"),
                    );
                }
            }
            for deltas in q.choice_deltas.values() {
                for (item, delta) in deltas {
                    if !items.contains(item.as_str()) {
                        ck.push(
                            Invariant::UndeclaredItem,
                            item.clone(),
                            format!(
                                "question on `{id}` has a delta on undeclared scoring item `{item}`"
                            ),
                        );
                    }
                    ck.finite(item, *delta);
                }
            }
        }
        if let Some(source) = &card.trigger {
            match trigger::parse_trigger(source) {
                Err(e) => ck.push(
                    Invariant::TriggerSyntax,
                    id,
                    format!("trigger of `{id}`: {e}"),
                ),
                Ok(program) => check_program(ck, id, card, &program, cards, items),
            }
        }
    }

    /// Parsed triggers keyed by card id. Cards whose trigger fails to parse
    /// are skipped; `validate` reports them.
    pub fn parsed_triggers(&self) -> BTreeMap<String, TriggerProgram> {
        self.actions
            .iter()
            .filter_map(|c| {
                let src = c.trigger.as_ref()?;
                Some((c.id.clone(), trigger::parse_trigger(src).ok()?))
            })
            .collect()
    }
}

/// Reference checks for one parsed trigger against its case.
pub(crate) fn check_program(
    ck_out: &mut impl ViolationSink,
    id: &str,
    card: &ActionCard,
    program: &TriggerProgram,
    cards: &HashSet<&str>,
    items: &HashSet<&str>,
) {
    for target in program.card_refs() {
        if !cards.contains(target) {
            ck_out.violation(
                Invariant::UnknownCard,
                target,
                format!("trigger of `{id}` refers to unknown card `{target}`"),
            );
        }
    }
    for item in program.item_refs() {
        if !items.contains(item) {
            ck_out.violation(
                Invariant::UndeclaredItem,
                item,
                format!("trigger of `{id}` adds to undeclared scoring item `{item}`"),
            );
        }
    }
    if program.has_conditionals() && card.question.is_none() {
        ck_out.violation(
            Invariant::ConditionalWithoutQuestion,
            id,
            format!("trigger of `{id}` uses on_correct/on_wrong but the card has no question"),
        );
    }
}

pub(crate) trait ViolationSink {
    fn violation(&mut self, invariant: Invariant, subject: &str, message: String);
}

impl ViolationSink for Checker {
    fn violation(&mut self, invariant: Invariant, subject: &str, message: String) {
        self.push(invariant, subject, message);
    }
}

impl ViolationSink for Vec<Violation> {
    fn violation(&mut self, invariant: Invariant, subject: &str, message: String) {
        self.push(Violation {
            invariant,
            subject: subject.to_string(),
            message,
        });
    }
}

fn check_slot(ck: &mut Checker, slot: &DiagnosisSlot) {
    let id = slot.id.as_str();
    if !is_identifier(id) {
        ck.push(
            Invariant::InvalidId,
            id,
            format!("diagnosis slot id `{id}` is not an identifier"),
        );
    }
    ck.nonempty(id, "label", &slot.label);
    if slot.options.is_empty() && !slot.allow_free_text {
        ck.push(
            Invariant::SlotShape,
            id,
            format!("slot `{id}` has no options and does not accept free text"),
        );
    }
    ck.unique("solution", slot.options.iter().map(|o| o.id.as_str()));
    for o in &slot.options {
        if !is_token(&o.id) {
            ck.push(
                Invariant::InvalidId,
                o.id.clone(),
                format!("solution id `{}` in slot `{id}` is malformed", o.id),
            );
        }
        ck.nonempty(&o.id, "solution text", &o.text);
    }
    if slot.mode == SlotMode::Single && slot.correct.len() > 1 {
        ck.push(
            Invariant::SlotShape,
            id,
            format!("single-choice slot `{id}` lists more than one correct solution"),
        );
    }
    for c in &slot.correct {
        if !slot.has_option(c) {
            ck.push(
                Invariant::SlotShape,
                c.clone(),
                format!("slot `{id}` marks unknown solution `{c}` as correct"),
            );
        }
    }
}

/// Finds a cycle in the prerequisite relation, returned as a closed path
/// (`[a, b, a]`). Unknown prerequisite ids are ignored here.
pub fn prerequisite_cycle(cards: &[ActionCard]) -> Option<Vec<String>> {
    let index: HashMap<&str, usize> = cards
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; cards.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(
        at: usize,
        cards: &[ActionCard],
        index: &HashMap<&str, usize>,
        color: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<String>> {
        color[at] = 1;
        stack.push(at);
        for prereq in &cards[at].prerequisites {
            let Some(&next) = index.get(prereq.as_str()) else {
                continue;
            };
            if next == at {
                continue;
            }
            match color[next] {
                1 => {
                    let from = stack.iter().position(|&s| s == next).unwrap_or(0);
                    let mut path: Vec<String> =
                        stack[from..].iter().map(|&s| cards[s].id.clone()).collect();
                    path.push(cards[next].id.clone());
                    return Some(path);
                }
                0 => {
                    if let Some(c) = visit(next, cards, index, color, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        color[at] = 2;
        None
    }

    for start in 0..cards.len() {
        if color[start] == 0 {
            if let Some(cycle) = visit(start, cards, &index, &mut color, &mut stack) {
                return Some(cycle);
            }
        }
    }
    None
}
