//! Sessions, players and per-player play state, rebuilt from trace logs.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use casegen_core::engine::{
    ActionOutcome, AnswerFeedback, DiagnosisSubmission, EvaluationReport, GameState, NotebookOp,
    Phase, View,
};
use casegen_core::{CaseDefinition, Engine, FeedbackPolicy, Timestamp};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ApiResult};
use crate::scores::{Publishing, ScoreEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSelection {
    LearnerChoice,
    Random,
    FixedOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub case_selection: CaseSelection,
    pub case_ids: Vec<String>,
    #[serde(default)]
    pub feedback: FeedbackPolicy,
    #[serde(default)]
    pub score_publishing: Publishing,
    #[serde(default)]
    pub allow_free_answers: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `config.json` of a session directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredSession {
    pub id: String,
    pub join_code: String,
    pub teacher_token_sha256: String,
    pub config: SessionConfig,
}

/// One line of `players.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub token_sha256: String,
    /// Join position, 0-based; seeds the player's random case order.
    pub ordinal: u64,
}

/// A state-changing play request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload", rename_all = "snake_case")]
pub enum PlayOp {
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        case_id: Option<String>,
    },
    Perform {
        card_id: String,
    },
    /// Choices are 1-based ordinals, as shown in views.
    Answer {
        card_id: String,
        choices: Vec<usize>,
    },
    Hint,
    Notebook {
        ops: Vec<NotebookOp>,
    },
    Diagnose {
        submission: DiagnosisSubmission,
    },
    ScoreVisibility {
        hide: bool,
    },
}

/// One line of `trace-<player>.jsonl`. Rejected requests are logged too,
/// with their error code, and skipped on replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayTraceEvent {
    pub session_id: String,
    pub player_id: String,
    pub seq: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub op: PlayOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn report_hash(report: &EvaluationReport) -> String {
    sha256_hex(&serde_json::to_vec(report).expect("report serializes"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletedCase {
    pub case_id: String,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone)]
struct ActiveCase {
    case_id: String,
    state: GameState,
}

/// Result of a successful [`PlayOp`].
#[derive(Debug, Clone)]
pub enum OpResult {
    Started,
    Performed(ActionOutcome),
    Answered(AnswerFeedback),
    Hint(String),
    Notebook,
    Diagnosed(EvaluationReport),
    Visibility(bool),
}

/// Everything mutable about one player. Guarded by a per-player lock.
pub struct PlayerSlot {
    pub record: PlayerRecord,
    pub hide_score: bool,
    order: Vec<String>,
    completed: Vec<CompletedCase>,
    active: Option<ActiveCase>,
    seq: u64,
    trace: Option<File>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletedView {
    pub case_id: String,
    pub grade: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerInfo {
    pub id: String,
    pub display_name: String,
    pub group: Option<String>,
    pub hide_score: bool,
}

/// `GET /play/state` body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerStateView {
    pub session_id: String,
    pub player: PlayerInfo,
    pub case_selection: CaseSelection,
    pub feedback: FeedbackPolicy,
    /// Cases that `start` would accept now.
    pub available_cases: Vec<CaseRef>,
    pub completed: Vec<CompletedView>,
    pub current: Option<View>,
}

pub struct PlayerHandle {
    pub id: String,
    pub display_name: String,
    pub slot: Arc<tokio::sync::Mutex<PlayerSlot>>,
}

pub struct Session {
    pub stored: StoredSession,
    dir: PathBuf,
    engines: BTreeMap<String, Engine>,
    players: std::sync::Mutex<Vec<PlayerHandle>>,
}

fn append_line(file: &mut File, value: &impl Serialize) -> io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()
}

fn open_append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let lines: Vec<String> = BufReader::new(File::open(path)?)
        .lines()
        .collect::<Result<_, _>>()?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            // a torn final line was never acknowledged
            Err(e) if i == last => {
                tracing::warn!("{}: ignoring torn last line: {e}", path.display())
            }
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// Cuts an unterminated last line so later appends start on a fresh line.
fn trim_torn_tail(path: &Path) -> io::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    f.sync_all()
}

fn fsync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

impl Session {
    /// Creates the session directory and `config.json`.
    pub fn create(
        dir: PathBuf,
        stored: StoredSession,
        engines: BTreeMap<String, Engine>,
    ) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("config.json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(&stored).map_err(io::Error::other)?)?;
        f.sync_all()?;
        fs::rename(&tmp, dir.join("config.json"))?;
        fsync_dir(&dir);
        Ok(Session {
            stored,
            dir,
            engines,
            players: std::sync::Mutex::new(Vec::new()),
        })
    }

    /// Loads a session and replays every player's trace.
    pub fn load(
        dir: PathBuf,
        resolve: impl Fn(&str) -> Option<Arc<CaseDefinition>>,
    ) -> io::Result<(Self, Vec<PlayerRecord>)> {
        let stored: StoredSession = serde_json::from_slice(&fs::read(dir.join("config.json"))?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut engines = BTreeMap::new();
        for id in &stored.config.case_ids {
            let case = resolve(id).ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::NotFound,
                    format!("session case `{id}` is missing"),
                )
            })?;
            let engine = Engine::new(case, stored.config.feedback)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            engines.insert(id.clone(), engine);
        }
        let session = Session {
            stored,
            dir,
            engines,
            players: std::sync::Mutex::new(Vec::new()),
        };
        let players_path = session.dir.join("players.jsonl");
        trim_torn_tail(&players_path)?;
        let records: Vec<PlayerRecord> = read_jsonl(&players_path)?;
        for record in &records {
            let mut slot = session.new_slot(record.clone());
            let trace_path = session.trace_path(&record.id);
            trim_torn_tail(&trace_path)?;
            for event in read_jsonl::<PlayTraceEvent>(&trace_path)? {
                session.replay(&mut slot, &event)?;
            }
            slot.trace = Some(open_append(&trace_path)?);
            session.players.lock().unwrap().push(PlayerHandle {
                id: record.id.clone(),
                display_name: record.display_name.clone(),
                slot: Arc::new(tokio::sync::Mutex::new(slot)),
            });
        }
        Ok((session, records))
    }

    fn replay(&self, slot: &mut PlayerSlot, event: &PlayTraceEvent) -> io::Result<()> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
        if event.seq <= slot.seq {
            return Err(bad(format!(
                "player {}: sequence {} after {}",
                slot.record.id, event.seq, slot.seq
            )));
        }
        slot.seq = event.seq;
        if event.error.is_some() {
            return Ok(());
        }
        match self.apply(slot, &event.op, event.at) {
            Ok(OpResult::Diagnosed(report)) => {
                let hash = report_hash(&report);
                if event.report_sha256.as_deref() != Some(hash.as_str()) {
                    return Err(bad(format!(
                        "player {} seq {}: replayed report hash {hash} does not match the log",
                        slot.record.id, event.seq
                    )));
                }
                Ok(())
            }
            Ok(_) => Ok(()),
            Err(e) => Err(bad(format!(
                "player {} seq {}: logged success replays as {}",
                slot.record.id, event.seq, e.body.code
            ))),
        }
    }

    pub fn id(&self) -> &str {
        &self.stored.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.stored.config
    }

    fn trace_path(&self, player_id: &str) -> PathBuf {
        self.dir.join(format!("trace-{player_id}.jsonl"))
    }

    fn new_slot(&self, record: PlayerRecord) -> PlayerSlot {
        let config = &self.stored.config;
        let mut order = config.case_ids.clone();
        if config.case_selection == CaseSelection::Random {
            let seed = config.seed.unwrap_or(0).wrapping_add(record.ordinal);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        PlayerSlot {
            record,
            hide_score: false,
            order,
            completed: Vec::new(),
            active: None,
            seq: 0,
            trace: None,
        }
    }

    /// Registers a player. Display names are unique per session
    /// (compared case-insensitively).
    pub fn join(
        &self,
        display_name: &str,
        group: Option<String>,
        token_sha256: String,
    ) -> ApiResult<PlayerRecord> {
        let name = display_name.trim();
        if name.is_empty() {
            return Err(ApiError::unprocessable(
                "bad_request",
                "display_name is empty",
            ));
        }
        let mut players = self.players.lock().unwrap();
        if players
            .iter()
            .any(|p| p.display_name.to_lowercase() == name.to_lowercase())
        {
            return Err(ApiError::conflict(
                "duplicate_name",
                format!("`{name}` is already taken in this session"),
            ));
        }
        let ordinal = players.len() as u64;
        let record = PlayerRecord {
            id: format!("p{}", ordinal + 1),
            display_name: name.to_string(),
            group: group
                .map(|g| g.trim().to_string())
                .filter(|g| !g.is_empty()),
            token_sha256,
            ordinal,
        };
        let trace_path = self.trace_path(&record.id);
        let mut slot = self.new_slot(record.clone());
        slot.trace = Some(open_append(&trace_path)?);
        append_line(&mut open_append(&self.dir.join("players.jsonl"))?, &record)?;
        players.push(PlayerHandle {
            id: record.id.clone(),
            display_name: record.display_name.clone(),
            slot: Arc::new(tokio::sync::Mutex::new(slot)),
        });
        Ok(record)
    }

    pub fn player(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<PlayerSlot>>> {
        self.players
            .lock()
            .unwrap()
            .iter()
            .find(|p| p.id == id)
            .map(|p| p.slot.clone())
    }

    fn slots(&self) -> Vec<Arc<tokio::sync::Mutex<PlayerSlot>>> {
        self.players
            .lock()
            .unwrap()
            .iter()
            .map(|p| p.slot.clone())
            .collect()
    }

    /// Score data of every player, in join order.
    pub async fn score_entries(&self) -> Vec<ScoreEntry> {
        let mut out = Vec::new();
        for slot in self.slots() {
            let s = slot.lock().await;
            out.push(ScoreEntry {
                player_id: s.record.id.clone(),
                display_name: s.record.display_name.clone(),
                group: s.record.group.clone(),
                hide_score: s.hide_score,
                grades: s.completed.iter().map(|c| c.report.grade).collect(),
            });
        }
        out
    }

    fn engine(&self, case_id: &str) -> &Engine {
        &self.engines[case_id]
    }

    /// Applies `op` to the slot, logs it, and syncs the log before
    /// returning. Rejected requests are logged with their error code.
    pub fn execute(&self, slot: &mut PlayerSlot, op: PlayOp, at: Timestamp) -> ApiResult<OpResult> {
        let before = (slot.active.clone(), slot.completed.len(), slot.hide_score);
        let result = self.apply(slot, &op, at);
        slot.seq += 1;
        let event = PlayTraceEvent {
            session_id: self.stored.id.clone(),
            player_id: slot.record.id.clone(),
            seq: slot.seq,
            at,
            op,
            error: result.as_ref().err().map(|e| e.body.code.clone()),
            report_sha256: match &result {
                Ok(OpResult::Diagnosed(r)) => Some(report_hash(r)),
                _ => None,
            },
        };
        let file = slot.trace.as_mut().expect("live slots have a trace file");
        if let Err(e) = append_line(file, &event) {
            // nothing unlogged may survive
            slot.seq -= 1;
            slot.active = before.0;
            slot.completed.truncate(before.1);
            slot.hide_score = before.2;
            return Err(e.into());
        }
        result
    }

    fn active_mut<'a>(&self, slot: &'a mut PlayerSlot) -> ApiResult<&'a mut ActiveCase> {
        slot.active
            .as_mut()
            .ok_or_else(|| ApiError::conflict("no_active_case", "start a case first"))
    }

    fn apply(&self, slot: &mut PlayerSlot, op: &PlayOp, at: Timestamp) -> ApiResult<OpResult> {
        match op {
            PlayOp::Start { case_id } => {
                if matches!(&slot.active, Some(a) if a.state.phase != Phase::Diagnosed) {
                    return Err(ApiError::conflict(
                        "case_in_progress",
                        "finish the current case before starting another",
                    ));
                }
                let chosen = self.pick_case(slot, case_id.as_deref())?;
                let state = self.engine(&chosen).start_session(at);
                slot.active = Some(ActiveCase {
                    case_id: chosen,
                    state,
                });
                Ok(OpResult::Started)
            }
            PlayOp::Perform { card_id } => {
                let active = self.active_mut(slot)?;
                let (state, outcome) =
                    self.engine(&active.case_id)
                        .perform_action(&active.state, card_id, at)?;
                active.state = state;
                Ok(OpResult::Performed(outcome))
            }
            PlayOp::Answer { card_id, choices } => {
                let active = self.active_mut(slot)?;
                let engine = self.engine(&active.case_id);
                let ids = engine.choice_ids(card_id, choices)?;
                let (state, feedback) = engine.answer_question(&active.state, card_id, &ids)?;
                active.state = state;
                Ok(OpResult::Answered(feedback))
            }
            PlayOp::Hint => {
                let active = self.active_mut(slot)?;
                let (state, hint) = self.engine(&active.case_id).request_hint(&active.state)?;
                active.state = state;
                Ok(OpResult::Hint(hint))
            }
            PlayOp::Notebook { ops } => {
                let active = self.active_mut(slot)?;
                active.state = self
                    .engine(&active.case_id)
                    .edit_notebook(&active.state, ops)?;
                Ok(OpResult::Notebook)
            }
            PlayOp::Diagnose { submission } => {
                if !self.stored.config.allow_free_answers && submission.has_free_text() {
                    return Err(ApiError::unprocessable(
                        "free_answers_disabled",
                        "this session does not accept free-text answers",
                    ));
                }
                let active = self.active_mut(slot)?;
                let (state, report) =
                    self.engine(&active.case_id)
                        .submit_diagnosis(&active.state, submission, at)?;
                active.state = state;
                let case_id = active.case_id.clone();
                slot.completed.push(CompletedCase {
                    case_id,
                    report: report.clone(),
                });
                Ok(OpResult::Diagnosed(report))
            }
            PlayOp::ScoreVisibility { hide } => {
                slot.hide_score = *hide;
                Ok(OpResult::Visibility(*hide))
            }
        }
    }

    fn played(slot: &PlayerSlot, case_id: &str) -> bool {
        slot.completed.iter().any(|c| c.case_id == case_id)
    }

    fn pick_case(&self, slot: &PlayerSlot, requested: Option<&str>) -> ApiResult<String> {
        match self.stored.config.case_selection {
            CaseSelection::LearnerChoice => {
                let Some(id) = requested else {
                    return Err(ApiError::unprocessable(
                        "case_required",
                        "this session lets learners pick: send a case_id",
                    ));
                };
                if !self.stored.config.case_ids.iter().any(|c| c == id) {
                    return Err(ApiError::forbidden(format!(
                        "case `{id}` is not part of this session"
                    )));
                }
                if Self::played(slot, id) {
                    return Err(ApiError::conflict(
                        "case_already_played",
                        format!("case `{id}` was already played"),
                    ));
                }
                Ok(id.to_string())
            }
            CaseSelection::Random | CaseSelection::FixedOrder => {
                let Some(next) = slot.order.get(slot.completed.len()) else {
                    return Err(ApiError::conflict(
                        "no_more_cases",
                        "every case has been played",
                    ));
                };
                match requested {
                    Some(id) if id != next => Err(ApiError::forbidden(format!(
                        "the next case in this session is `{next}`"
                    ))),
                    _ => Ok(next.clone()),
                }
            }
        }
    }

    pub fn render(&self, slot: &PlayerSlot) -> Option<View> {
        slot.active
            .as_ref()
            .map(|a| self.engine(&a.case_id).render_view(&a.state))
    }

    pub fn state_view(&self, slot: &PlayerSlot) -> PlayerStateView {
        let case_ref = |id: &String| CaseRef {
            id: id.clone(),
            name: self.engine(id).case().meta.name.clone(),
        };
        let in_progress = matches!(&slot.active, Some(a) if a.state.phase != Phase::Diagnosed);
        let available = if in_progress {
            Vec::new()
        } else {
            match self.stored.config.case_selection {
                CaseSelection::LearnerChoice => self
                    .stored
                    .config
                    .case_ids
                    .iter()
                    .filter(|id| !Self::played(slot, id))
                    .map(case_ref)
                    .collect(),
                _ => slot
                    .order
                    .get(slot.completed.len())
                    .map(case_ref)
                    .into_iter()
                    .collect(),
            }
        };
        PlayerStateView {
            session_id: self.stored.id.clone(),
            player: PlayerInfo {
                id: slot.record.id.clone(),
                display_name: slot.record.display_name.clone(),
                group: slot.record.group.clone(),
                hide_score: slot.hide_score,
            },
            case_selection: self.stored.config.case_selection,
            feedback: self.stored.config.feedback,
            available_cases: available,
            completed: slot
                .completed
                .iter()
                .map(|c| CompletedView {
                    case_id: c.case_id.clone(),
                    grade: c.report.grade,
                })
                .collect(),
            current: self.render(slot),
        }
    }
}

impl PlayerSlot {
    pub fn completed(&self) -> &[CompletedCase] {
        &self.completed
    }

    /// Case order for fixed and random selection.
    pub fn order(&self) -> &[String] {
        &self.order
    }
}
