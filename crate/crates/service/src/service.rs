use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use casegen_core::{Engine, Timestamp};
use rand::rngs::OsRng;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::library::{CaseFilter, CaseSummary, Library, UploadError};
use crate::scores::{scoreboard, Scoreboard, Viewer};
use crate::session::{sha256_hex, Session, SessionConfig, StoredSession};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp(ms)
    })
}

/// 256 random bits, hex encoded.
fn new_token() -> String {
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn new_join_code() -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    (0..8)
        .map(|_| ALPHABET[OsRng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Teacher {
        session_id: String,
    },
    Player {
        session_id: String,
        player_id: String,
    },
}

impl Principal {
    pub fn session_id(&self) -> &str {
        match self {
            Principal::Teacher { session_id } | Principal::Player { session_id, .. } => session_id,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub join_code: String,
    /// Shown once; authorizes the teacher scoreboard.
    pub teacher_token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joined {
    pub session_id: String,
    pub player_id: String,
    /// Shown once.
    pub token: String,
}

/// Case library, sessions and token index over one store directory.
pub struct Service {
    root: PathBuf,
    library: Library,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
    tokens: RwLock<HashMap<String, Principal>>,
    clock: Clock,
}

impl Service {
    /// Opens the store, replaying every session's traces.
    pub fn open(root: &Path, clock: Clock) -> io::Result<Self> {
        fs::create_dir_all(root.join("sessions"))?;
        let library = Library::open(&root.join("cases"))?;
        let mut sessions = BTreeMap::new();
        let mut tokens = HashMap::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(root.join("sessions"))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join("config.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let (session, players) = Session::load(dir, |case_id| library.get(case_id))?;
            let sid = session.id().to_string();
            tokens.insert(
                session.stored.teacher_token_sha256.clone(),
                Principal::Teacher {
                    session_id: sid.clone(),
                },
            );
            for p in players {
                tokens.insert(
                    p.token_sha256,
                    Principal::Player {
                        session_id: sid.clone(),
                        player_id: p.id,
                    },
                );
            }
            sessions.insert(sid, Arc::new(session));
        }
        tracing::info!(
            "store {} opened: {} case(s), {} session(s)",
            root.display(),
            library.search(&CaseFilter::default()).len(),
            sessions.len()
        );
        Ok(Service {
            root: root.to_path_buf(),
            library,
            sessions: RwLock::new(sessions),
            tokens: RwLock::new(tokens),
            clock,
        })
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn upload_case(&self, bytes: &[u8]) -> ApiResult<String> {
        self.library.upload_zip(bytes).map_err(|e| match e {
            UploadError::Invalid(v) => {
                ApiError::unprocessable("invalid_case", "the case does not validate")
                    .with_details(v)
            }
            UploadError::MissingMedia(paths) => ApiError::unprocessable(
                "missing_media",
                format!("missing media: {}", paths.join(", ")),
            )
            .with_details(paths),
            UploadError::Duplicate(id) => ApiError::conflict(
                "duplicate_case",
                format!("a different case with id `{id}` is already in the library"),
            ),
            UploadError::Io(io) => ApiError::from(io),
            other => ApiError::unprocessable("malformed_bundle", other.to_string()),
        })
    }

    pub fn search_cases(&self, filter: &CaseFilter) -> Vec<CaseSummary> {
        self.library.search(filter)
    }

    pub fn create_session(&self, mut config: SessionConfig) -> ApiResult<CreatedSession> {
        if config.case_ids.is_empty() {
            return Err(ApiError::unprocessable("bad_config", "case_ids is empty"));
        }
        let mut engines = BTreeMap::new();
        for id in &config.case_ids {
            if engines.contains_key(id) {
                return Err(ApiError::unprocessable(
                    "bad_config",
                    format!("case `{id}` is listed twice"),
                ));
            }
            let case = self
                .library
                .get(id)
                .ok_or_else(|| ApiError::not_found(format!("unknown case `{id}`")))?;
            let engine = Engine::new(case, config.feedback)?;
            engines.insert(id.clone(), engine);
        }
        if config.seed.is_none() {
            // stored, so replay and restarts see the same orders
            config.seed = Some(OsRng.next_u64());
        }
        let mut id_bytes = [0u8; 8];
        OsRng.fill_bytes(&mut id_bytes);
        let session_id: String = id_bytes.iter().map(|b| format!("{b:02x}")).collect();
        let teacher_token = new_token();
        let stored = StoredSession {
            id: session_id.clone(),
            join_code: new_join_code(),
            teacher_token_sha256: sha256_hex(teacher_token.as_bytes()),
            config,
        };
        let join_code = stored.join_code.clone();
        let session = Session::create(
            self.root.join("sessions").join(&session_id),
            stored,
            engines,
        )?;
        self.tokens.write().unwrap().insert(
            session.stored.teacher_token_sha256.clone(),
            Principal::Teacher {
                session_id: session_id.clone(),
            },
        );
        self.sessions
            .write()
            .unwrap()
            .insert(session_id.clone(), Arc::new(session));
        Ok(CreatedSession {
            session_id,
            join_code,
            teacher_token,
        })
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn join(
        &self,
        session_id: &str,
        join_code: &str,
        display_name: &str,
        group: Option<String>,
    ) -> ApiResult<Joined> {
        let session = self.session(session_id)?;
        if !session
            .stored
            .join_code
            .eq_ignore_ascii_case(join_code.trim())
        {
            return Err(ApiError::not_found("no session with this join code"));
        }
        let token = new_token();
        let hash = sha256_hex(token.as_bytes());
        let record = session.join(display_name, group, hash.clone())?;
        self.tokens.write().unwrap().insert(
            hash,
            Principal::Player {
                session_id: session_id.to_string(),
                player_id: record.id.clone(),
            },
        );
        Ok(Joined {
            session_id: session_id.to_string(),
            player_id: record.id,
            token,
        })
    }

    pub fn authenticate(&self, token: &str) -> ApiResult<Principal> {
        self.tokens
            .read()
            .unwrap()
            .get(&sha256_hex(token.as_bytes()))
            .cloned()
            .ok_or_else(ApiError::unauthorized)
    }

    pub async fn scores(&self, session_id: &str, principal: &Principal) -> ApiResult<Scoreboard> {
        let session = self.session(session_id)?;
        if principal.session_id() != session_id {
            return Err(ApiError::forbidden("this token belongs to another session"));
        }
        let entries = session.score_entries().await;
        let viewer = match principal {
            Principal::Teacher { .. } => Viewer::Teacher,
            Principal::Player { player_id, .. } => Viewer::Player(player_id),
        };
        Ok(scoreboard(
            session.config().score_publishing,
            &entries,
            viewer,
        ))
    }
}
