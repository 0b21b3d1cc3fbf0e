//! File-backed corpus store.
//!
//! State lives in `<root>/state.json`, replaced atomically (write to a
//! temporary file, fsync, rename) on every commit. Mutations run on a copy
//! of the state and are only published once persisted, so a failed
//! operation leaves nothing behind. One writer at a time: an in-process
//! mutex plus an advisory lock on `<root>/writer.lock` for other processes.
//! Readers take an `Arc` snapshot and never block writers.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::anonymize::{looks_like_phone_number, Scrubber};
use crate::model::{
    CollectionMethod, CorpusVersion, Language, Message, Money, Source, Status, SubmissionBatch, UserProfile,
};

const STATE_FILE: &str = "state.json";
const LOCK_FILE: &str = "writer.lock";
const FORMAT_VERSION: u32 = 1;

/// Largest page a query may request.
pub const MAX_PAGE_LIMIT: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("batch {0} already exists")]
    DuplicateBatch(String),
    #[error("message {0} already exists")]
    DuplicateMessage(String),
    #[error("message {message} references unknown profile {profile}")]
    UnknownProfile { message: String, profile: String },
    #[error("profile {0} already exists with different answers")]
    ConflictingProfile(String),
    #[error("batch {0} not found")]
    BatchNotFound(String),
    #[error("batch {id} is already {status}")]
    AlreadyModerated { id: String, status: Status },
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("message {id} violates the anonymization rule: {detail}")]
    NotAnonymized { id: String, detail: String },
    #[error("malformed filter: {0}")]
    MalformedFilter(String),
    #[error("version {new} does not follow {latest}")]
    NonMonotoneVersion { latest: String, new: String },
    #[error("version {version} would shrink the {language} corpus from {before} to {after} messages")]
    ShrinkingCorpus {
        version: String,
        language: Language,
        before: u64,
        after: u64,
    },
    #[error("corrupt store state: {0}")]
    Corrupt(String),
    #[error("store I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::DuplicateBatch(_) => "duplicate_batch",
            StoreError::DuplicateMessage(_) => "duplicate_message",
            StoreError::UnknownProfile { .. } => "unknown_profile",
            StoreError::ConflictingProfile(_) => "conflicting_profile",
            StoreError::BatchNotFound(_) => "batch_not_found",
            StoreError::AlreadyModerated { .. } => "already_moderated",
            StoreError::InvalidBatch(_) => "invalid_batch",
            StoreError::NotAnonymized { .. } => "not_anonymized",
            StoreError::MalformedFilter(_) => "malformed_filter",
            StoreError::NonMonotoneVersion { .. } => "non_monotone_version",
            StoreError::ShrinkingCorpus { .. } => "shrinking_corpus",
            StoreError::Corrupt(_) => "corrupt_store",
            StoreError::Io(_) => "io_error",
        }
    }
}

/// Message filter for browsing queries. Absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageFilter {
    pub language: Option<Language>,
    pub source: Option<Source>,
    pub method: Option<CollectionMethod>,
    pub status: Option<Status>,
    pub profile_id: Option<String>,
}

impl MessageFilter {
    /// Builds a filter from query-string style pairs. Unknown keys and
    /// unknown enum values are rejected.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, StoreError> {
        let mut filter = MessageFilter::default();
        for (key, value) in pairs {
            let bad = |e: crate::model::UnknownLabel| StoreError::MalformedFilter(e.to_string());
            match key {
                "language" => filter.language = Some(value.parse().map_err(bad)?),
                "source" => filter.source = Some(value.parse().map_err(bad)?),
                "method" => filter.method = Some(value.parse().map_err(bad)?),
                "status" => filter.status = Some(value.parse().map_err(bad)?),
                "profile_id" | "profile" => filter.profile_id = Some(value.to_string()),
                other => return Err(StoreError::MalformedFilter(format!("unknown filter key {other:?}"))),
            }
        }
        Ok(filter)
    }

    pub fn matches(&self, m: &Message) -> bool {
        self.language.is_none_or(|l| m.language == l)
            && self.source.is_none_or(|s| m.source == s)
            && self.method.is_none_or(|x| m.collection_method == x)
            && self.status.is_none_or(|s| m.status == s)
            && self
                .profile_id
                .as_ref()
                .is_none_or(|p| m.profile_id.as_ref() == Some(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page { offset: 0, limit: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessagePage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub messages: Vec<Message>,
}

/// Everything the store holds. Cloned for each mutation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusState {
    pub batches: BTreeMap<String, SubmissionBatch>,
    pub messages: BTreeMap<String, Message>,
    pub profiles: BTreeMap<String, UserProfile>,
    pub versions: Vec<CorpusVersion>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: u32,
    state: CorpusState,
}

impl CorpusState {
    pub fn batch(&self, id: &str) -> Option<&SubmissionBatch> {
        self.batches.get(id)
    }

    /// Messages of a batch in submission order.
    pub fn batch_messages(&self, batch: &SubmissionBatch) -> Vec<&Message> {
        batch
            .message_ids
            .iter()
            .filter_map(|id| self.messages.get(id))
            .collect()
    }

    /// Profile linked to a batch through its messages, if any.
    pub fn batch_profile(&self, batch: &SubmissionBatch) -> Option<&UserProfile> {
        batch
            .message_ids
            .iter()
            .filter_map(|id| self.messages.get(id)?.profile_id.as_ref())
            .find_map(|p| self.profiles.get(p))
    }

    pub fn latest_version(&self) -> Option<&CorpusVersion> {
        self.versions.last()
    }

    /// Contributor of the batch a message belongs to.
    pub fn contributor_of(&self, m: &Message) -> Option<&str> {
        self.batches.get(&m.batch_id).map(|b| b.contributor_ref.as_str())
    }

    /// Approved messages, in id order.
    pub fn approved_messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.values().filter(|m| m.status == Status::Approved)
    }

    pub fn pending_batches(&self) -> impl Iterator<Item = &SubmissionBatch> {
        self.batches.values().filter(|b| b.status == Status::Pending)
    }

    /// Filtered messages ordered by (batch received_at, message id).
    pub fn query(&self, filter: &MessageFilter, page: Page) -> Result<MessagePage, StoreError> {
        if page.limit > MAX_PAGE_LIMIT {
            return Err(StoreError::MalformedFilter(format!(
                "limit {} exceeds {MAX_PAGE_LIMIT}",
                page.limit
            )));
        }
        let mut hits: Vec<&Message> = self.messages.values().filter(|m| filter.matches(m)).collect();
        hits.sort_by(|a, b| {
            let ra = self.batches.get(&a.batch_id).map(|x| x.received_at);
            let rb = self.batches.get(&b.batch_id).map(|x| x.received_at);
            ra.cmp(&rb).then_with(|| a.id.cmp(&b.id))
        });
        let total = hits.len();
        let messages = hits.into_iter().skip(page.offset).take(page.limit).cloned().collect();
        Ok(MessagePage {
            total,
            offset: page.offset,
            limit: page.limit,
            messages,
        })
    }

    /// Adds a batch with its messages and optional profile, enforcing every
    /// store invariant. On error `self` may be partially modified; callers
    /// work on a copy.
    pub fn insert_batch(
        &mut self,
        batch: SubmissionBatch,
        messages: Vec<Message>,
        profile: Option<UserProfile>,
    ) -> Result<Vec<String>, StoreError> {
        if self.batches.contains_key(&batch.id) {
            return Err(StoreError::DuplicateBatch(batch.id));
        }
        if batch.status != Status::Pending || batch.reward.is_some() || batch.rejection_reason.is_some() {
            return Err(StoreError::InvalidBatch(
                "new batches must be pending without reward".into(),
            ));
        }
        if messages.is_empty() {
            return Err(StoreError::InvalidBatch("batch has no messages".into()));
        }
        let ids: Vec<String> = messages.iter().map(|m| m.id.clone()).collect();
        if ids != batch.message_ids {
            return Err(StoreError::InvalidBatch(
                "message_ids do not match the supplied messages".into(),
            ));
        }
        if let Some(p) = profile {
            match self.profiles.get(&p.id) {
                Some(existing) if *existing != p => return Err(StoreError::ConflictingProfile(p.id)),
                Some(_) => {}
                None => {
                    self.profiles.insert(p.id.clone(), p);
                }
            }
        }
        let scrubber = Scrubber::standard();
        for m in messages {
            if m.batch_id != batch.id {
                return Err(StoreError::InvalidBatch(format!(
                    "message {} belongs to batch {}",
                    m.id, m.batch_id
                )));
            }
            if m.status != Status::Pending {
                return Err(StoreError::InvalidBatch(format!("message {} is not pending", m.id)));
            }
            if m.collection_method != batch.collection_method || m.source != batch.source {
                return Err(StoreError::InvalidBatch(format!(
                    "message {} disagrees with batch method/source",
                    m.id
                )));
            }
            if m.body.contains('\0') {
                return Err(StoreError::InvalidBatch(format!("message {} body contains NUL", m.id)));
            }
            if let Some(r) = scrubber.residuals(&m.body).first() {
                return Err(StoreError::NotAnonymized {
                    id: m.id,
                    detail: r.to_string(),
                });
            }
            for token in [&m.sender_token, &m.receiver_token].into_iter().flatten() {
                if looks_like_phone_number(token) {
                    return Err(StoreError::NotAnonymized {
                        id: m.id.clone(),
                        detail: "endpoint token is a phone number".into(),
                    });
                }
            }
            if let Some(p) = &m.profile_id {
                if !self.profiles.contains_key(p) {
                    return Err(StoreError::UnknownProfile {
                        message: m.id,
                        profile: p.clone(),
                    });
                }
            }
            if self.messages.contains_key(&m.id) {
                return Err(StoreError::DuplicateMessage(m.id));
            }
            self.messages.insert(m.id.clone(), m);
        }
        self.batches.insert(batch.id.clone(), batch);
        Ok(ids)
    }

    /// Moves a pending batch to a terminal state. A reward is recorded iff
    /// the batch is approved.
    pub fn decide_batch(
        &mut self,
        batch_id: &str,
        status: Status,
        reason: Option<String>,
        reward: Option<Money>,
    ) -> Result<SubmissionBatch, StoreError> {
        let batch = self
            .batches
            .get_mut(batch_id)
            .ok_or_else(|| StoreError::BatchNotFound(batch_id.to_string()))?;
        if batch.status != Status::Pending {
            return Err(StoreError::AlreadyModerated {
                id: batch_id.to_string(),
                status: batch.status,
            });
        }
        match (status, &reward) {
            (Status::Approved, Some(_)) | (Status::Rejected, None) => {}
            (Status::Pending, _) => return Err(StoreError::InvalidBatch("cannot move a batch back to pending".into())),
            _ => return Err(StoreError::InvalidBatch("reward must be present iff approved".into())),
        }
        batch.status = status;
        batch.rejection_reason = if status == Status::Rejected { reason } else { None };
        batch.reward = reward;
        let batch = batch.clone();
        for id in &batch.message_ids {
            if let Some(m) = self.messages.get_mut(id) {
                m.status = status;
            }
        }
        Ok(batch)
    }

    /// Appends a release record after checking that ids strictly increase
    /// and per-language counts never shrink.
    pub fn push_version(&mut self, version: CorpusVersion) -> Result<(), StoreError> {
        if let Some(latest) = self.versions.last() {
            if version.version_id <= latest.version_id {
                return Err(StoreError::NonMonotoneVersion {
                    latest: latest.version_id.to_string(),
                    new: version.version_id.to_string(),
                });
            }
            for (language, before, after) in [
                (Language::English, latest.message_count_en, version.message_count_en),
                (Language::Chinese, latest.message_count_zh, version.message_count_zh),
            ] {
                if after < before {
                    return Err(StoreError::ShrinkingCorpus {
                        version: version.version_id.to_string(),
                        language,
                        before,
                        after,
                    });
                }
            }
        }
        self.versions.push(version);
        Ok(())
    }
}

/// Handle on an open store directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    state: RwLock<Arc<CorpusState>>,
    writer: Mutex<()>,
}

impl Store {
    /// Opens (creating if needed) the store at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let state = read_state(&root)?;
        Ok(Store {
            root,
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory holding published release artifacts.
    pub fn releases_dir(&self) -> PathBuf {
        self.root.join("releases")
    }

    /// Consistent view of committed state.
    pub fn snapshot(&self) -> Arc<CorpusState> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Runs `f` against a private copy of the latest persisted state and
    /// commits the copy only if `f` succeeds.
    pub fn transact<T, E>(&self, f: impl FnOnce(&mut CorpusState) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join(LOCK_FILE))
            .map_err(StoreError::from)?;
        lock.lock().map_err(StoreError::from)?;
        // Another process may have committed since this handle last looked.
        let mut working = read_state(&self.root)?;
        let out = f(&mut working)?;
        write_state(&self.root, &working)?;
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(working);
        drop(lock);
        Ok(out)
    }

    /// Stores a batch atomically. Re-putting an existing batch id fails.
    pub fn put_batch(
        &self,
        batch: SubmissionBatch,
        messages: Vec<Message>,
        profile: Option<UserProfile>,
    ) -> Result<Vec<String>, StoreError> {
        self.transact(|state| state.insert_batch(batch, messages, profile))
    }

    pub fn query_messages(&self, filter: &MessageFilter, page: Page) -> Result<MessagePage, StoreError> {
        self.snapshot().query(filter, page)
    }

    pub fn register_version(&self, version: CorpusVersion) -> Result<(), StoreError> {
        self.transact(|state| state.push_version(version))
    }
}

fn read_state(root: &Path) -> Result<CorpusState, StoreError> {
    let path = root.join(STATE_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(CorpusState::default()),
        Err(e) => return Err(e.into()),
    };
    let file: StateFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    if file.format != FORMAT_VERSION {
        return Err(StoreError::Corrupt(format!("unsupported state format {}", file.format)));
    }
    Ok(file.state)
}

fn write_state(root: &Path, state: &CorpusState) -> Result<(), StoreError> {
    let tmp = root.join(format!("{STATE_FILE}.tmp"));
    let file = StateFile {
        format: FORMAT_VERSION,
        state: state.clone(),
    };
    let bytes = serde_json::to_vec(&file).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, root.join(STATE_FILE))?;
    Ok(())
}
