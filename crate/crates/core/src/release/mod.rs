//! Monthly releases: XML dump, SQL dump and statistics report, each listed
//! with its SHA-256 digest in `MANIFEST-<version>`.
//!
//! Published files live in `<store>/releases/<version>/` and are never
//! rewritten.

pub mod sql;
pub mod xml;

pub use sql::{count_sql_rows, render_sql};
pub use xml::{parse_release_xml, render_xml, ParsedRelease, XmlSchemaError};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::anonymize::{is_pseudonym_token, looks_like_phone_number, Scrubber};
use crate::model::{labeled_enum, CollectionMethod, CorpusVersion, Language, Source, Status, UserProfile, VersionId};
use crate::stats::stats_report;
use crate::store::{CorpusState, Store, StoreError};

labeled_enum! {
    pub enum ArtifactKind {
        XmlDump => "xml_dump",
        SqlDump => "sql_dump",
        StatsReport => "stats_report",
    }
}

impl ArtifactKind {
    pub fn file_name(self, version: VersionId) -> String {
        match self {
            ArtifactKind::XmlDump => format!("corpus-{version}.xml"),
            ArtifactKind::SqlDump => format!("corpus-{version}.sql"),
            ArtifactKind::StatsReport => format!("stats-{version}.json"),
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ArtifactKind::XmlDump => "application/xml; charset=utf-8",
            ArtifactKind::SqlDump => "application/sql; charset=utf-8",
            ArtifactKind::StatsReport => "application/json",
        }
    }
}

pub fn manifest_name(version: VersionId) -> String {
    format!("MANIFEST-{version}")
}

#[derive(Debug, thiserror::Error)]
pub enum ReleaseError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("release {0} is already published")]
    AlreadyPublished(VersionId),
    #[error("release {0} not found")]
    NotFound(String),
    #[error("malformed release: {0}")]
    Malformed(String),
    #[error("XML dump: {0}")]
    Xml(#[from] XmlSchemaError),
    #[error("cannot compare release {from} with earlier release {to}")]
    Incomparable { from: VersionId, to: VersionId },
    #[error("release I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl ReleaseError {
    pub fn code(&self) -> &'static str {
        match self {
            ReleaseError::Store(e) => e.code(),
            ReleaseError::AlreadyPublished(_) => "already_published",
            ReleaseError::NotFound(_) => "release_not_found",
            ReleaseError::Malformed(_) => "malformed_release",
            ReleaseError::Xml(_) => "xml_schema",
            ReleaseError::Incomparable { .. } => "incomparable_versions",
            ReleaseError::Io(_) => "io_error",
        }
    }
}

/// A message as published: everything except moderation state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReleasedMessage {
    pub id: String,
    pub batch_id: String,
    pub body: String,
    pub language: Language,
    pub method: CollectionMethod,
    pub source: Source,
    pub profile_id: Option<String>,
    pub sent_at: Option<DateTime<FixedOffset>>,
    pub sender_token: Option<String>,
    pub receiver_token: Option<String>,
}

/// Everything a release publishes, in dump order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReleaseContent {
    pub version: VersionId,
    pub date: DateTime<Utc>,
    /// Sorted by id.
    pub messages: Vec<ReleasedMessage>,
    /// Profiles referenced by released messages, sorted by id.
    pub profiles: Vec<UserProfile>,
}

impl ReleaseContent {
    /// Approved messages of `state`. The release date is the latest receipt
    /// time among them, or the first of the month for an empty release, so
    /// the content depends only on the snapshot and the version id.
    pub fn from_state(state: &CorpusState, version: VersionId) -> Self {
        let messages: Vec<ReleasedMessage> = state
            .messages
            .values()
            .filter(|m| m.status == Status::Approved)
            .map(|m| ReleasedMessage {
                id: m.id.clone(),
                batch_id: m.batch_id.clone(),
                body: m.body.clone(),
                language: m.language,
                method: m.collection_method,
                source: m.source,
                profile_id: m.profile_id.clone(),
                sent_at: m.sent_at,
                sender_token: m.sender_token.clone(),
                receiver_token: m.receiver_token.clone(),
            })
            .collect();
        let referenced: BTreeSet<&str> = messages.iter().filter_map(|m| m.profile_id.as_deref()).collect();
        let profiles = referenced
            .iter()
            .filter_map(|id| state.profiles.get(*id).cloned())
            .collect();
        let date = messages
            .iter()
            .filter_map(|m| state.batches.get(&m.batch_id).map(|b| b.received_at))
            .max()
            .unwrap_or_else(|| version.month_start());
        ReleaseContent {
            version,
            date,
            messages,
            profiles,
        }
    }

    pub fn count(&self, language: Language) -> u64 {
        self.messages.iter().filter(|m| m.language == language).count() as u64
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseArtifact {
    pub kind: ArtifactKind,
    pub name: String,
    pub bytes: Vec<u8>,
    pub digest: String,
}

impl ReleaseArtifact {
    fn new(kind: ArtifactKind, version: VersionId, bytes: Vec<u8>) -> Self {
        ReleaseArtifact {
            kind,
            name: kind.file_name(version),
            digest: sha256_hex(&bytes),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltRelease {
    pub version: CorpusVersion,
    pub artifacts: Vec<ReleaseArtifact>,
    pub manifest: String,
}

impl BuiltRelease {
    pub fn artifact(&self, kind: ArtifactKind) -> &ReleaseArtifact {
        self.artifacts.iter().find(|a| a.kind == kind).expect("all kinds built")
    }
}

/// `sha256sum`-style lines, sorted by file name.
pub fn render_manifest(checksums: &BTreeMap<String, String>) -> String {
    checksums
        .iter()
        .map(|(name, digest)| format!("{digest}  {name}\n"))
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, ReleaseError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (digest, name) = line
            .split_once("  ")
            .ok_or_else(|| ReleaseError::Malformed(format!("manifest line {}: expected `<digest>  <file>`", i + 1)))?;
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ReleaseError::Malformed(format!("manifest line {}: bad digest", i + 1)));
        }
        out.insert(name.to_string(), digest.to_ascii_lowercase());
    }
    Ok(out)
}

/// Builds all artifacts for `version` from the approved part of `state`.
/// Fails if the version would not extend the release history.
pub fn build_release(state: &CorpusState, version: VersionId) -> Result<BuiltRelease, ReleaseError> {
    let content = ReleaseContent::from_state(state, version);
    let (en, zh) = (content.count(Language::English), content.count(Language::Chinese));
    let history: Vec<CorpusVersion> = state.versions.clone();
    let mut report = stats_report(state);
    report.version = Some(version);
    let artifacts = vec![
        ReleaseArtifact::new(ArtifactKind::XmlDump, version, render_xml(&content).into_bytes()),
        ReleaseArtifact::new(
            ArtifactKind::SqlDump,
            version,
            render_sql(&content, &history, en, zh).into_bytes(),
        ),
        ReleaseArtifact::new(ArtifactKind::StatsReport, version, report.to_json().into_bytes()),
    ];
    let artifact_checksums: BTreeMap<String, String> =
        artifacts.iter().map(|a| (a.name.clone(), a.digest.clone())).collect();
    let record = CorpusVersion {
        version_id: version,
        created_at: content.date,
        message_count_en: en,
        message_count_zh: zh,
        artifact_checksums,
    };
    // Same rules as registration, checked before anything is written.
    let mut probe = CorpusState {
        versions: history,
        ..CorpusState::default()
    };
    probe.push_version(record.clone())?;
    Ok(BuiltRelease {
        manifest: render_manifest(&record.artifact_checksums),
        version: record,
        artifacts,
    })
}

pub fn release_dir(store_root: &Path, version: VersionId) -> PathBuf {
    store_root.join("releases").join(version.to_string())
}

/// Builds, writes and registers a release in one store transaction.
pub fn publish_release(store: &Store, version: VersionId) -> Result<BuiltRelease, ReleaseError> {
    store.transact(|state| {
        let built = build_release(state, version)?;
        let dir = release_dir(store.root(), version);
        if dir.exists() {
            return Err(ReleaseError::AlreadyPublished(version));
        }
        let parent = store.releases_dir();
        fs::create_dir_all(&parent)?;
        let staging = parent.join(format!(".staging-{version}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        for a in &built.artifacts {
            fs::write(staging.join(&a.name), &a.bytes)?;
        }
        fs::write(staging.join(manifest_name(version)), &built.manifest)?;
        fs::rename(&staging, &dir)?;
        if let Err(e) = state.push_version(built.version.clone()) {
            let _ = fs::remove_dir_all(&dir);
            return Err(e.into());
        }
        Ok(built)
    })
}

/// Resolves an artifact by kind label, file name or `manifest`.
pub fn artifact_file_name(version: VersionId, artifact: &str) -> Option<String> {
    if artifact == "manifest" || artifact == manifest_name(version) {
        return Some(manifest_name(version));
    }
    if let Ok(kind) = artifact.parse::<ArtifactKind>() {
        return Some(kind.file_name(version));
    }
    ArtifactKind::ALL
        .iter()
        .map(|k| k.file_name(version))
        .find(|n| n == artifact)
}

pub fn read_artifact(store_root: &Path, version: VersionId, artifact: &str) -> Result<Vec<u8>, ReleaseError> {
    let name =
        artifact_file_name(version, artifact).ok_or_else(|| ReleaseError::NotFound(format!("{version}/{artifact}")))?;
    let path = release_dir(store_root, version).join(&name);
    fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ReleaseError::NotFound(format!("{version}/{name}")),
        _ => e.into(),
    })
}

pub fn load_release(store_root: &Path, version: VersionId) -> Result<ParsedRelease, ReleaseError> {
    Ok(parse_release_xml(&read_artifact(store_root, version, "xml_dump")?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub version: VersionId,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn push(&mut self, name: &'static str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            ok,
            detail: detail.into(),
        });
    }
}

/// Re-reads a published release: manifest digests, registration record,
/// XML round trip, SQL row counts, anonymization of every body and token,
/// and the statistics document.
pub fn verify_release(store: &Store, version: VersionId) -> Result<VerifyReport, ReleaseError> {
    let state = store.snapshot();
    let registered = state.versions.iter().find(|v| v.version_id == version);
    verify_release_dir(&release_dir(store.root(), version), version, registered)
}

pub fn verify_release_dir(
    dir: &Path,
    version: VersionId,
    registered: Option<&CorpusVersion>,
) -> Result<VerifyReport, ReleaseError> {
    if !dir.is_dir() {
        return Err(ReleaseError::NotFound(version.to_string()));
    }
    let mut report = VerifyReport {
        version,
        checks: Vec::new(),
    };
    let manifest = match fs::read_to_string(dir.join(manifest_name(version))) {
        Ok(text) => parse_manifest(&text)?,
        Err(e) => {
            report.push("manifest", false, e.to_string());
            return Ok(report);
        }
    };
    let expected: BTreeSet<String> = ArtifactKind::ALL.iter().map(|k| k.file_name(version)).collect();
    let listed: BTreeSet<String> = manifest.keys().cloned().collect();
    report.push(
        "manifest",
        listed == expected,
        format!("{} artifacts listed", listed.len()),
    );

    let mut files: BTreeMap<ArtifactKind, Vec<u8>> = BTreeMap::new();
    let mut bad = Vec::new();
    for kind in ArtifactKind::ALL {
        let name = kind.file_name(version);
        match fs::read(dir.join(&name)) {
            Ok(bytes) => {
                if manifest.get(&name) != Some(&sha256_hex(&bytes)) {
                    bad.push(name);
                }
                files.insert(*kind, bytes);
            }
            Err(_) => bad.push(format!("{name} (missing)")),
        }
    }
    report.push(
        "digests",
        bad.is_empty(),
        if bad.is_empty() {
            "all digests match".to_string()
        } else {
            format!("mismatch: {}", bad.join(", "))
        },
    );
    match registered {
        Some(v) => report.push(
            "registered",
            v.artifact_checksums == manifest,
            "store record matches manifest",
        ),
        None => report.push("registered", false, "version not registered in the store"),
    }

    let Some(xml_bytes) = files.get(&ArtifactKind::XmlDump) else {
        return Ok(report);
    };
    let parsed = match parse_release_xml(xml_bytes) {
        Ok(p) => p,
        Err(e) => {
            report.push("xml_round_trip", false, e.to_string());
            return Ok(report);
        }
    };
    let content = &parsed.content;
    let rerendered = render_xml(content);
    report.push(
        "xml_round_trip",
        rerendered.as_bytes() == xml_bytes.as_slice() && parsed.warnings.is_empty() && content.version == version,
        format!(
            "{} messages, {} profiles",
            content.messages.len(),
            content.profiles.len()
        ),
    );
    if let Some(v) = registered {
        let (en, zh) = (content.count(Language::English), content.count(Language::Chinese));
        report.push(
            "counts",
            v.message_count_en == en && v.message_count_zh == zh,
            format!("english={en} chinese={zh}"),
        );
    }
    if let Some(sql) = files.get(&ArtifactKind::SqlDump) {
        let counts = count_sql_rows(&String::from_utf8_lossy(sql));
        let (m, p) = (
            counts.get("messages").copied().unwrap_or(0),
            counts.get("profiles").copied().unwrap_or(0),
        );
        report.push(
            "sql_counts",
            m == content.messages.len() && p == content.profiles.len(),
            format!("messages={m} profiles={p}"),
        );
    }
    let scrubber = Scrubber::standard();
    let dirty: Vec<&str> = content
        .messages
        .iter()
        .filter(|m| !scrubber.is_clean(&m.body) || scrubber.scrub(&m.body) != m.body)
        .map(|m| m.id.as_str())
        .collect();
    report.push(
        "residual_pii",
        dirty.is_empty(),
        if dirty.is_empty() {
            "all bodies clean".to_string()
        } else {
            format!("dirty: {}", dirty.join(", "))
        },
    );
    let bad_tokens = content
        .messages
        .iter()
        .flat_map(|m| [&m.sender_token, &m.receiver_token])
        .flatten()
        .filter(|t| !is_pseudonym_token(t) || looks_like_phone_number(t))
        .count();
    report.push("tokens", bad_tokens == 0, format!("{bad_tokens} malformed tokens"));
    if let Some(stats) = files.get(&ArtifactKind::StatsReport) {
        let ok = serde_json::from_slice::<serde_json::Value>(stats)
            .ok()
            .and_then(|v| {
                let langs = v.get("summary")?.get("languages")?.as_array()?.clone();
                let count = |name: &str| {
                    langs
                        .iter()
                        .find(|l| l.get("language").and_then(|x| x.as_str()) == Some(name))
                        .and_then(|l| l.get("messages")?.as_u64())
                };
                Some(
                    count("english") == Some(content.count(Language::English))
                        && count("chinese") == Some(content.count(Language::Chinese)),
                )
            })
            .unwrap_or(false);
        report.push("stats", ok, "summary counts match the XML dump");
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Changelog {
    pub from: VersionId,
    pub to: VersionId,
    pub added_messages: Vec<String>,
    pub removed_messages: Vec<String>,
    pub added_profiles: Vec<String>,
    pub count_deltas: BTreeMap<Language, i64>,
}

impl Changelog {
    pub fn is_empty(&self) -> bool {
        self.added_messages.is_empty()
            && self.removed_messages.is_empty()
            && self.added_profiles.is_empty()
            && self.count_deltas.values().all(|d| *d == 0)
    }
}

/// Differences between two releases, `old` no later than `new`.
pub fn diff_releases(old: &ReleaseContent, new: &ReleaseContent) -> Result<Changelog, ReleaseError> {
    if old.version > new.version {
        return Err(ReleaseError::Incomparable {
            from: old.version,
            to: new.version,
        });
    }
    let ids = |c: &ReleaseContent| -> BTreeSet<String> { c.messages.iter().map(|m| m.id.clone()).collect() };
    let (a, b) = (ids(old), ids(new));
    let pa: BTreeSet<&str> = old.profiles.iter().map(|p| p.id.as_str()).collect();
    let count_deltas = Language::ALL
        .iter()
        .map(|l| (*l, new.count(*l) as i64 - old.count(*l) as i64))
        .collect();
    Ok(Changelog {
        from: old.version,
        to: new.version,
        added_messages: b.difference(&a).cloned().collect(),
        removed_messages: a.difference(&b).cloned().collect(),
        added_profiles: new
            .profiles
            .iter()
            .filter(|p| !pa.contains(p.id.as_str()))
            .map(|p| p.id.clone())
            .collect(),
        count_deltas,
    })
}
