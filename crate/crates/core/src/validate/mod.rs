//! Quality gate: language identification, duplicate and blocklist checks,
//! per-batch recommendations, moderation decisions and approval rates.

mod language;
mod similarity;

pub use language::{detect_language, is_cjk, is_latin_letter, script_counts};
pub use similarity::{
    find_exact_duplicates, find_near_duplicates, normalize_body, shingles, similarity, ExactMatch, InvalidThreshold,
    MatchOrigin, NearMatch, ReferenceIndex, Shingle,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::anonymize::{normalize_emoticons, scrub_body};
use crate::model::{labeled_enum, CollectionMethod, Language, Message, Money, Source, Status, SubmissionBatch};
use crate::rewards::{compute_reward, RewardOutcome, RewardScheme};
use crate::store::{CorpusState, Store, StoreError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("cannot read policy file: {0}")]
    Io(String),
}

/// Moderation thresholds, read from a `key=value` policy file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Policy {
    /// Reject when the blocklist-hit fraction exceeds this.
    pub blocklist_reject_frac: f64,
    /// Review when the duplicate fraction reaches this.
    pub neardup_review_frac: f64,
    pub neardup_theta: f64,
    /// Approval requires a linked demographic profile.
    pub require_profile: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            blocklist_reject_frac: 0.3,
            neardup_review_frac: 0.2,
            neardup_theta: 0.8,
            require_profile: true,
        }
    }
}

impl Policy {
    /// Parses policy text. Missing keys keep their defaults; unknown keys
    /// are errors. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut policy = Policy::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| PolicyError::Syntax { line: i + 1, detail };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let fraction = |lo_open: bool| -> Result<f64, PolicyError> {
                let v: f64 = value.parse().map_err(|_| err(format!("{key}: not a number")))?;
                let ok = if lo_open {
                    v > 0.0 && v <= 1.0
                } else {
                    (0.0..=1.0).contains(&v)
                };
                if !ok {
                    return Err(err(format!("{key}: {v} out of range")));
                }
                Ok(v)
            };
            match key {
                "blocklist_reject_frac" => policy.blocklist_reject_frac = fraction(false)?,
                "neardup_review_frac" => policy.neardup_review_frac = fraction(false)?,
                "neardup_theta" => policy.neardup_theta = fraction(true)?,
                "require_profile" => {
                    policy.require_profile = match value {
                        "true" | "yes" | "1" => true,
                        "false" | "no" | "0" => false,
                        _ => return Err(err(format!("require_profile: expected true or false, got {value:?}"))),
                    }
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        format!(
            "blocklist_reject_frac={}\nneardup_review_frac={}\nneardup_theta={}\nrequire_profile={}\n",
            self.blocklist_reject_frac, self.neardup_review_frac, self.neardup_theta, self.require_profile
        )
    }
}

/// Known public messages (jokes, blessings, quotes), one per line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Blocklist {
    entries: Vec<String>,
}

impl Blocklist {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/blocklist.txt"))
    }

    /// Blank lines are skipped; every other line is one entry.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Blocklist { entries }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds the entries to an index, anonymized the same way as submitted
    /// bodies so that they compare like for like.
    pub fn index_into(&self, index: &mut ReferenceIndex) {
        for (i, e) in self.entries.iter().enumerate() {
            index.add(
                MatchOrigin::Blocklist,
                format!("blocklist:{}", i + 1),
                &scrub_body(&normalize_emoticons(e)),
            );
        }
    }
}

labeled_enum! {
    pub enum Recommendation {
        Approve => "approve",
        Reject => "reject",
        Review => "review",
    }
}

labeled_enum! {
    pub enum Decision {
        Approve => "approve",
        Reject => "reject",
    }
}

labeled_enum! {
    pub enum FlagKind {
        Blocklist => "blocklist",
        ExactDuplicate => "exact_duplicate",
        NearDuplicate => "near_duplicate",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub message_id: String,
    pub kind: FlagKind,
    pub matched_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub batch_id: String,
    pub batch_size: usize,
    pub language_counts: BTreeMap<Language, usize>,
    /// Messages identical to an earlier corpus message.
    pub exact_dup_count: usize,
    /// Messages similar (but not identical) to an earlier corpus message.
    pub near_dup_count: usize,
    /// Messages identical or similar to a blocklist entry.
    pub blocklist_hit_count: usize,
    pub recommendation: Recommendation,
    pub reasons: Vec<String>,
    pub flagged: Vec<Flag>,
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Assesses `messages` against `corpus` (earlier, non-rejected messages)
/// and the blocklist. Messages of the batch are also compared with the
/// ones before them.
pub fn assess<'a>(
    batch_id: &str,
    messages: &[&Message],
    corpus: impl IntoIterator<Item = &'a Message>,
    blocklist: &Blocklist,
    policy: &Policy,
) -> QualityReport {
    let mut blocked = ReferenceIndex::new();
    blocklist.index_into(&mut blocked);
    let mut seen = ReferenceIndex::new();
    for m in corpus {
        seen.add(MatchOrigin::Corpus, m.id.clone(), &m.body);
    }
    let theta = policy.neardup_theta;
    let mut report = QualityReport {
        batch_id: batch_id.to_string(),
        batch_size: messages.len(),
        language_counts: BTreeMap::new(),
        exact_dup_count: 0,
        near_dup_count: 0,
        blocklist_hit_count: 0,
        recommendation: Recommendation::Approve,
        reasons: Vec::new(),
        flagged: Vec::new(),
    };
    let flag = |m: &Message, kind, matched: &str, score| Flag {
        message_id: m.id.clone(),
        kind,
        matched_id: matched.to_string(),
        score,
    };
    for m in messages {
        *report.language_counts.entry(m.language).or_default() += 1;
        let near_block = blocked.near_matches(&m.body, theta).expect("policy theta validated");
        if let Some(hit) = near_block.first() {
            report.blocklist_hit_count += 1;
            report.flagged.push(flag(m, FlagKind::Blocklist, &hit.id, hit.score));
        }
        if let Some((_, id)) = seen.exact_matches(&m.body).first() {
            report.exact_dup_count += 1;
            report.flagged.push(flag(m, FlagKind::ExactDuplicate, id, 1.0));
        } else if let Some(hit) = seen
            .near_matches(&m.body, theta)
            .expect("policy theta validated")
            .first()
        {
            report.near_dup_count += 1;
            report
                .flagged
                .push(flag(m, FlagKind::NearDuplicate, &hit.id, hit.score));
        }
        seen.add(MatchOrigin::Corpus, m.id.clone(), &m.body);
    }
    let size = messages.len().max(1) as f64;
    let block_frac = report.blocklist_hit_count as f64 / size;
    let dup_frac = (report.exact_dup_count + report.near_dup_count) as f64 / size;
    if block_frac > policy.blocklist_reject_frac {
        report.recommendation = Recommendation::Reject;
        let ids: Vec<&str> = report
            .flagged
            .iter()
            .filter(|f| f.kind == FlagKind::Blocklist)
            .map(|f| f.message_id.as_str())
            .collect();
        report.reasons.push(format!(
            "{} of {} messages match known public messages ({} > {}): {}",
            report.blocklist_hit_count,
            messages.len(),
            pct(block_frac),
            pct(policy.blocklist_reject_frac),
            ids.join(", ")
        ));
    } else if messages.is_empty() {
        report.recommendation = Recommendation::Review;
        report.reasons.push("batch has no messages".into());
    }
    if report.recommendation == Recommendation::Approve && dup_frac >= policy.neardup_review_frac && dup_frac > 0.0 {
        report.recommendation = Recommendation::Review;
        report.reasons.push(format!(
            "{} exact and {} near duplicates of {} messages ({} >= {} at similarity {})",
            report.exact_dup_count,
            report.near_dup_count,
            messages.len(),
            pct(dup_frac),
            pct(policy.neardup_review_frac),
            theta
        ));
    }
    report
}

/// Report for a stored batch. The comparison corpus is every non-rejected
/// message outside the batch.
pub fn quality_report(
    state: &CorpusState,
    batch_id: &str,
    blocklist: &Blocklist,
    policy: &Policy,
) -> Result<QualityReport, StoreError> {
    let batch = state
        .batch(batch_id)
        .ok_or_else(|| StoreError::BatchNotFound(batch_id.to_string()))?;
    let messages = state.batch_messages(batch);
    let corpus = state
        .messages
        .values()
        .filter(|m| m.batch_id != batch.id && m.status != Status::Rejected);
    Ok(assess(&batch.id, &messages, corpus, blocklist, policy))
}

#[derive(Debug, thiserror::Error)]
pub enum ModerationError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("batch {0} has no demographic profile; approval requires one")]
    MissingProfile(String),
}

impl ModerationError {
    pub fn code(&self) -> &'static str {
        match self {
            ModerationError::Store(e) => e.code(),
            ModerationError::MissingProfile(_) => "missing_profile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModerationOutcome {
    pub batch: SubmissionBatch,
    /// Reward computation on approval, absent on rejection or when no
    /// scheme was given.
    pub reward: Option<RewardOutcome>,
}

/// Applies a decision inside an open transaction.
pub fn moderate_state(
    state: &mut CorpusState,
    batch_id: &str,
    decision: Decision,
    reason: Option<String>,
    scheme: Option<&RewardScheme>,
    policy: &Policy,
) -> Result<ModerationOutcome, ModerationError> {
    let batch = state
        .batch(batch_id)
        .ok_or_else(|| StoreError::BatchNotFound(batch_id.to_string()))?;
    if batch.status != Status::Pending {
        return Err(StoreError::AlreadyModerated {
            id: batch_id.to_string(),
            status: batch.status,
        }
        .into());
    }
    match decision {
        Decision::Reject => {
            let batch = state.decide_batch(batch_id, Status::Rejected, reason, None)?;
            Ok(ModerationOutcome { batch, reward: None })
        }
        Decision::Approve => {
            if policy.require_profile && state.batch_profile(batch).is_none() {
                return Err(ModerationError::MissingProfile(batch_id.to_string()));
            }
            let outcome = scheme.map(|s| compute_reward(s, batch.message_ids.len() as u64));
            let amount = outcome.map_or(Money::zero(crate::model::Currency::Usd), |o| o.amount);
            let batch = state.decide_batch(batch_id, Status::Approved, None, Some(amount))?;
            Ok(ModerationOutcome { batch, reward: outcome })
        }
    }
}

/// Approves or rejects a pending batch. Approval records the scheme's
/// reward for the batch size; without a scheme a zero reward is recorded.
pub fn moderate(
    store: &Store,
    batch_id: &str,
    decision: Decision,
    reason: Option<String>,
    scheme: Option<&RewardScheme>,
    policy: &Policy,
) -> Result<ModerationOutcome, ModerationError> {
    store.transact(|state| moderate_state(state, batch_id, decision, reason, scheme, policy))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApprovalCell {
    pub method: CollectionMethod,
    pub source: Source,
    pub approved: u64,
    pub rejected: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApprovalTable {
    /// Only cells with at least one decided batch, in (method, source) order.
    pub cells: Vec<ApprovalCell>,
    pub approved: u64,
    pub rejected: u64,
    pub overall: Option<f64>,
}

impl ApprovalTable {
    pub fn cell(&self, method: CollectionMethod, source: Source) -> Option<&ApprovalCell> {
        self.cells.iter().find(|c| c.method == method && c.source == source)
    }
}

/// Approved / (approved + rejected) over batches, per method and source.
/// Pending batches are ignored.
pub fn approval_rates_of<'a>(batches: impl IntoIterator<Item = &'a SubmissionBatch>) -> ApprovalTable {
    let mut counts: BTreeMap<(CollectionMethod, Source), (u64, u64)> = BTreeMap::new();
    for b in batches {
        let cell = counts.entry((b.collection_method, b.source)).or_default();
        match b.status {
            Status::Approved => cell.0 += 1,
            Status::Rejected => cell.1 += 1,
            Status::Pending => {}
        }
    }
    let cells: Vec<ApprovalCell> = counts
        .into_iter()
        .filter(|(_, (a, r))| a + r > 0)
        .map(|((method, source), (approved, rejected))| ApprovalCell {
            method,
            source,
            approved,
            rejected,
            rate: approved as f64 / (approved + rejected) as f64,
        })
        .collect();
    let approved = cells.iter().map(|c| c.approved).sum();
    let rejected = cells.iter().map(|c| c.rejected).sum();
    let overall = (approved + rejected > 0).then(|| approved as f64 / (approved + rejected) as f64);
    ApprovalTable {
        cells,
        approved,
        rejected,
        overall,
    }
}

pub fn approval_rates(state: &CorpusState) -> ApprovalTable {
    approval_rates_of(state.batches.values())
}
