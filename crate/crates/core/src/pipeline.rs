//! Submission intake shared by the CLI and the HTTP service: detect the
//! channel format, parse, check the upload code, anonymize, store as
//! pending and report on quality. The raw payload is dropped afterwards.

use chrono::{SubsecRound, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::anonymize::{anonymize_message, MessageContext, PseudonymError};
use crate::ingest::{
    detect_format, parse_export, parse_transcription, parse_upload_draft, verify_upload, DetectedFormat, ExportFormat,
    IngestError, RawMessage, TranscriptionBounds,
};
use crate::keys::Keys;
use crate::model::{CollectionMethod, Source, Status, SubmissionBatch, UserProfile};
use crate::store::{Store, StoreError};
use crate::validate::{quality_report, Blocklist, Policy, QualityReport};

/// One contributor submission as received.
#[derive(Debug, Clone)]
pub struct Submission {
    pub method: CollectionMethod,
    pub source: Source,
    pub contributor: String,
    pub payload: Vec<u8>,
    /// Survey answers sent with the submission. An empty id is replaced by
    /// one derived from the source and contributor.
    pub profile: Option<UserProfile>,
    /// Link to a profile already in the store.
    pub profile_id: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct IntakeConfig<'a> {
    pub keys: &'a Keys,
    pub bounds: TranscriptionBounds,
    pub blocklist: &'a Blocklist,
    pub policy: &'a Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitOutcome {
    pub batch_id: String,
    pub detected_format: DetectedFormat,
    pub message_ids: Vec<String>,
    pub profile_id: Option<String>,
    pub warnings: Vec<String>,
    pub report: QualityReport,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("payload format not recognized (detect_format=unknown)")]
    UnknownFormat,
    #[error("declared method {declared} but payload is {detected}", detected = .detected.as_str())]
    MethodMismatch {
        declared: CollectionMethod,
        detected: DetectedFormat,
    },
    #[error("{error} (detect_format={})", .detected.as_str())]
    Parse {
        detected: DetectedFormat,
        error: IngestError,
    },
    #[error("upload verification code does not match")]
    BadUploadCode,
    #[error("contributor reference must not be empty")]
    MissingContributor,
    #[error("cannot pseudonymize endpoint: {0}")]
    Pseudonym(#[from] PseudonymError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::UnknownFormat => "unknown_format",
            SubmitError::MethodMismatch { .. } => "method_mismatch",
            SubmitError::Parse { error, .. } => error.code(),
            SubmitError::BadUploadCode => "bad_upload_code",
            SubmitError::MissingContributor => "missing_contributor",
            SubmitError::Pseudonym(_) => "bad_phone_number",
            SubmitError::Store(e) => e.code(),
        }
    }
}

fn method_of(format: DetectedFormat) -> Option<CollectionMethod> {
    match format {
        DetectedFormat::Transcription => Some(CollectionMethod::Transcription),
        DetectedFormat::ExportCsv | DetectedFormat::ExportXml => Some(CollectionMethod::Export),
        DetectedFormat::UploadDraft => Some(CollectionMethod::Upload),
        DetectedFormat::Unknown => None,
    }
}

/// Profile id used when survey answers arrive without one.
pub fn derived_profile_id(source: Source, contributor: &str) -> String {
    let digest = Sha256::digest(format!("{source}\n{contributor}").as_bytes());
    format!("u{}", &hex::encode(digest)[..12])
}

pub fn new_batch_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()[..12].to_string()
}

/// Parses a payload for the declared method. Returns the raw messages and
/// per-record warnings.
pub fn parse_payload(
    payload: &[u8],
    declared: CollectionMethod,
    keys: &Keys,
    bounds: &TranscriptionBounds,
) -> Result<(DetectedFormat, Vec<RawMessage>, Vec<String>), SubmitError> {
    let detected = detect_format(payload);
    let method = method_of(detected).ok_or(SubmitError::UnknownFormat)?;
    if method != declared {
        return Err(SubmitError::MethodMismatch { declared, detected });
    }
    let parse_err = |error| SubmitError::Parse { detected, error };
    match detected {
        DetectedFormat::Transcription => Ok((
            detected,
            parse_transcription(payload, bounds).map_err(parse_err)?,
            vec![],
        )),
        DetectedFormat::ExportCsv | DetectedFormat::ExportXml => {
            let hint = if detected == DetectedFormat::ExportCsv {
                ExportFormat::Csv
            } else {
                ExportFormat::Xml
            };
            let parsed = parse_export(payload, Some(hint)).map_err(parse_err)?;
            Ok((detected, parsed.messages, parsed.warnings))
        }
        DetectedFormat::UploadDraft => {
            let draft = parse_upload_draft(payload).map_err(parse_err)?;
            if !verify_upload(&draft, &keys.upload_secret) {
                return Err(SubmitError::BadUploadCode);
            }
            Ok((detected, draft.messages, vec![]))
        }
        DetectedFormat::Unknown => Err(SubmitError::UnknownFormat),
    }
}

/// Runs a submission through intake and stores it as a pending batch.
pub fn submit(store: &Store, submission: Submission, config: &IntakeConfig<'_>) -> Result<SubmitOutcome, SubmitError> {
    let contributor = submission.contributor.trim().to_string();
    if contributor.is_empty() {
        return Err(SubmitError::MissingContributor);
    }
    let (detected, raw, warnings) = parse_payload(&submission.payload, submission.method, config.keys, &config.bounds)?;
    drop(submission.payload);

    let profile = submission.profile.map(|mut p| {
        if p.id.trim().is_empty() {
            p.id = derived_profile_id(submission.source, &contributor);
        }
        p
    });
    let profile_id = profile.as_ref().map(|p| p.id.clone()).or(submission.profile_id);

    let batch_id = new_batch_id();
    let mut messages = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let ctx = MessageContext {
            id: format!("{batch_id}-{:04}", i + 1),
            batch_id: batch_id.clone(),
            collection_method: submission.method,
            source: submission.source,
            profile_id: profile_id.clone(),
        };
        messages.push(anonymize_message(r, ctx, &config.keys.pseudonym_key)?);
    }
    let batch = SubmissionBatch {
        id: batch_id.clone(),
        contributor_ref: contributor,
        collection_method: submission.method,
        source: submission.source,
        received_at: Utc::now().trunc_subsecs(0),
        message_ids: messages.iter().map(|m| m.id.clone()).collect(),
        status: Status::Pending,
        rejection_reason: None,
        reward: None,
    };
    let (message_ids, report) = store.transact(|state| {
        let ids = state.insert_batch(batch, messages, profile)?;
        let report = quality_report(state, &batch_id, config.blocklist, config.policy)?;
        Ok::<_, SubmitError>((ids, report))
    })?;
    Ok(SubmitOutcome {
        batch_id,
        detected_format: detected,
        message_ids,
        profile_id,
        warnings,
        report,
    })
}
