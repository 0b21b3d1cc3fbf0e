//! Parsers for the three submission channels. Output is raw,
//! pre-anonymization text and must go straight to the anonymizer.

mod export;
mod transcription;
mod upload;

pub use export::{parse_export, ExportFormat, ExportParse};
pub use transcription::{parse_transcription, TranscriptionBounds, TranscriptionForm};
pub use upload::{
    compute_upload_code, parse_upload_draft, render_upload_draft, verify_upload, UploadDraft, UPLOAD_MAGIC,
};

use chrono::{DateTime, FixedOffset, NaiveDateTime};
use serde::Serialize;

/// One message as submitted, before anonymization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMessage {
    pub body_raw: String,
    pub sender_raw: Option<String>,
    pub receiver_raw: Option<String>,
    pub sent_at: Option<DateTime<FixedOffset>>,
}

impl RawMessage {
    pub fn body_only(body: impl Into<String>) -> Self {
        RawMessage {
            body_raw: body.into(),
            sender_raw: None,
            receiver_raw: None,
            sent_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("payload is not valid UTF-8")]
    NotUtf8,
    #[error("no recognizable schema")]
    NoSchema,
    #[error("export contains no sent messages")]
    NoSentRows,
    #[error("{language} form has {count} messages, allowed {min}..={max}")]
    CountOutOfBounds {
        language: String,
        count: usize,
        min: usize,
        max: usize,
    },
    #[error("message slot {0} is empty")]
    EmptySlot(usize),
    #[error("malformed form: {0}")]
    MalformedForm(String),
    #[error("malformed draft header at line {line}: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("draft has no verification code line")]
    MissingCode,
    #[error("draft contains no messages")]
    NoMessages,
    #[error("draft declares {declared} messages but contains {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("xml error at byte {position}: {detail}")]
    Xml { position: u64, detail: String },
}

impl IngestError {
    /// Stable machine-readable code used by the CLI and HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::NotUtf8 => "not_utf8",
            IngestError::NoSchema => "no_schema",
            IngestError::NoSentRows => "no_sent_rows",
            IngestError::CountOutOfBounds { .. } => "count_out_of_bounds",
            IngestError::EmptySlot(_) => "empty_slot",
            IngestError::MalformedForm(_) => "malformed_form",
            IngestError::MalformedHeader { .. } => "malformed_header",
            IngestError::MissingCode => "missing_code",
            IngestError::NoMessages => "no_messages",
            IngestError::CountMismatch { .. } => "count_mismatch",
            IngestError::MalformedRow { .. } => "malformed_row",
            IngestError::Xml { .. } => "xml_error",
        }
    }
}

/// Channel format recognized from payload bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectedFormat {
    Transcription,
    ExportCsv,
    ExportXml,
    UploadDraft,
    Unknown,
}

impl DetectedFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectedFormat::Transcription => "transcription",
            DetectedFormat::ExportCsv => "export_csv",
            DetectedFormat::ExportXml => "export_xml",
            DetectedFormat::UploadDraft => "upload_draft",
            DetectedFormat::Unknown => "unknown",
        }
    }
}

pub(crate) const CSV_HEADER: &str = "direction,peer_number,timestamp,body";

/// Decodes UTF-8, dropping a leading byte-order mark.
pub(crate) fn decode_utf8(bytes: &[u8]) -> Result<&str, IngestError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    std::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)
}

/// Classifies a payload by its leading bytes and header line. Anything
/// classified as a channel format is at least shaped like that format;
/// everything else is `Unknown`.
pub fn detect_format(bytes: &[u8]) -> DetectedFormat {
    let Ok(text) = decode_utf8(bytes) else {
        return DetectedFormat::Unknown;
    };
    let text = text.trim_start();
    let first_line = text.lines().next().unwrap_or("").trim();
    if first_line == UPLOAD_MAGIC {
        return DetectedFormat::UploadDraft;
    }
    if first_line.eq_ignore_ascii_case(CSV_HEADER) {
        return DetectedFormat::ExportCsv;
    }
    if text.starts_with("<?xml") || text.starts_with("<messages") {
        return DetectedFormat::ExportXml;
    }
    if text.starts_with('{') {
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(text) {
            if map.get("messages").is_some_and(|m| m.is_array()) {
                return DetectedFormat::Transcription;
            }
        }
    }
    DetectedFormat::Unknown
}

/// Parses an ISO-8601 timestamp. Offsets are honoured; naive times are
/// taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<DateTime<FixedOffset>> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(naive.and_utc().fixed_offset());
        }
    }
    None
}
