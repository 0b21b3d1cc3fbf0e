//! Draft emails produced by the mobile app.
//!
//! ```text
//! SMS-CORPUS-UPLOAD v1
//! code: <8 hex>
//! device: <token>
//! count: <n>
//! --msg--
//! time: <ISO-8601|->
//! peer: <token|->
//! <body lines ...>
//! ```
//!
//! The code is the first 8 hex digits of
//! HMAC-SHA256(secret, "SMS-CORPUS-UPLOAD v1\n" + device + "\n" + count).

use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use super::{decode_utf8, parse_timestamp, IngestError, RawMessage};

pub const UPLOAD_MAGIC: &str = "SMS-CORPUS-UPLOAD v1";
const DELIMITER: &str = "--msg--";
const CODE_HEX_LEN: usize = 8;

/// A parsed upload draft. Bodies were already anonymized on the device and
/// may contain placeholder codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadDraft {
    pub verification_code: String,
    pub device_id_token: String,
    pub messages: Vec<RawMessage>,
}

fn header<'a>(lines: &[&'a str], index: usize, key: &str) -> Result<&'a str, IngestError> {
    let line = lines.get(index).ok_or_else(|| IngestError::MalformedHeader {
        line: index + 1,
        detail: format!("missing `{key}:` line"),
    })?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(": "))
        .ok_or_else(|| IngestError::MalformedHeader {
            line: index + 1,
            detail: format!("expected `{key}: <value>`"),
        })
}

fn optional_field(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "-").then_some(v)
}

pub fn parse_upload_draft(payload: &[u8]) -> Result<UploadDraft, IngestError> {
    let text = decode_utf8(payload)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.first().map(|l| l.trim_end()) != Some(UPLOAD_MAGIC) {
        return Err(IngestError::MalformedHeader {
            line: 1,
            detail: format!("expected `{UPLOAD_MAGIC}`"),
        });
    }
    if !lines.get(1).is_some_and(|l| l.starts_with("code:")) {
        return Err(IngestError::MissingCode);
    }
    let code = header(&lines, 1, "code")?.trim();
    if code.len() != CODE_HEX_LEN || !code.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(IngestError::MalformedHeader {
            line: 2,
            detail: "code must be 8 hex digits".into(),
        });
    }
    let device = header(&lines, 2, "device")?.trim();
    if device.is_empty() {
        return Err(IngestError::MalformedHeader {
            line: 3,
            detail: "empty device token".into(),
        });
    }
    let declared: usize = header(&lines, 3, "count")?
        .trim()
        .parse()
        .map_err(|_| IngestError::MalformedHeader {
            line: 4,
            detail: "count must be a non-negative integer".into(),
        })?;

    let mut messages = Vec::new();
    let mut i = 4;
    if let Some(line) = lines.get(i) {
        if *line != DELIMITER {
            return Err(IngestError::MalformedHeader {
                line: i + 1,
                detail: format!("expected `{DELIMITER}`"),
            });
        }
    }
    while i < lines.len() {
        // lines[i] is a delimiter here.
        let time = header(&lines, i + 1, "time")?;
        let peer = header(&lines, i + 2, "peer")?;
        let body_start = i + 3;
        let mut end = body_start;
        while end < lines.len() && lines[end] != DELIMITER {
            end += 1;
        }
        let body = lines.get(body_start..end).unwrap_or_default().join("\n");
        if body.trim().is_empty() {
            return Err(IngestError::EmptySlot(messages.len() + 1));
        }
        let sent_at = match optional_field(time) {
            None => None,
            Some(t) => Some(parse_timestamp(t).ok_or_else(|| IngestError::MalformedHeader {
                line: i + 2,
                detail: format!("invalid timestamp {t:?}"),
            })?),
        };
        messages.push(RawMessage {
            body_raw: body,
            sender_raw: Some(device.to_string()),
            receiver_raw: optional_field(peer).map(str::to_string),
            sent_at,
        });
        i = end;
    }
    if messages.is_empty() {
        return Err(IngestError::NoMessages);
    }
    if messages.len() != declared {
        return Err(IngestError::CountMismatch {
            declared,
            found: messages.len(),
        });
    }
    Ok(UploadDraft {
        verification_code: code.to_ascii_lowercase(),
        device_id_token: device.to_string(),
        messages,
    })
}

fn upload_mac(secret: &[u8], device: &str, count: usize) -> Hmac<Sha256> {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("any key length");
    mac.update(UPLOAD_MAGIC.as_bytes());
    mac.update(b"\n");
    mac.update(device.as_bytes());
    mac.update(b"\n");
    mac.update(count.to_string().as_bytes());
    mac
}

/// The verification code the app derives for a device and message count.
pub fn compute_upload_code(secret: &[u8], device: &str, count: usize) -> String {
    let tag = upload_mac(secret, device, count).finalize().into_bytes();
    hex::encode(&tag[..CODE_HEX_LEN / 2])
}

/// Accepts the draft iff its code matches the keyed tag over its device
/// token and message count. Never fails; malformed codes are rejections.
pub fn verify_upload(draft: &UploadDraft, secret: &[u8]) -> bool {
    let Ok(code) = hex::decode(&draft.verification_code) else {
        return false;
    };
    if code.len() != CODE_HEX_LEN / 2 {
        return false;
    }
    upload_mac(secret, &draft.device_id_token, draft.messages.len())
        .verify_truncated_left(&code)
        .is_ok()
}

/// Writes a draft in the wire grammar. Bodies must not contain a line
/// equal to the delimiter.
pub fn render_upload_draft(draft: &UploadDraft) -> String {
    let mut out = format!(
        "{UPLOAD_MAGIC}\ncode: {}\ndevice: {}\ncount: {}\n",
        draft.verification_code,
        draft.device_id_token,
        draft.messages.len()
    );
    for m in &draft.messages {
        out.push_str(DELIMITER);
        out.push('\n');
        let time = m.sent_at.map(|t| t.to_rfc3339()).unwrap_or_else(|| "-".into());
        out.push_str(&format!("time: {time}\n"));
        out.push_str(&format!("peer: {}\n", m.receiver_raw.as_deref().unwrap_or("-")));
        out.push_str(&m.body_raw);
        out.push('\n');
    }
    out
}
