use serde::Deserialize;

use super::{decode_utf8, IngestError, RawMessage};

/// Per-submission message count limits for the web transcription form.
/// Tasks were published with 2 or 5 English messages and 10 or 20 Chinese
/// messages; the bound is the task size in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptionBounds {
    pub english_max: usize,
    pub chinese_max: usize,
}

impl Default for TranscriptionBounds {
    fn default() -> Self {
        TranscriptionBounds {
            english_max: 5,
            chinese_max: 20,
        }
    }
}

/// Wire form of a transcription submission:
/// `{"language": "english", "messages": ["...", "..."]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptionForm {
    pub language: String,
    pub messages: Vec<String>,
}

/// Parses a transcription form into body-only messages. Each body is kept
/// verbatim except for one trailing newline.
pub fn parse_transcription(payload: &[u8], bounds: &TranscriptionBounds) -> Result<Vec<RawMessage>, IngestError> {
    let text = decode_utf8(payload)?;
    let form: TranscriptionForm = serde_json::from_str(text).map_err(|e| IngestError::MalformedForm(e.to_string()))?;
    let max = match form.language.trim().to_ascii_lowercase().as_str() {
        "english" | "en" => bounds.english_max,
        "chinese" | "zh" => bounds.chinese_max,
        other => {
            return Err(IngestError::MalformedForm(format!(
                "unsupported form language {other:?}"
            )))
        }
    };
    let count = form.messages.len();
    if count == 0 || count > max {
        return Err(IngestError::CountOutOfBounds {
            language: form.language,
            count,
            min: 1,
            max,
        });
    }
    form.messages
        .into_iter()
        .enumerate()
        .map(|(i, body)| {
            if body.trim().is_empty() {
                return Err(IngestError::EmptySlot(i + 1));
            }
            let body = body
                .strip_suffix("\r\n")
                .or_else(|| body.strip_suffix('\n'))
                .map(str::to_string)
                .unwrap_or(body);
            Ok(RawMessage::body_only(body))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(language: &str, n: usize) -> Vec<u8> {
        let messages: Vec<String> = (0..n).map(|i| format!("msg {i}")).collect();
        serde_json::json!({ "language": language, "messages": messages })
            .to_string()
            .into_bytes()
    }

    #[test]
    fn five_english_messages() {
        let out = parse_transcription(&form("english", 5), &TranscriptionBounds::default()).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out
            .iter()
            .all(|m| m.sender_raw.is_none() && m.receiver_raw.is_none() && m.sent_at.is_none()));
    }

    #[test]
    fn count_bounds() {
        let bounds = TranscriptionBounds::default();
        assert!(matches!(
            parse_transcription(&form("english", 0), &bounds),
            Err(IngestError::CountOutOfBounds { count: 0, .. })
        ));
        assert!(matches!(
            parse_transcription(&form("chinese", 21), &bounds),
            Err(IngestError::CountOutOfBounds { count: 21, max: 20, .. })
        ));
        assert_eq!(parse_transcription(&form("chinese", 20), &bounds).unwrap().len(), 20);
        let small = TranscriptionBounds {
            english_max: 2,
            chinese_max: 10,
        };
        assert!(parse_transcription(&form("english", 5), &small).is_err());
    }

    #[test]
    fn whitespace_kept_except_trailing_newline() {
        let payload = br#"{"language":"english","messages":["  two  spaces \n","x\n\n"]}"#;
        let out = parse_transcription(payload, &TranscriptionBounds::default()).unwrap();
        assert_eq!(out[0].body_raw, "  two  spaces ");
        assert_eq!(out[1].body_raw, "x\n");
    }

    #[test]
    fn empty_slot_rejected() {
        let payload = br#"{"language":"english","messages":["ok","   "]}"#;
        assert_eq!(
            parse_transcription(payload, &TranscriptionBounds::default()),
            Err(IngestError::EmptySlot(2))
        );
    }
}
