//! Privacy stage: body scrubbing, phone-number pseudonyms and emoticon
//! normalization. Raw bodies and numbers never leave this module.

pub mod emoticon;
pub mod pseudonym;
pub mod scrub;

pub use emoticon::{normalize_emoticons, EmoticonTable};
pub use pseudonym::{is_pseudonym_token, looks_like_phone_number, pseudonymize_number, PseudonymError, PseudonymKey};
pub use scrub::{scrub_body, RuleName, Scrubber, PLACEHOLDERS};

use crate::ingest::RawMessage;
use crate::model::{CollectionMethod, Message, Source, Status};
use crate::validate::detect_language;

/// Store-side identity given to a message when it is anonymized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageContext {
    pub id: String,
    pub batch_id: String,
    pub collection_method: CollectionMethod,
    pub source: Source,
    pub profile_id: Option<String>,
}

/// Anonymizes one raw message: emoticons normalized, body scrubbed, sender
/// and receiver replaced by pseudonyms. The result is pending moderation.
pub fn anonymize_message(raw: RawMessage, ctx: MessageContext, key: &PseudonymKey) -> Result<Message, PseudonymError> {
    anonymize_with(raw, ctx, key, EmoticonTable::builtin(), Scrubber::standard())
}

pub fn anonymize_with(
    raw: RawMessage,
    ctx: MessageContext,
    key: &PseudonymKey,
    emoticons: &EmoticonTable,
    scrubber: &Scrubber,
) -> Result<Message, PseudonymError> {
    // NUL cannot be carried by either release dump.
    let body = scrubber.scrub(&emoticons.normalize(&raw.body_raw.replace('\0', "")));
    let token = |n: Option<String>| n.map(|n| pseudonymize_number(&n, key)).transpose();
    let sender_token = token(raw.sender_raw)?;
    let receiver_token = token(raw.receiver_raw)?;
    Ok(Message {
        id: ctx.id,
        batch_id: ctx.batch_id,
        language: detect_language(&body),
        body,
        sender_token,
        receiver_token,
        sent_at: raw.sent_at,
        collection_method: ctx.collection_method,
        source: ctx.source,
        profile_id: ctx.profile_id,
        status: Status::Pending,
    })
}
