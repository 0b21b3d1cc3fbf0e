//! Keyed one-way pseudonyms for phone numbers.
//!
//! Tokens are `P` followed by the first 16 hex digits of
//! HMAC-SHA256(key, normalized number).

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

type HmacSha256 = Hmac<Sha256>;

pub const KEY_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PseudonymError {
    #[error("empty phone number")]
    EmptyNumber,
    #[error("pseudonym key must be {KEY_LEN} bytes of hex, got {0} bytes")]
    KeyLength(usize),
    #[error("pseudonym key is not valid hex")]
    KeyHex,
}

/// Secret key for phone-number pseudonyms. Never serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct PseudonymKey {
    key_bytes: [u8; KEY_LEN],
    key_id: String,
}

impl fmt::Debug for PseudonymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PseudonymKey")
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

impl PseudonymKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PseudonymError> {
        let key_bytes: [u8; KEY_LEN] = bytes.try_into().map_err(|_| PseudonymError::KeyLength(bytes.len()))?;
        let key_id = hex::encode(&Sha256::digest(key_bytes)[..4]);
        Ok(PseudonymKey { key_bytes, key_id })
    }

    pub fn from_hex(text: &str) -> Result<Self, PseudonymError> {
        let bytes = hex::decode(text.trim()).map_err(|_| PseudonymError::KeyHex)?;
        Self::from_bytes(&bytes)
    }

    pub fn generate() -> Self {
        let bytes: [u8; KEY_LEN] = rand::random();
        Self::from_bytes(&bytes).expect("fixed length")
    }

    /// Short public label derived from the key, safe to log.
    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.key_bytes)
    }

    fn tag(&self, data: &[u8]) -> [u8; 32] {
        let mut mac = HmacSha256::new_from_slice(&self.key_bytes).expect("any key length");
        mac.update(data);
        mac.finalize().into_bytes().into()
    }
}

/// Strips separators (spaces, dashes, dots, parentheses) and maps
/// full-width digits to ASCII. A leading `+` is kept as the country-code
/// marker.
pub fn normalize_number(phone: &str) -> String {
    let phone = super::scrub::normalize_fullwidth_digits(phone.trim());
    let mut out = String::with_capacity(phone.len());
    for c in phone.chars() {
        match c {
            c if c.is_whitespace() => {}
            '-' | '.' | '(' | ')' | '\u{2010}'..='\u{2015}' => {}
            '\u{FF0B}' if out.is_empty() => out.push('+'),
            '+' if !out.is_empty() => {}
            c => out.push(c),
        }
    }
    out
}

/// Maps a phone number (or an opaque client-side device/peer token) to its
/// stable pseudonym under `key`.
pub fn pseudonymize_number(phone: &str, key: &PseudonymKey) -> Result<String, PseudonymError> {
    let normalized = normalize_number(phone);
    if normalized.is_empty() || normalized == "+" {
        return Err(PseudonymError::EmptyNumber);
    }
    let tag = key.tag(normalized.as_bytes());
    Ok(format!("P{}", hex::encode(&tag[..8])))
}

/// True when `token` has the pseudonym shape `P<16 lowercase hex>`.
pub fn is_pseudonym_token(token: &str) -> bool {
    token.len() == 17
        && token.starts_with('P')
        && token[1..]
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// True when `text` looks like a dialable phone number: optional `+`,
/// then at least five digits with only common separators in between.
pub fn looks_like_phone_number(text: &str) -> bool {
    let normalized = normalize_number(text);
    let digits = normalized.strip_prefix('+').unwrap_or(&normalized);
    digits.len() >= 5 && digits.bytes().all(|b| b.is_ascii_digit())
}
