//! Secrets file: `pseudonym_key=<hex>`, `upload_secret=<hex>`,
//! `admin_token=<text>`, one per line. Kept outside the store.

use std::fmt;
use std::path::Path;

use rand::RngCore;

use crate::anonymize::{PseudonymError, PseudonymKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyFileError {
    #[error("key file line {0}: expected key=value")]
    Syntax(usize),
    #[error("key file: unknown entry {0:?}")]
    UnknownEntry(String),
    #[error("key file: missing {0}")]
    Missing(&'static str),
    #[error("key file: {0}")]
    BadPseudonymKey(#[from] PseudonymError),
    #[error("key file: upload_secret is not hex")]
    BadUploadSecret,
    #[error("cannot read key file: {0}")]
    Io(String),
}

#[derive(Clone)]
pub struct Keys {
    pub pseudonym_key: PseudonymKey,
    pub upload_secret: Vec<u8>,
    /// Maintainer bearer token. Without one, moderation endpoints refuse
    /// every request.
    pub admin_token: Option<String>,
}

impl fmt::Debug for Keys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keys")
            .field("pseudonym_key", &self.pseudonym_key)
            .field("upload_secret", &"<redacted>")
            .field("admin_token", &self.admin_token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl Keys {
    pub fn parse(text: &str) -> Result<Self, KeyFileError> {
        let mut pseudonym_key = None;
        let mut upload_secret = None;
        let mut admin_token = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KeyFileError::Syntax(i + 1))?;
            let v = v.trim();
            match k.trim() {
                "pseudonym_key" => pseudonym_key = Some(PseudonymKey::from_hex(v)?),
                "upload_secret" => upload_secret = Some(hex::decode(v).map_err(|_| KeyFileError::BadUploadSecret)?),
                "admin_token" => admin_token = Some(v.to_string()).filter(|t| !t.is_empty()),
                other => return Err(KeyFileError::UnknownEntry(other.to_string())),
            }
        }
        Ok(Keys {
            pseudonym_key: pseudonym_key.ok_or(KeyFileError::Missing("pseudonym_key"))?,
            upload_secret: upload_secret
                .filter(|s| !s.is_empty())
                .ok_or(KeyFileError::Missing("upload_secret"))?,
            admin_token,
        })
    }

    pub fn load(path: &Path) -> Result<Self, KeyFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| KeyFileError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fresh random secrets.
    pub fn generate() -> Self {
        let mut secret = vec![0u8; 32];
        rand::rng().fill_bytes(&mut secret);
        let mut token = [0u8; 24];
        rand::rng().fill_bytes(&mut token);
        Keys {
            pseudonym_key: PseudonymKey::generate(),
            upload_secret: secret,
            admin_token: Some(hex::encode(token)),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "pseudonym_key={}\nupload_secret={}\n",
            self.pseudonym_key.to_hex(),
            hex::encode(&self.upload_secret)
        );
        if let Some(t) = &self.admin_token {
            out.push_str(&format!("admin_token={t}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let keys = Keys::generate();
        let again = Keys::parse(&keys.render()).unwrap();
        assert_eq!(again.pseudonym_key.key_id(), keys.pseudonym_key.key_id());
        assert_eq!(again.upload_secret, keys.upload_secret);
        assert_eq!(again.admin_token, keys.admin_token);
    }

    #[test]
    fn errors() {
        assert_eq!(
            Keys::parse("upload_secret=00").unwrap_err(),
            KeyFileError::Missing("pseudonym_key")
        );
        assert!(matches!(Keys::parse("nonsense"), Err(KeyFileError::Syntax(1))));
        assert!(matches!(Keys::parse("color=blue"), Err(KeyFileError::UnknownEntry(_))));
        assert!(matches!(
            Keys::parse("pseudonym_key=zz"),
            Err(KeyFileError::BadPseudonymKey(_))
        ));
    }

    #[test]
    fn debug_hides_secrets() {
        let keys = Keys::generate();
        let shown = format!("{keys:?}");
        assert!(!shown.contains(&hex::encode(&keys.upload_secret)));
        assert!(!shown.contains(keys.admin_token.as_deref().unwrap()));
    }
}
