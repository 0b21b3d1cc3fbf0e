//! Domain types shared by every stage of the toolchain.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, Utc};
use serde::{Deserialize, Serialize};

/// Error returned when a label does not name any variant of a closed enum.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} value {value:?}")]
pub struct UnknownLabel {
    pub kind: &'static str,
    pub value: String,
}

/// Declares a closed enum with a fixed text label per variant. Labels are the
/// wire form used by every file format, the JSON API and the CLI.
macro_rules! labeled_enum {
    (
        $(#[$meta:meta])*
        $vis:vis enum $name:ident {
            $($(#[$vmeta:meta])* $variant:ident => $label:literal),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        $vis enum $name {
            $($(#[$vmeta])* $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::model::UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim().replace('\u{2013}', "-");
                $(
                    if s.eq_ignore_ascii_case($label) {
                        return Ok($name::$variant);
                    }
                )+
                Err($crate::model::UnknownLabel {
                    kind: stringify!($name),
                    value: s.to_string(),
                })
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub(crate) use labeled_enum;

labeled_enum! {
    pub enum Language {
        English => "english",
        Chinese => "chinese",
        Mixed => "mixed",
        Unknown => "unknown",
    }
}

labeled_enum! {
    /// The three submission channels.
    pub enum CollectionMethod {
        /// Web form where the contributor retypes messages from the phone.
        Transcription => "transcription",
        /// Archive exported from the phone (CSV or XML).
        Export => "export",
        /// Draft produced by the mobile app, verified by its upload code.
        Upload => "upload",
    }
}

labeled_enum! {
    pub enum Source {
        Mturk => "mturk",
        Shorttask => "shorttask",
        Zhubajie => "zhubajie",
        Local => "local",
        Community => "community",
    }
}

labeled_enum! {
    pub enum Status {
        Pending => "pending",
        Approved => "approved",
        Rejected => "rejected",
    }
}

labeled_enum! {
    pub enum Currency {
        Usd => "USD",
        Cny => "CNY",
        Sgd => "SGD",
    }
}

labeled_enum! {
    pub enum AgeBucket {
        Under16 => "<16",
        From16To20 => "16-20",
        From21To25 => "21-25",
        From26To30 => "26-30",
        From31To35 => "31-35",
        From36To40 => "36-40",
        From41To45 => "41-45",
        From46To50 => "46-50",
        Over50 => ">50",
        Unknown => "unknown",
    }
}

labeled_enum! {
    pub enum Gender {
        Female => "female",
        Male => "male",
        Unknown => "unknown",
    }
}

labeled_enum! {
    /// Answer to a yes/no survey question that may have been skipped.
    pub enum TriState {
        Yes => "yes",
        No => "no",
        Unknown => "unknown",
    }
}

labeled_enum! {
    pub enum DailySmsBucket {
        Under2 => "<2",
        From2To5 => "2-5",
        From5To10 => "5-10",
        From10To50 => "10-50",
        Over50 => ">50",
        Unknown => "unknown",
    }
}

labeled_enum! {
    pub enum YearsSmsBucket {
        Under1 => "<1",
        From1To3 => "1-3",
        From3To5 => "3-5",
        From5To10 => "5-10",
        Over10 => ">10",
        Unknown => "unknown",
    }
}

/// Literal used for unanswered free-text survey questions.
pub const UNKNOWN: &str = "unknown";

/// Monetary amount held in minor units (cents / fen) to keep reward
/// arithmetic exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Money {
    pub cents: i64,
    pub currency: Currency,
}

impl Money {
    pub fn new(cents: i64, currency: Currency) -> Self {
        Money { cents, currency }
    }

    pub fn zero(currency: Currency) -> Self {
        Money { cents: 0, currency }
    }

    /// Parses a plain decimal amount with at most two fractional digits.
    pub fn parse_amount(text: &str) -> Option<i64> {
        let text = text.trim();
        let (negative, digits) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (whole, frac) = match digits.split_once('.') {
            Some((w, f)) => (w, f),
            None => (digits, ""),
        };
        if whole.is_empty() || frac.len() > 2 {
            return None;
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: i64 = whole.parse().ok()?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().ok()? * 10,
            _ => frac.parse().ok()?,
        };
        let cents = whole.checked_mul(100)?.checked_add(frac_cents)?;
        Some(if negative { -cents } else { cents })
    }

    /// Amount as a decimal string, e.g. `4.50`.
    pub fn amount_string(&self) -> String {
        let sign = if self.cents < 0 { "-" } else { "" };
        let abs = self.cents.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }

    pub fn as_f64(&self) -> f64 {
        self.cents as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.currency, self.amount_string())
    }
}

/// One anonymized SMS as held by the store and published in releases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub batch_id: String,
    pub body: String,
    pub language: Language,
    pub sender_token: Option<String>,
    pub receiver_token: Option<String>,
    pub sent_at: Option<DateTime<FixedOffset>>,
    pub collection_method: CollectionMethod,
    pub source: Source,
    pub profile_id: Option<String>,
    pub status: Status,
}

/// Contributor demographic survey. Every field is populated; skipped
/// questions hold the explicit `unknown` value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub age: AgeBucket,
    pub gender: Gender,
    pub country: String,
    pub native_speaker: TriState,
    pub input_method: String,
    pub daily_sms: DailySmsBucket,
    pub years_sms: YearsSmsBucket,
    pub phone_brand: String,
    pub phone_model: String,
    pub smartphone: TriState,
}

/// Error raised while reading survey answers.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown survey field {0:?}")]
    UnknownField(String),
    #[error(transparent)]
    BadValue(#[from] UnknownLabel),
    #[error("line {0}: expected key=value")]
    Syntax(usize),
}

/// Names of the survey fields, in the order used by the release dumps.
pub const PROFILE_FIELDS: &[&str] = &[
    "age",
    "gender",
    "country",
    "native_speaker",
    "input_method",
    "daily_sms",
    "years_sms",
    "phone_brand",
    "phone_model",
    "smartphone",
];

impl UserProfile {
    /// A profile with every answer set to `unknown`.
    pub fn unknown(id: impl Into<String>) -> Self {
        UserProfile {
            id: id.into(),
            age: AgeBucket::Unknown,
            gender: Gender::Unknown,
            country: UNKNOWN.to_string(),
            native_speaker: TriState::Unknown,
            input_method: UNKNOWN.to_string(),
            daily_sms: DailySmsBucket::Unknown,
            years_sms: YearsSmsBucket::Unknown,
            phone_brand: UNKNOWN.to_string(),
            phone_model: UNKNOWN.to_string(),
            smartphone: TriState::Unknown,
        }
    }

    /// Sets one survey answer by field name. Empty answers become `unknown`.
    pub fn set_field(&mut self, field: &str, value: &str) -> Result<(), ProfileError> {
        let value = value.trim();
        let value = if value.is_empty() { UNKNOWN } else { value };
        let text = || value.to_string();
        match field.trim() {
            "age" => self.age = value.parse()?,
            "gender" => self.gender = value.parse()?,
            "country" => self.country = text(),
            "native_speaker" | "native" => self.native_speaker = value.parse()?,
            "input_method" | "input" => self.input_method = text(),
            "daily_sms" | "daily" => self.daily_sms = value.parse()?,
            "years_sms" | "years" => self.years_sms = value.parse()?,
            "phone_brand" | "brand" => self.phone_brand = text(),
            "phone_model" | "model" => self.phone_model = text(),
            "smartphone" => self.smartphone = value.parse()?,
            other => return Err(ProfileError::UnknownField(other.to_string())),
        }
        Ok(())
    }

    /// Returns the answer for a field as its text label.
    pub fn field(&self, field: &str) -> Option<&str> {
        Some(match field {
            "age" => self.age.as_str(),
            "gender" => self.gender.as_str(),
            "country" => &self.country,
            "native_speaker" => self.native_speaker.as_str(),
            "input_method" => &self.input_method,
            "daily_sms" => self.daily_sms.as_str(),
            "years_sms" => self.years_sms.as_str(),
            "phone_brand" => &self.phone_brand,
            "phone_model" => &self.phone_model,
            "smartphone" => self.smartphone.as_str(),
            _ => return None,
        })
    }

    /// Parses `key=value` survey answers, one per line. Lines starting with
    /// `#` are comments. An `id=` line sets the profile id.
    pub fn from_answers(id: impl Into<String>, text: &str) -> Result<Self, ProfileError> {
        let mut profile = UserProfile::unknown(id);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ProfileError::Syntax(lineno + 1))?;
            if key.trim() == "id" {
                profile.id = value.trim().to_string();
                continue;
            }
            profile.set_field(key, value)?;
        }
        Ok(profile)
    }

    /// Answers as (field, label) pairs in [`PROFILE_FIELDS`] order.
    pub fn answers(&self) -> Vec<(&'static str, &str)> {
        PROFILE_FIELDS
            .iter()
            .map(|f| (*f, self.field(f).expect("listed field")))
            .collect()
    }

    pub fn is_all_unknown(&self) -> bool {
        self.answers().iter().all(|(_, v)| *v == UNKNOWN)
    }
}

/// One contributor submission moving through moderation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionBatch {
    pub id: String,
    pub contributor_ref: String,
    pub collection_method: CollectionMethod,
    pub source: Source,
    pub received_at: DateTime<Utc>,
    pub message_ids: Vec<String>,
    pub status: Status,
    pub rejection_reason: Option<String>,
    pub reward: Option<Money>,
}

/// Release identifier of the form `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionId {
    year: u16,
    month: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid version id {0:?}: expected YYYY-MM")]
pub struct InvalidVersionId(pub String);

impl VersionId {
    pub fn new(year: u16, month: u8) -> Result<Self, InvalidVersionId> {
        if !(1..=12).contains(&month) || !(1000..=9999).contains(&year) {
            return Err(InvalidVersionId(format!("{year}-{month}")));
        }
        Ok(VersionId { year, month })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// Midnight UTC on the first day of the release month.
    pub fn month_start(&self) -> DateTime<Utc> {
        chrono::NaiveDate::from_ymd_opt(self.year as i32, self.month as u32, 1)
            .expect("validated month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
    }
}

impl FromStr for VersionId {
    type Err = InvalidVersionId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || InvalidVersionId(s.to_string());
        let bytes = s.as_bytes();
        if bytes.len() != 7 || bytes[4] != b'-' {
            return Err(err());
        }
        let (y, m) = (&s[..4], &s[5..]);
        if !y.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        VersionId::new(y.parse().map_err(|_| err())?, m.parse().map_err(|_| err())?).map_err(|_| err())
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for VersionId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// An immutable monthly release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusVersion {
    pub version_id: VersionId,
    pub created_at: DateTime<Utc>,
    pub message_count_en: u64,
    pub message_count_zh: u64,
    /// Artifact file name to lowercase hex SHA-256.
    pub artifact_checksums: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_and_accept_en_dash() {
        for age in AgeBucket::ALL {
            assert_eq!(age.as_str().parse::<AgeBucket>().unwrap(), *age);
        }
        assert_eq!("21\u{2013}25".parse::<AgeBucket>().unwrap(), AgeBucket::From21To25);
        assert_eq!("usd".parse::<Currency>().unwrap(), Currency::Usd);
        assert!("klingon".parse::<Language>().is_err());
    }

    #[test]
    fn money_parsing_is_exact() {
        assert_eq!(Money::parse_amount("4.5"), Some(450));
        assert_eq!(Money::parse_amount("0.10"), Some(10));
        assert_eq!(Money::parse_amount("7"), Some(700));
        assert_eq!(Money::parse_amount("1.005"), None);
        assert_eq!(Money::parse_amount("abc"), None);
        assert_eq!(Money::new(450, Currency::Usd).to_string(), "USD 4.50");
    }

    #[test]
    fn version_ids_order_and_validate() {
        let a: VersionId = "2011-02".parse().unwrap();
        let b: VersionId = "2011-11".parse().unwrap();
        assert!(a < b);
        assert_eq!(a.to_string(), "2011-02");
        assert!("2011-13".parse::<VersionId>().is_err());
        assert!("2011-2".parse::<VersionId>().is_err());
        assert!("20a1-02".parse::<VersionId>().is_err());
    }

    #[test]
    fn missing_answers_are_unknown() {
        let p = UserProfile::from_answers("u1", "age=21-25\ngender=\n# note\ncountry=Singapore\n").unwrap();
        assert_eq!(p.age, AgeBucket::From21To25);
        assert_eq!(p.gender, Gender::Unknown);
        assert_eq!(p.phone_brand, UNKNOWN);
        assert_eq!(p.country, "Singapore");
        assert!(matches!(
            UserProfile::from_answers("u", "shoe_size=9"),
            Err(ProfileError::UnknownField(_))
        ));
    }
}
