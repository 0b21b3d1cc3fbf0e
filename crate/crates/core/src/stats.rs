//! Corpus statistics over approved messages: per-language totals,
//! contributor distributions, demographic breakdowns, channel/source
//! tables and message lengths.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::anonymize::PLACEHOLDERS;
use crate::model::{
    labeled_enum, AgeBucket, CollectionMethod, DailySmsBucket, Gender, Language, Message, Source, Status, TriState,
    UserProfile, VersionId, YearsSmsBucket, PROFILE_FIELDS, UNKNOWN,
};
use crate::store::CorpusState;
use crate::validate::{approval_rates, is_cjk, ApprovalTable};

labeled_enum! {
    pub enum WeightBasis {
        ByMessage => "by_message",
        ByContributor => "by_contributor",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("unknown profile dimension {0:?}")]
    UnknownDimension(String),
}

/// Messages-per-contributor bucket edges, inclusive.
pub const DISTRIBUTION_BUCKETS: &[(u64, Option<u64>, &str)] = &[
    (1, Some(30), "1-30"),
    (31, Some(100), "31-100"),
    (101, Some(300), "101-300"),
    (301, Some(1000), "301-1000"),
    (1001, None, ">1000"),
];

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn share(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        round1(count as f64 * 100.0 / total as f64)
    }
}

/// One approved message with what the statistics need from its batch and
/// profile.
#[derive(Debug, Clone, Copy)]
struct Row<'a> {
    message: &'a Message,
    contributor: &'a str,
    profile: Option<&'a UserProfile>,
}

fn rows(state: &CorpusState) -> Vec<Row<'_>> {
    state
        .messages
        .values()
        .filter(|m| m.status == Status::Approved)
        .map(|m| Row {
            message: m,
            contributor: state.contributor_of(m).unwrap_or(UNKNOWN),
            profile: m.profile_id.as_ref().and_then(|p| state.profiles.get(p)),
        })
        .collect()
}

fn in_language(language: Option<Language>) -> impl Fn(&&Row<'_>) -> bool {
    move |r| language.is_none_or(|l| r.message.language == l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageSummary {
    pub language: Language,
    pub messages: u64,
    pub contributors: u64,
    /// Messages per contributor to one decimal; absent without contributors.
    pub mean_per_contributor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub languages: Vec<LanguageSummary>,
    pub total_messages: u64,
    pub total_contributors: u64,
}

impl CorpusSummary {
    pub fn language(&self, language: Language) -> &LanguageSummary {
        self.languages
            .iter()
            .find(|l| l.language == language)
            .expect("every language listed")
    }
}

pub fn corpus_summary(state: &CorpusState) -> CorpusSummary {
    let rows = rows(state);
    let languages = Language::ALL
        .iter()
        .map(|&language| {
            let mut per: HashMap<&str, u64> = HashMap::new();
            for r in rows.iter().filter(in_language(Some(language))) {
                *per.entry(r.contributor).or_default() += 1;
            }
            let messages: u64 = per.values().sum();
            let contributors = per.len() as u64;
            LanguageSummary {
                language,
                messages,
                contributors,
                mean_per_contributor: (contributors > 0).then(|| round1(messages as f64 / contributors as f64)),
            }
        })
        .collect();
    let mut all: HashMap<&str, ()> = HashMap::new();
    for r in &rows {
        all.insert(r.contributor, ());
    }
    CorpusSummary {
        languages,
        total_messages: rows.len() as u64,
        total_contributors: all.len() as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub label: String,
    pub count: u64,
    /// Percentage of the total, one decimal.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub dimension: String,
    pub weight_basis: WeightBasis,
    pub language: Option<Language>,
    pub total: u64,
    pub buckets: Vec<Bucket>,
}

impl Histogram {
    fn new(dimension: &str, weight_basis: WeightBasis, language: Option<Language>, counts: Vec<(String, u64)>) -> Self {
        let total = counts.iter().map(|(_, c)| c).sum();
        Histogram {
            dimension: dimension.to_string(),
            weight_basis,
            language,
            total,
            buckets: counts
                .into_iter()
                .map(|(label, count)| Bucket {
                    share: share(count, total),
                    label,
                    count,
                })
                .collect(),
        }
    }

    pub fn bucket(&self, label: &str) -> Option<&Bucket> {
        self.buckets.iter().find(|b| b.label == label)
    }
}

/// Contributors bucketed by how many messages they submitted in `language`.
pub fn contributor_distribution(state: &CorpusState, language: Option<Language>) -> Histogram {
    let rows = rows(state);
    let mut per: HashMap<&str, u64> = HashMap::new();
    for r in rows.iter().filter(in_language(language)) {
        *per.entry(r.contributor).or_default() += 1;
    }
    let counts = DISTRIBUTION_BUCKETS
        .iter()
        .map(|&(lo, hi, label)| {
            let n = per.values().filter(|&&c| c >= lo && hi.is_none_or(|h| c <= h)).count();
            (label.to_string(), n as u64)
        })
        .collect();
    Histogram::new("messages_per_contributor", WeightBasis::ByContributor, language, counts)
}

fn canonical_dimension(name: &str) -> Option<&'static str> {
    let name = match name.trim() {
        "native" => "native_speaker",
        "input" => "input_method",
        "daily" => "daily_sms",
        "years" => "years_sms",
        "brand" => "phone_brand",
        "model" => "phone_model",
        other => other,
    };
    PROFILE_FIELDS.iter().copied().find(|f| *f == name)
}

/// Fixed label order for enumerated fields; `None` for free text.
fn enumerated_labels(field: &str) -> Option<Vec<&'static str>> {
    fn labels<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> Vec<&'static str> {
        all.iter().map(|x| f(*x)).collect()
    }
    Some(match field {
        "age" => labels(AgeBucket::ALL, AgeBucket::as_str),
        "gender" => labels(Gender::ALL, Gender::as_str),
        "native_speaker" | "smartphone" => labels(TriState::ALL, TriState::as_str),
        "daily_sms" => labels(DailySmsBucket::ALL, DailySmsBucket::as_str),
        "years_sms" => labels(YearsSmsBucket::ALL, YearsSmsBucket::as_str),
        _ => return None,
    })
}

/// Distribution of a profile field, weighted by messages or by
/// contributors. Messages without a profile count as `unknown`; a
/// contributor's profile is the one on their first profiled message.
pub fn breakdown(
    state: &CorpusState,
    dimension: &str,
    basis: WeightBasis,
    language: Option<Language>,
) -> Result<Histogram, StatsError> {
    let field = canonical_dimension(dimension).ok_or_else(|| StatsError::UnknownDimension(dimension.to_string()))?;
    let rows = rows(state);
    let label_of =
        |p: Option<&UserProfile>| -> String { p.and_then(|p| p.field(field)).unwrap_or(UNKNOWN).to_string() };
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    match basis {
        WeightBasis::ByMessage => {
            for r in rows.iter().filter(in_language(language)) {
                *counts.entry(label_of(r.profile)).or_default() += 1;
            }
        }
        WeightBasis::ByContributor => {
            let mut profile_of: BTreeMap<&str, Option<&UserProfile>> = BTreeMap::new();
            for r in rows.iter().filter(in_language(language)) {
                let slot = profile_of.entry(r.contributor).or_default();
                if slot.is_none() {
                    *slot = r.profile;
                }
            }
            for p in profile_of.values() {
                *counts.entry(label_of(*p)).or_default() += 1;
            }
        }
    }
    let ordered: Vec<(String, u64)> = match enumerated_labels(field) {
        Some(labels) => labels
            .into_iter()
            .map(|l| (l.to_string(), counts.get(l).copied().unwrap_or(0)))
            .collect(),
        None => {
            let unknown = counts.remove(UNKNOWN).unwrap_or(0);
            let mut v: Vec<(String, u64)> = counts.into_iter().collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            v.push((UNKNOWN.to_string(), unknown));
            v
        }
    };
    Ok(Histogram::new(field, basis, language, ordered))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: CollectionMethod,
    pub messages: BTreeMap<Language, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRow {
    pub source: Source,
    pub messages: BTreeMap<Language, u64>,
    pub contributors: BTreeMap<Language, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSourceTables {
    pub by_method: Vec<MethodRow>,
    pub by_source: Vec<SourceRow>,
    pub total_messages: BTreeMap<Language, u64>,
    pub total_contributors: BTreeMap<Language, u64>,
}

fn zeroed() -> BTreeMap<Language, u64> {
    Language::ALL.iter().map(|l| (*l, 0)).collect()
}

pub fn method_source_tables(state: &CorpusState) -> MethodSourceTables {
    let rows = rows(state);
    let by_method = CollectionMethod::ALL
        .iter()
        .map(|&method| {
            let mut messages = zeroed();
            for r in rows.iter().filter(|r| r.message.collection_method == method) {
                *messages.entry(r.message.language).or_default() += 1;
            }
            MethodRow { method, messages }
        })
        .collect();
    let distinct = |filter: &dyn Fn(&Row<'_>) -> bool| -> BTreeMap<Language, u64> {
        let mut seen: BTreeMap<Language, Vec<&str>> = BTreeMap::new();
        for r in rows.iter().filter(|r| filter(r)) {
            seen.entry(r.message.language).or_default().push(r.contributor);
        }
        let mut out = zeroed();
        for (l, mut v) in seen {
            v.sort_unstable();
            v.dedup();
            out.insert(l, v.len() as u64);
        }
        out
    };
    let by_source = Source::ALL
        .iter()
        .map(|&source| {
            let mut messages = zeroed();
            for r in rows.iter().filter(|r| r.message.source == source) {
                *messages.entry(r.message.language).or_default() += 1;
            }
            SourceRow {
                source,
                messages,
                contributors: distinct(&|r| r.message.source == source),
            }
        })
        .collect();
    let mut total_messages = zeroed();
    for r in &rows {
        *total_messages.entry(r.message.language).or_default() += 1;
    }
    MethodSourceTables {
        by_method,
        by_source,
        total_messages,
        total_contributors: distinct(&|_| true),
    }
}

/// Token count under the language's rule. English (and unclassified) text
/// splits on whitespace. Chinese and mixed text counts each CJK character,
/// each placeholder code and each run of letters or digits.
pub fn token_count(body: &str, language: Language) -> usize {
    match language {
        Language::English | Language::Unknown => body.split_whitespace().count(),
        Language::Chinese | Language::Mixed => {
            let mut n = 0;
            let mut in_run = false;
            let mut rest = body;
            while let Some(c) = rest.chars().next() {
                if c == '<' {
                    if let Some(p) = PLACEHOLDERS.iter().find(|p| rest.starts_with(**p)) {
                        n += 1;
                        in_run = false;
                        rest = &rest[p.len()..];
                        continue;
                    }
                }
                if is_cjk(c) {
                    n += 1;
                    in_run = false;
                } else if c.is_alphanumeric() {
                    if !in_run {
                        n += 1;
                    }
                    in_run = true;
                } else {
                    in_run = false;
                }
                rest = &rest[c.len_utf8()..];
            }
            n
        }
    }
}

pub fn token_rule(language: Language) -> &'static str {
    match language {
        Language::English | Language::Unknown => "whitespace-delimited words",
        Language::Chinese | Language::Mixed => "CJK characters, placeholder codes and letter/digit runs",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthStats {
    pub language: Language,
    pub messages: u64,
    pub mean_chars: Option<f64>,
    pub mean_tokens: Option<f64>,
    pub token_rule: &'static str,
}

/// Mean length in characters and tokens, to one decimal.
pub fn length_stats_of<'a>(bodies: impl IntoIterator<Item = &'a str>, language: Language) -> LengthStats {
    let (mut n, mut chars, mut tokens) = (0u64, 0u64, 0u64);
    for b in bodies {
        n += 1;
        chars += b.chars().count() as u64;
        tokens += token_count(b, language) as u64;
    }
    let mean = |total: u64| (n > 0).then(|| round1(total as f64 / n as f64));
    LengthStats {
        language,
        messages: n,
        mean_chars: mean(chars),
        mean_tokens: mean(tokens),
        token_rule: token_rule(language),
    }
}

pub fn length_stats(state: &CorpusState, language: Language) -> LengthStats {
    length_stats_of(
        state
            .approved_messages()
            .filter(|m| m.language == language)
            .map(|m| m.body.as_str()),
        language,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageSection {
    pub language: Language,
    pub contributor_distribution: Histogram,
    pub breakdowns: Vec<Histogram>,
    pub length: LengthStats,
}

/// The statistics document published with each release and served by the
/// API. Computed from approved messages only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub format: u32,
    /// Release the report belongs to; absent for live statistics.
    pub version: Option<VersionId>,
    pub summary: CorpusSummary,
    pub tables: MethodSourceTables,
    pub languages: Vec<LanguageSection>,
    pub approval_rates: ApprovalTable,
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

pub fn stats_report(state: &CorpusState) -> StatsReport {
    let languages = [Language::English, Language::Chinese]
        .into_iter()
        .map(|language| {
            let mut breakdowns = Vec::new();
            for field in PROFILE_FIELDS {
                for basis in WeightBasis::ALL {
                    breakdowns.push(breakdown(state, field, *basis, Some(language)).expect("known field"));
                }
            }
            LanguageSection {
                language,
                contributor_distribution: contributor_distribution(state, Some(language)),
                breakdowns,
                length: length_stats(state, language),
            }
        })
        .collect();
    StatsReport {
        format: 1,
        version: None,
        summary: corpus_summary(state),
        tables: method_source_tables(state),
        languages,
        approval_rates: approval_rates(state),
    }
}
