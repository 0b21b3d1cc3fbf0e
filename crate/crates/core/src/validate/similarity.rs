//! Exact and near-duplicate lookup against the corpus and the blocklist.
//!
//! Bodies are compared after normalization (lowercase, whitespace runs
//! collapsed to one space, trimmed). Near-duplicate scores are exact
//! Jaccard similarities of character 3-gram sets; an inverted index keeps
//! lookups proportional to the shingles actually shared.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

pub type Shingle = [char; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchOrigin {
    Corpus,
    Blocklist,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("similarity threshold must lie in (0, 1], got {0}")]
pub struct InvalidThreshold(pub f64);

pub fn normalize_body(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Character 3-gram set of already normalized text. Text shorter than three
/// characters is a single padded shingle; empty text has none.
pub fn shingles(normalized: &str) -> HashSet<Shingle> {
    let chars: Vec<char> = normalized.chars().collect();
    match chars.len() {
        0 => HashSet::new(),
        1 => HashSet::from([[chars[0], '\0', '\0']]),
        2 => HashSet::from([[chars[0], chars[1], '\0']]),
        _ => chars.windows(3).map(|w| [w[0], w[1], w[2]]).collect(),
    }
}

fn jaccard_sets(a: &HashSet<Shingle>, b: &HashSet<Shingle>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Jaccard similarity of the 3-gram sets of two bodies.
pub fn similarity(a: &str, b: &str) -> f64 {
    jaccard_sets(&shingles(&normalize_body(a)), &shingles(&normalize_body(b)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearMatch {
    pub origin: MatchOrigin,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactMatch {
    pub message_id: String,
    pub origin: MatchOrigin,
    pub matched_id: String,
}

#[derive(Debug, Clone)]
struct Entry {
    origin: MatchOrigin,
    id: String,
    shingle_count: usize,
}

/// Reference texts (corpus messages and blocklist entries) indexed for
/// exact and near-duplicate lookup.
#[derive(Debug, Clone, Default)]
pub struct ReferenceIndex {
    entries: Vec<Entry>,
    exact: HashMap<String, Vec<usize>>,
    postings: HashMap<Shingle, Vec<usize>>,
    empty: Vec<usize>,
}

impl ReferenceIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn add(&mut self, origin: MatchOrigin, id: impl Into<String>, body: &str) {
        let idx = self.entries.len();
        let normalized = normalize_body(body);
        let set = shingles(&normalized);
        if set.is_empty() {
            self.empty.push(idx);
        }
        for s in &set {
            self.postings.entry(*s).or_default().push(idx);
        }
        self.exact.entry(normalized).or_default().push(idx);
        self.entries.push(Entry {
            origin,
            id: id.into(),
            shingle_count: set.len(),
        });
    }

    /// References whose normalized body equals that of `text`, in insertion
    /// order.
    pub fn exact_matches(&self, text: &str) -> Vec<(MatchOrigin, &str)> {
        self.exact
            .get(&normalize_body(text))
            .map(|ids| {
                ids.iter()
                    .map(|&i| (self.entries[i].origin, self.entries[i].id.as_str()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// References with similarity at least `theta`, best first.
    pub fn near_matches(&self, text: &str, theta: f64) -> Result<Vec<NearMatch>, InvalidThreshold> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(InvalidThreshold(theta));
        }
        let set = shingles(&normalize_body(text));
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for s in &set {
            for &i in self.postings.get(s).map(Vec::as_slice).unwrap_or_default() {
                *shared.entry(i).or_default() += 1;
            }
        }
        if set.is_empty() {
            shared.extend(self.empty.iter().map(|&i| (i, 0)));
        }
        let mut out: Vec<(usize, f64)> = shared
            .into_iter()
            .map(|(i, inter)| {
                let union = set.len() + self.entries[i].shingle_count - inter;
                let score = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
                (i, score)
            })
            .filter(|(_, score)| *score >= theta)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out
            .into_iter()
            .map(|(i, score)| NearMatch {
                origin: self.entries[i].origin,
                id: self.entries[i].id.clone(),
                score,
            })
            .collect())
    }
}

/// Exact matches for each batch message. Corpus and blocklist hits are
/// distinguished by [`ExactMatch::origin`].
pub fn find_exact_duplicates<'a>(
    batch: impl IntoIterator<Item = (&'a str, &'a str)>,
    index: &ReferenceIndex,
) -> Vec<ExactMatch> {
    batch
        .into_iter()
        .flat_map(|(id, body)| {
            index
                .exact_matches(body)
                .into_iter()
                .map(move |(origin, matched)| ExactMatch {
                    message_id: id.to_string(),
                    origin,
                    matched_id: matched.to_string(),
                })
        })
        .collect()
}

pub fn find_near_duplicates(
    text: &str,
    index: &ReferenceIndex,
    theta: f64,
) -> Result<Vec<NearMatch>, InvalidThreshold> {
    index.near_matches(text, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_body("  See  You\tTMR \n"), "see you tmr");
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(similarity("happy new year", "happy new year"), 1.0);
        assert_eq!(similarity("abc def", "你好"), 0.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("", "abc"), 0.0);
    }

    #[test]
    fn set_jaccard_ignores_multiplicity() {
        // Not an exact duplicate, yet both shingle sets are {aaa}.
        assert_eq!(similarity("aaa", "aaaa"), 1.0);
    }

    #[test]
    fn index_agrees_with_pairwise_scores() {
        let refs = [
            "see you at <TIME>",
            "see you at home",
            "你好吗",
            "ok",
            "",
            "SEE  you at <time>",
        ];
        let mut index = ReferenceIndex::new();
        for (i, r) in refs.iter().enumerate() {
            index.add(MatchOrigin::Corpus, format!("m{i}"), r);
        }
        for q in ["see you at <TIME>", "ok", "", "你好", "totally new"] {
            let hits = index.near_matches(q, 0.01).unwrap();
            for (i, r) in refs.iter().enumerate() {
                let expected = similarity(q, r);
                let got = hits.iter().find(|h| h.id == format!("m{i}")).map(|h| h.score);
                if expected >= 0.01 {
                    assert_eq!(got, Some(expected), "{q:?} vs {r:?}");
                } else {
                    assert_eq!(got, None, "{q:?} vs {r:?}");
                }
            }
        }
    }

    #[test]
    fn exact_matches_use_normalized_bodies() {
        let mut index = ReferenceIndex::new();
        index.add(
            MatchOrigin::Blocklist,
            "blocklist:1",
            "Laugh and the world laughs with you",
        );
        let hits = find_exact_duplicates(
            [("m1", "laugh and  the world laughs with you"), ("m2", "fresh")],
            &index,
        );
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].origin, MatchOrigin::Blocklist);
        assert_eq!(hits[0].message_id, "m1");
    }

    #[test]
    fn threshold_domain() {
        let index = ReferenceIndex::new();
        assert!(index.near_matches("x", 0.0).is_err());
        assert!(index.near_matches("x", 1.5).is_err());
        assert!(index.near_matches("x", f64::NAN).is_err());
        assert!(index.near_matches("x", 1.0).unwrap().is_empty());
    }
}
