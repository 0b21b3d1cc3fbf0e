//! Rule-based replacement of sensitive spans in message bodies.
//!
//! Rules run as successive passes in a fixed precedence order so composite
//! spans (a URL holding an IP, a date holding integers) are consumed before
//! their fragments. Placeholder text contains no digits, `@` or URL prefixes,
//! so no later pass can match inside an earlier replacement.

use std::borrow::Cow;
use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

pub const EMAIL: &str = "<EMAIL>";
pub const URL: &str = "<URL>";
pub const IP: &str = "<IP>";
pub const TIME: &str = "<TIME>";
pub const DATE: &str = "<DATE>";
pub const DECIMAL: &str = "<DECIMAL>";
pub const NUMBER: &str = "<#>";

/// Every placeholder a scrubbed body may contain.
pub const PLACEHOLDERS: &[&str] = &[EMAIL, URL, IP, TIME, DATE, DECIMAL, NUMBER];

crate::model::labeled_enum! {
    /// Scrub rules, listed in precedence order.
    pub enum RuleName {
        Email => "email",
        Url => "url",
        Ip => "ip",
        Date => "date",
        Time => "time",
        Decimal => "decimal",
        HyphenNumber => "hyphen_number",
        Alphanumeric => "alphanumeric",
        Integer => "integer",
    }
}

/// Context a match must satisfy on either side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Any,
    /// Neighbour is not an ASCII digit.
    NotDigit,
    /// Neighbour is not a digit, and not a `.` adjoining a digit.
    NotDigitOrDottedDigit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Replacement {
    Whole(&'static str),
    /// Replace only the digit runs longer than one digit, keeping letters.
    DigitRuns(&'static str),
}

/// One scrub rule: a pattern, its placeholder and boundary conditions.
#[derive(Debug, Clone)]
pub struct ScrubRule {
    pub name: RuleName,
    regex: Regex,
    left: Edge,
    right: Edge,
    replacement: Replacement,
}

impl ScrubRule {
    fn new(name: RuleName, pattern: &str, left: Edge, right: Edge, replacement: Replacement) -> Self {
        ScrubRule {
            name,
            regex: Regex::new(pattern).expect("built-in scrub pattern"),
            left,
            right,
            replacement,
        }
    }

    pub fn pattern(&self) -> &str {
        self.regex.as_str()
    }

    /// Placeholder code written for a match of this rule.
    pub fn placeholder(&self) -> &'static str {
        match self.replacement {
            Replacement::Whole(p) | Replacement::DigitRuns(p) => p,
        }
    }

    fn edges_ok(&self, text: &str, span: &Range<usize>) -> bool {
        let before = &text[..span.start];
        let after = &text[span.end..];
        let left_ok = match self.left {
            Edge::Any => true,
            Edge::NotDigit => !before.ends_with(|c: char| c.is_ascii_digit()),
            Edge::NotDigitOrDottedDigit => {
                let mut rev = before.chars().rev();
                match rev.next() {
                    None => true,
                    Some(c) if c.is_ascii_digit() => false,
                    Some('.') => !rev.next().is_some_and(|c| c.is_ascii_digit()),
                    Some(_) => true,
                }
            }
        };
        if !left_ok {
            return false;
        }
        match self.right {
            Edge::Any => true,
            Edge::NotDigit => !after.starts_with(|c: char| c.is_ascii_digit()),
            Edge::NotDigitOrDottedDigit => {
                let mut fwd = after.chars();
                match fwd.next() {
                    None => true,
                    Some(c) if c.is_ascii_digit() => false,
                    Some('.') => !fwd.next().is_some_and(|c| c.is_ascii_digit()),
                    Some(_) => true,
                }
            }
        }
    }

    /// Byte spans of every accepted match, leftmost first, non-overlapping.
    pub fn find_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut pos = 0;
        while pos <= text.len() {
            let Some(m) = self.regex.find_at(text, pos) else {
                break;
            };
            let span = m.range();
            if !span.is_empty() && self.edges_ok(text, &span) {
                pos = span.end;
                spans.push(span);
            } else {
                // Retry one character further on.
                pos = match text[m.start()..].chars().next() {
                    Some(c) => m.start() + c.len_utf8(),
                    None => break,
                };
            }
        }
        spans
    }

    fn replace_span(&self, matched: &str, out: &mut String) {
        match self.replacement {
            Replacement::Whole(p) => out.push_str(p),
            Replacement::DigitRuns(p) => {
                let mut run = String::new();
                let flush = |run: &mut String, out: &mut String| {
                    if run.len() > 1 {
                        out.push_str(p);
                    } else {
                        out.push_str(run);
                    }
                    run.clear();
                };
                for c in matched.chars() {
                    if c.is_ascii_digit() {
                        run.push(c);
                    } else {
                        flush(&mut run, out);
                        out.push(c);
                    }
                }
                flush(&mut run, out);
            }
        }
    }

    /// Applies this rule alone, returning the rewritten text and the number
    /// of spans replaced.
    pub fn apply<'a>(&self, text: &'a str) -> (Cow<'a, str>, usize) {
        let spans = self.find_spans(text);
        if spans.is_empty() {
            return (Cow::Borrowed(text), 0);
        }
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for span in &spans {
            out.push_str(&text[last..span.start]);
            self.replace_span(&text[span.clone()], &mut out);
            last = span.end;
        }
        out.push_str(&text[last..]);
        (Cow::Owned(out), spans.len())
    }
}

/// A rule hit remaining in text that should already be clean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residual {
    pub rule: RuleName,
    pub span: Range<usize>,
    pub text: String,
}

impl fmt::Display for Residual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rule matches {:?} at {}..{}",
            self.rule, self.text, self.span.start, self.span.end
        )
    }
}

/// Ordered rule set.
#[derive(Debug, Clone)]
pub struct Scrubber {
    rules: Vec<ScrubRule>,
}

/// Result of scrubbing with per-rule accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrubOutcome {
    pub text: String,
    pub replacements: Vec<(RuleName, usize)>,
}

impl ScrubOutcome {
    pub fn total_replacements(&self) -> usize {
        self.replacements.iter().map(|(_, n)| n).sum()
    }
}

static STANDARD: LazyLock<Scrubber> = LazyLock::new(Scrubber::build_standard);

impl Scrubber {
    /// The nine built-in rules.
    pub fn standard() -> &'static Scrubber {
        &STANDARD
    }

    fn build_standard() -> Scrubber {
        use Edge::*;
        use Replacement::*;
        let rules = vec![
            ScrubRule::new(
                RuleName::Email,
                r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}",
                Any,
                Any,
                Whole(EMAIL),
            ),
            ScrubRule::new(
                RuleName::Url,
                r"(?i:https?://|ftp://|www\.)[A-Za-z0-9\-._~:/?#\[\]@!$&'()*+,;=%]*[A-Za-z0-9/_\-~=#%&+]",
                Any,
                Any,
                Whole(URL),
            ),
            ScrubRule::new(
                RuleName::Ip,
                r"[0-9]{1,3}(?:\.[0-9]{1,3}){3}",
                NotDigitOrDottedDigit,
                NotDigitOrDottedDigit,
                Whole(IP),
            ),
            ScrubRule::new(
                RuleName::Date,
                r"[0-9]{1,2}/[0-9]{1,2}/(?:[0-9]{4}|[0-9]{2})|[0-9]{4}-[0-9]{1,2}-[0-9]{1,2}",
                NotDigit,
                NotDigit,
                Whole(DATE),
            ),
            ScrubRule::new(
                RuleName::Time,
                r"[0-9]{1,2}:[0-9]{2}(?::[0-9]{2})?(?: ?(?i:am|pm)(?-u:\b))?",
                NotDigit,
                NotDigit,
                Whole(TIME),
            ),
            ScrubRule::new(RuleName::Decimal, r"[0-9]+\.[0-9]+", NotDigit, NotDigit, Whole(DECIMAL)),
            ScrubRule::new(
                RuleName::HyphenNumber,
                r"[0-9]+(?:-[0-9]+)+",
                NotDigit,
                NotDigit,
                Whole(NUMBER),
            ),
            ScrubRule::new(
                RuleName::Alphanumeric,
                r"[A-Za-z]+[0-9]{2,}[A-Za-z]*|[0-9]{2,}[A-Za-z]+",
                Any,
                Any,
                DigitRuns(NUMBER),
            ),
            ScrubRule::new(RuleName::Integer, r"[0-9]{2,}", NotDigit, NotDigit, Whole(NUMBER)),
        ];
        Scrubber { rules }
    }

    pub fn rules(&self) -> &[ScrubRule] {
        &self.rules
    }

    /// Scrubs `text`, reporting how many spans each rule replaced.
    pub fn scrub_with_counts(&self, text: &str) -> ScrubOutcome {
        let mut current = normalize_fullwidth_digits(text).into_owned();
        let mut replacements = Vec::new();
        for rule in &self.rules {
            let (next, n) = rule.apply(&current);
            if n > 0 {
                current = next.into_owned();
                replacements.push((rule.name, n));
            }
        }
        ScrubOutcome {
            text: current,
            replacements,
        }
    }

    pub fn scrub(&self, text: &str) -> String {
        self.scrub_with_counts(text).text
    }

    /// Every span of `text` that some rule would still replace.
    pub fn residuals(&self, text: &str) -> Vec<Residual> {
        let text = normalize_fullwidth_digits(text);
        let mut found = Vec::new();
        for rule in &self.rules {
            for span in rule.find_spans(&text) {
                found.push(Residual {
                    rule: rule.name,
                    text: text[span.clone()].to_string(),
                    span,
                });
            }
        }
        found
    }

    pub fn is_clean(&self, text: &str) -> bool {
        let text = normalize_fullwidth_digits(text);
        self.rules.iter().all(|r| r.find_spans(&text).is_empty())
    }
}

/// Maps full-width digits (U+FF10..U+FF19) to ASCII digits.
pub fn normalize_fullwidth_digits(text: &str) -> Cow<'_, str> {
    const FULLWIDTH_ZERO: u32 = 0xFF10;
    let is_fw = |c: char| ('\u{FF10}'..='\u{FF19}').contains(&c);
    if !text.chars().any(is_fw) {
        return Cow::Borrowed(text);
    }
    Cow::Owned(
        text.chars()
            .map(|c| {
                if is_fw(c) {
                    char::from(b'0' + (c as u32 - FULLWIDTH_ZERO) as u8)
                } else {
                    c
                }
            })
            .collect(),
    )
}

/// Replaces every sensitive span in `text` by its placeholder code.
pub fn scrub_body(text: &str) -> String {
    Scrubber::standard().scrub(text)
}
