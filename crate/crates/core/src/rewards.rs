//! Bracketed base-plus-bonus reward schemes and per-message cost accounting.
//!
//! Within bracket `k` a batch of `n` messages earns
//! `base_k + (n - anchor_k) / divisor_k`, capped at the scheme cap, where the
//! anchor is the scheme minimum for the first bracket and the previous
//! bracket's upper bound afterwards. With that anchor every published table
//! is continuous: each bracket's base equals the previous bracket's maximum.
//! Amounts are exact rationals until the final half-up rounding to cents.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::model::{Currency, Money};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("scheme {scheme}, line {line}: {detail}")]
    Syntax {
        scheme: String,
        line: usize,
        detail: String,
    },
    #[error("scheme {scheme}: {detail}")]
    Invalid { scheme: String, detail: String },
    #[error("unknown reward scheme {0:?}")]
    UnknownScheme(String),
    #[error("cost per message needs a positive message count")]
    ZeroCount,
    #[error("no exchange rate for {0}")]
    MissingRate(Currency),
    #[error("cannot read scheme file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bracket {
    pub lower: u64,
    /// Inclusive upper bound; `None` for the open-ended last bracket.
    pub upper: Option<u64>,
    pub base_cents: i64,
    /// Messages per extra currency unit; `None` when the bracket pays no bonus.
    pub divisor: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewardScheme {
    pub name: String,
    pub currency: Currency,
    pub brackets: Vec<Bracket>,
    pub cap_cents: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RewardOutcome {
    pub amount: Money,
    /// Set when `n` is below the scheme minimum; the amount is then zero.
    pub below_minimum: bool,
    /// Index of the bracket that priced the batch.
    pub bracket: Option<usize>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("mturk", include_str!("../schemes/mturk.scheme")),
    ("zhubajie1", include_str!("../schemes/zhubajie1.scheme")),
    ("zhubajie2", include_str!("../schemes/zhubajie2.scheme")),
    ("local", include_str!("../schemes/local.scheme")),
    ("shorttask", include_str!("../schemes/shorttask.scheme")),
];

fn half_up_div(numer: i128, denom: i128) -> i128 {
    debug_assert!(numer >= 0 && denom > 0);
    (2 * numer + denom) / (2 * denom)
}

impl RewardScheme {
    /// Parses the scheme file format: one `lower upper base divisor` line
    /// per bracket (`-` for an open upper bound or no bonus) and a final
    /// `cap <amount> <currency>` line. `#` starts a comment.
    pub fn parse(name: &str, text: &str) -> Result<Self, RewardError> {
        let syntax = |line: usize, detail: &str| RewardError::Syntax {
            scheme: name.to_string(),
            line,
            detail: detail.to_string(),
        };
        let mut brackets = Vec::new();
        let mut cap: Option<(i64, Currency, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if cap.is_some() {
                return Err(syntax(lineno, "content after the cap line"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "cap" {
                let [_, amount, currency] = fields[..] else {
                    return Err(syntax(lineno, "expected `cap <amount> <currency>`"));
                };
                let cents = Money::parse_amount(amount).ok_or_else(|| syntax(lineno, "bad cap amount"))?;
                let currency = currency.parse().map_err(|_| syntax(lineno, "unknown currency"))?;
                cap = Some((cents, currency, lineno));
                continue;
            }
            let [lower, upper, base, divisor] = fields[..] else {
                return Err(syntax(lineno, "expected `lower upper base divisor`"));
            };
            let count = |s: &str, what: &str| -> Result<Option<u64>, RewardError> {
                if s == "-" {
                    return Ok(None);
                }
                s.parse().map(Some).map_err(|_| syntax(lineno, &format!("bad {what}")))
            };
            brackets.push(Bracket {
                lower: count(lower, "lower bound")?.ok_or_else(|| syntax(lineno, "lower bound required"))?,
                upper: count(upper, "upper bound")?,
                base_cents: Money::parse_amount(base).ok_or_else(|| syntax(lineno, "bad base amount"))?,
                divisor: count(divisor, "divisor")?,
            });
        }
        let (cap_cents, currency, _) = cap.ok_or_else(|| syntax(text.lines().count(), "missing cap line"))?;
        let scheme = RewardScheme {
            name: name.to_string(),
            currency,
            brackets,
            cap_cents,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    fn invalid(&self, detail: impl Into<String>) -> RewardError {
        RewardError::Invalid {
            scheme: self.name.clone(),
            detail: detail.into(),
        }
    }

    /// Checks bracket layout and continuity at every boundary.
    fn validate(&self) -> Result<(), RewardError> {
        let Some(last) = self.brackets.last() else {
            return Err(self.invalid("no brackets"));
        };
        if last.upper.is_some() || last.divisor.is_some() {
            return Err(self.invalid("last bracket must be open-ended with no bonus"));
        }
        if last.base_cents != self.cap_cents {
            return Err(self.invalid("last bracket base must equal the cap"));
        }
        if self.cap_cents < 0 || self.brackets.iter().any(|b| b.base_cents < 0) {
            return Err(self.invalid("negative amounts"));
        }
        for (k, pair) in self.brackets.windows(2).enumerate() {
            let (cur, next) = (pair[0], pair[1]);
            let (Some(upper), Some(divisor)) = (cur.upper, cur.divisor) else {
                return Err(self.invalid(format!("bracket {} needs an upper bound and a divisor", k + 1)));
            };
            if divisor == 0 || upper < cur.lower {
                return Err(self.invalid(format!("bracket {} is empty or has a zero divisor", k + 1)));
            }
            if next.lower != upper + 1 {
                return Err(self.invalid(format!("brackets {} and {} are not contiguous", k + 1, k + 2)));
            }
            // |pay(upper) - base_next| < half a cent, in units of cents/divisor.
            let anchor = self.anchor(k);
            let at_upper = cur.base_cents as i128 * divisor as i128 + (upper - anchor) as i128 * 100;
            let gap = (at_upper - next.base_cents as i128 * divisor as i128).abs();
            if 2 * gap >= divisor as i128 {
                return Err(self.invalid(format!(
                    "discontinuous at {upper}: bracket {} ends at {:.4} but bracket {} starts at {}",
                    k + 1,
                    at_upper as f64 / divisor as f64 / 100.0,
                    k + 2,
                    Money::new(next.base_cents, self.currency).amount_string()
                )));
            }
        }
        Ok(())
    }

    /// Accrual origin of bracket `k`.
    pub fn anchor(&self, k: usize) -> u64 {
        if k == 0 {
            self.brackets[0].lower
        } else {
            self.brackets[k - 1].upper.expect("validated")
        }
    }

    pub fn minimum(&self) -> u64 {
        self.brackets[0].lower
    }

    pub fn cap(&self) -> Money {
        Money::new(self.cap_cents, self.currency)
    }

    pub fn bracket_for(&self, n: u64) -> Option<usize> {
        if n < self.minimum() {
            return None;
        }
        self.brackets.iter().position(|b| b.upper.is_none_or(|u| n <= u))
    }

    /// Unrounded, uncapped payout in currency units. Used to check continuity.
    pub fn pay_exact(&self, n: u64) -> Option<f64> {
        let k = self.bracket_for(n)?;
        let b = self.brackets[k];
        let bonus = b.divisor.map_or(0.0, |d| (n - self.anchor(k)) as f64 / d as f64);
        Some(b.base_cents as f64 / 100.0 + bonus)
    }

    pub fn builtin(name: &str) -> Option<RewardScheme> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| RewardScheme::parse(n, text).expect("built-in scheme"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }
}

/// Payout for a batch of `n` messages.
pub fn compute_reward(scheme: &RewardScheme, n: u64) -> RewardOutcome {
    let Some(k) = scheme.bracket_for(n) else {
        return RewardOutcome {
            amount: Money::zero(scheme.currency),
            below_minimum: true,
            bracket: None,
        };
    };
    let b = scheme.brackets[k];
    let bonus = match b.divisor {
        Some(d) => half_up_div((n - scheme.anchor(k)) as i128 * 100, d as i128) as i64,
        None => 0,
    };
    let cents = (b.base_cents + bonus).min(scheme.cap_cents);
    RewardOutcome {
        amount: Money::new(cents, scheme.currency),
        below_minimum: false,
        bracket: Some(k),
    }
}

/// Named schemes available to moderation: the built-ins plus any loaded
/// from `*.scheme` files.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<String, RewardScheme>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SchemeRegistry {
    pub fn builtin() -> Self {
        let schemes = RewardScheme::builtin_names()
            .map(|n| (n.to_string(), RewardScheme::builtin(n).expect("listed")))
            .collect();
        SchemeRegistry { schemes }
    }

    /// Adds every `*.scheme` file in `dir`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), RewardError> {
        let entries = std::fs::read_dir(dir).map_err(|e| RewardError::Io(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| RewardError::Io(e.to_string()))?.path();
            if path.extension().is_some_and(|e| e == "scheme") {
                self.load_file(&path)?;
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<RewardScheme, RewardError> {
        let text = std::fs::read_to_string(path).map_err(|e| RewardError::Io(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scheme")
            .to_string();
        let scheme = RewardScheme::parse(&name, &text)?;
        self.schemes.insert(name, scheme.clone());
        Ok(scheme)
    }

    pub fn get(&self, name: &str) -> Option<&RewardScheme> {
        self.schemes.get(name)
    }

    /// Looks up a registered name, falling back to reading `name` as a path.
    pub fn resolve(&self, name_or_path: &str) -> Result<RewardScheme, RewardError> {
        if let Some(s) = self.schemes.get(name_or_path) {
            return Ok(s.clone());
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return self.clone().load_file(path);
        }
        Err(RewardError::UnknownScheme(name_or_path.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schemes.keys().map(String::as_str)
    }
}

/// Conversion rates into USD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FxTable {
    rates: BTreeMap<Currency, f64>,
}

impl Default for FxTable {
    /// Rates as of 23 October 2011.
    fn default() -> Self {
        FxTable::new([(Currency::Usd, 1.0), (Currency::Sgd, 0.7848), (Currency::Cny, 0.1567)]).expect("positive")
    }
}

impl FxTable {
    pub fn new(rates: impl IntoIterator<Item = (Currency, f64)>) -> Result<Self, String> {
        let rates: BTreeMap<Currency, f64> = rates.into_iter().collect();
        if let Some((c, r)) = rates.iter().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
            return Err(format!("rate for {c} must be positive, got {r}"));
        }
        Ok(FxTable { rates })
    }

    pub fn usd_rate(&self, currency: Currency) -> Option<f64> {
        self.rates.get(&currency).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostPerMessage {
    pub currency: Currency,
    pub native: f64,
    pub usd: f64,
}

impl CostPerMessage {
    /// Native cost per message to three significant figures.
    pub fn native_rounded(&self) -> f64 {
        round_significant(self.native, 3)
    }

    /// USD equivalent to four decimals; for USD totals this is the native
    /// figure.
    pub fn usd_rounded(&self) -> f64 {
        if self.currency == Currency::Usd {
            self.native_rounded()
        } else {
            round_decimals(self.usd, 4)
        }
    }
}

impl fmt::Display for CostPerMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.currency, self.native_rounded())?;
        if self.currency != Currency::Usd {
            write!(f, " (~USD {})", self.usd_rounded())?;
        }
        Ok(())
    }
}

pub fn cost_per_message(total: Money, n: u64, fx: &FxTable) -> Result<CostPerMessage, RewardError> {
    if n == 0 {
        return Err(RewardError::ZeroCount);
    }
    let rate = fx
        .usd_rate(total.currency)
        .ok_or(RewardError::MissingRate(total.currency))?;
    let native = total.cents as f64 / 100.0 / n as f64;
    Ok(CostPerMessage {
        currency: total.currency,
        native,
        usd: native * rate,
    })
}

pub fn round_decimals(x: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (x * scale).round() / scale
}

pub fn round_significant(x: f64, figures: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    round_decimals(x, figures - 1 - magnitude)
}
