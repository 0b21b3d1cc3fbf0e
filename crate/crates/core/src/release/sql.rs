//! Portable SQL dump: plain DDL and one INSERT per row for the `profiles`,
//! `messages` and `versions` tables.

use std::collections::BTreeMap;

use chrono::SecondsFormat;

use super::xml::format_date;
use super::ReleaseContent;
use crate::model::CorpusVersion;

const DDL: &str = "\
CREATE TABLE profiles (
  id VARCHAR(64) PRIMARY KEY,
  age VARCHAR(16) NOT NULL,
  gender VARCHAR(16) NOT NULL,
  country VARCHAR(128) NOT NULL,
  native_speaker VARCHAR(16) NOT NULL,
  input_method VARCHAR(128) NOT NULL,
  daily_sms VARCHAR(16) NOT NULL,
  years_sms VARCHAR(16) NOT NULL,
  phone_brand VARCHAR(128) NOT NULL,
  phone_model VARCHAR(128) NOT NULL,
  smartphone VARCHAR(16) NOT NULL
);
CREATE TABLE messages (
  id VARCHAR(64) PRIMARY KEY,
  batch_id VARCHAR(64) NOT NULL,
  body TEXT NOT NULL,
  language VARCHAR(16) NOT NULL,
  collection_method VARCHAR(16) NOT NULL,
  source VARCHAR(16) NOT NULL,
  profile_id VARCHAR(64) REFERENCES profiles(id),
  sent_at VARCHAR(40),
  sender_token VARCHAR(32),
  receiver_token VARCHAR(32)
);
CREATE TABLE versions (
  version_id CHAR(7) PRIMARY KEY,
  created_at VARCHAR(40) NOT NULL,
  message_count_en INTEGER NOT NULL,
  message_count_zh INTEGER NOT NULL
);
";

fn quote(out: &mut String, value: &str) {
    out.push('\'');
    for c in value.chars() {
        if c == '\'' {
            out.push('\'');
        }
        out.push(c);
    }
    out.push('\'');
}

fn insert(out: &mut String, table: &str, columns: &[&str], values: &[Option<&str>]) {
    out.push_str("INSERT INTO ");
    out.push_str(table);
    out.push_str(" (");
    out.push_str(&columns.join(", "));
    out.push_str(") VALUES (");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match v {
            Some(v) => quote(out, v),
            None => out.push_str("NULL"),
        }
    }
    out.push_str(");\n");
}

/// Renders the dump. `history` holds the earlier versions, oldest first;
/// `current` is the version being released (its checksums are not part of
/// the dump).
pub fn render_sql(content: &ReleaseContent, history: &[CorpusVersion], en: u64, zh: u64) -> String {
    let mut out = format!("-- SMS corpus release {}\n", content.version);
    out.push_str(DDL);
    const PROFILE_COLUMNS: &[&str] = &[
        "id",
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
    for p in &content.profiles {
        let values: Vec<Option<&str>> = PROFILE_COLUMNS
            .iter()
            .map(|c| {
                Some(if *c == "id" {
                    p.id.as_str()
                } else {
                    p.field(c).expect("known field")
                })
            })
            .collect();
        insert(&mut out, "profiles", PROFILE_COLUMNS, &values);
    }
    const MESSAGE_COLUMNS: &[&str] = &[
        "id",
        "batch_id",
        "body",
        "language",
        "collection_method",
        "source",
        "profile_id",
        "sent_at",
        "sender_token",
        "receiver_token",
    ];
    for m in &content.messages {
        let time = m.sent_at.map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true));
        insert(
            &mut out,
            "messages",
            MESSAGE_COLUMNS,
            &[
                Some(&m.id),
                Some(&m.batch_id),
                Some(&m.body),
                Some(m.language.as_str()),
                Some(m.method.as_str()),
                Some(m.source.as_str()),
                m.profile_id.as_deref(),
                time.as_deref(),
                m.sender_token.as_deref(),
                m.receiver_token.as_deref(),
            ],
        );
    }
    const VERSION_COLUMNS: &[&str] = &["version_id", "created_at", "message_count_en", "message_count_zh"];
    let mut version_row = |id: String, created: String, en: u64, zh: u64| {
        out.push_str("INSERT INTO versions (");
        out.push_str(&VERSION_COLUMNS.join(", "));
        out.push_str(") VALUES (");
        quote(&mut out, &id);
        out.push_str(", ");
        quote(&mut out, &created);
        out.push_str(&format!(", {en}, {zh});\n"));
    };
    for v in history {
        version_row(
            v.version_id.to_string(),
            format_date(&v.created_at),
            v.message_count_en,
            v.message_count_zh,
        );
    }
    version_row(content.version.to_string(), format_date(&content.date), en, zh);
    out
}

/// Counts INSERT statements per table, honoring quoted literals and
/// `--` comments.
pub fn count_sql_rows(sql: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    let mut statement = String::new();
    let mut in_quote = false;
    let mut chars = sql.chars().peekable();
    let mut finish = |stmt: &str| {
        let words: Vec<&str> = stmt.split_whitespace().take(3).collect();
        if words.len() == 3 && words[0].eq_ignore_ascii_case("insert") && words[1].eq_ignore_ascii_case("into") {
            let table = words[2].split('(').next().unwrap_or("").to_string();
            *counts.entry(table).or_insert(0) += 1;
        }
    };
    while let Some(c) = chars.next() {
        if in_quote {
            if c == '\'' {
                if chars.peek() == Some(&'\'') {
                    chars.next();
                    continue;
                }
                in_quote = false;
            }
            continue;
        }
        match c {
            '\'' => {
                in_quote = true;
                statement.push(c);
            }
            '-' if chars.peek() == Some(&'-') => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
                statement.push(' ');
            }
            ';' => {
                finish(&statement);
                statement.clear();
            }
            c => statement.push(c),
        }
    }
    finish(&statement);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_ignores_quoted_semicolons() {
        let sql = "-- header; INSERT INTO x\nCREATE TABLE t (a TEXT);\n\
                   INSERT INTO messages (a) VALUES ('it''s; INSERT INTO messages');\n\
                   INSERT INTO messages (a) VALUES ('--not a comment');\n\
                   INSERT INTO profiles (a) VALUES (NULL);\n";
        let counts = count_sql_rows(sql);
        assert_eq!(counts["messages"], 2);
        assert_eq!(counts["profiles"], 1);
        assert_eq!(counts.get("x"), None);
    }
}
