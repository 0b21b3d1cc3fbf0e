//! XML dump: `<smsCorpus version= date=>` holding `<message>` elements
//! (sorted by id, body as text content) followed by `<profile/>` elements.

use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{ReleaseContent, ReleasedMessage};
use crate::ingest::parse_timestamp;
use crate::model::UserProfile;

/// Profile attribute names in dump order, paired with the profile field.
pub const PROFILE_ATTRS: &[(&str, &str)] = &[
    ("age", "age"),
    ("gender", "gender"),
    ("country", "country"),
    ("native", "native_speaker"),
    ("input", "input_method"),
    ("daily", "daily_sms"),
    ("years", "years_sms"),
    ("brand", "phone_brand"),
    ("model", "phone_model"),
    ("smartphone", "smartphone"),
];

const MESSAGE_ATTRS: &[&str] = &[
    "id", "batch", "language", "method", "source", "profile", "time", "sender", "receiver",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {detail}")]
pub struct XmlSchemaError {
    pub line: usize,
    pub column: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRelease {
    pub content: ReleaseContent,
    pub warnings: Vec<String>,
}

fn escape_into(out: &mut String, text: &str, attribute: bool) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\'' if attribute => out.push_str("&apos;"),
            '\n' | '\t' if !attribute => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{7F}' => out.push_str(&format!("&#x{:X};", c as u32)),
            c => out.push(c),
        }
    }
}

fn attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    escape_into(out, value, true);
    out.push('"');
}

pub fn format_date(date: &DateTime<Utc>) -> String {
    date.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn render_xml(content: &ReleaseContent) -> String {
    let mut out = String::with_capacity(256 + content.messages.len() * 256);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<smsCorpus");
    attr(&mut out, "version", &content.version.to_string());
    attr(&mut out, "date", &format_date(&content.date));
    out.push_str(">\n");
    for m in &content.messages {
        out.push_str("  <message");
        attr(&mut out, "id", &m.id);
        attr(&mut out, "batch", &m.batch_id);
        attr(&mut out, "language", m.language.as_str());
        attr(&mut out, "method", m.method.as_str());
        attr(&mut out, "source", m.source.as_str());
        if let Some(p) = &m.profile_id {
            attr(&mut out, "profile", p);
        }
        if let Some(t) = &m.sent_at {
            attr(&mut out, "time", &t.to_rfc3339_opts(SecondsFormat::AutoSi, true));
        }
        if let Some(s) = &m.sender_token {
            attr(&mut out, "sender", s);
        }
        if let Some(r) = &m.receiver_token {
            attr(&mut out, "receiver", r);
        }
        out.push('>');
        escape_into(&mut out, &m.body, false);
        out.push_str("</message>\n");
    }
    for p in &content.profiles {
        out.push_str("  <profile");
        attr(&mut out, "id", &p.id);
        for (name, field) in PROFILE_ATTRS {
            attr(&mut out, name, p.field(field).expect("known field"));
        }
        out.push_str("/>\n");
    }
    out.push_str("</smsCorpus>\n");
    out
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn error(&self, pos: u64, detail: impl Into<String>) -> XmlSchemaError {
        let mut pos = (pos as usize).min(self.text.len());
        while !self.text.is_char_boundary(pos) {
            pos -= 1;
        }
        let before = &self.text[..pos];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
        XmlSchemaError {
            line,
            column,
            detail: detail.into(),
        }
    }
}

fn attributes(
    loc: &Locator<'_>,
    pos: u64,
    start: &BytesStart<'_>,
    known: &[&str],
    warnings: &mut Vec<String>,
) -> Result<Vec<(String, String)>, XmlSchemaError> {
    let element = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut out = Vec::new();
    for a in start.attributes() {
        let a = a.map_err(|e| loc.error(pos, e.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|e| loc.error(pos, e.to_string()))?
            .into_owned();
        if known.contains(&key.as_str()) {
            out.push((key, value));
        } else {
            let e = loc.error(pos, "");
            warnings.push(format!(
                "line {}, column {}: ignored unknown attribute {key:?} on <{element}>",
                e.line, e.column
            ));
        }
    }
    Ok(out)
}

fn take(attrs: &mut Vec<(String, String)>, key: &str) -> Option<String> {
    let i = attrs.iter().position(|(k, _)| k == key)?;
    Some(attrs.remove(i).1)
}

fn required(
    loc: &Locator<'_>,
    pos: u64,
    attrs: &mut Vec<(String, String)>,
    element: &str,
    key: &str,
) -> Result<String, XmlSchemaError> {
    take(attrs, key).ok_or_else(|| loc.error(pos, format!("<{element}> is missing mandatory attribute {key:?}")))
}

fn parse_label<T: std::str::FromStr<Err = crate::model::UnknownLabel>>(
    loc: &Locator<'_>,
    pos: u64,
    value: &str,
) -> Result<T, XmlSchemaError> {
    value
        .parse()
        .map_err(|e: crate::model::UnknownLabel| loc.error(pos, e.to_string()))
}

fn start_message(
    loc: &Locator<'_>,
    pos: u64,
    start: &BytesStart<'_>,
    warnings: &mut Vec<String>,
) -> Result<ReleasedMessage, XmlSchemaError> {
    let mut a = attributes(loc, pos, start, MESSAGE_ATTRS, warnings)?;
    let id = required(loc, pos, &mut a, "message", "id")?;
    let batch_id = required(loc, pos, &mut a, "message", "batch")?;
    let language = parse_label(loc, pos, &required(loc, pos, &mut a, "message", "language")?)?;
    let method = parse_label(loc, pos, &required(loc, pos, &mut a, "message", "method")?)?;
    let source = parse_label(loc, pos, &required(loc, pos, &mut a, "message", "source")?)?;
    let sent_at = match take(&mut a, "time") {
        None => None,
        Some(t) => Some(parse_timestamp(&t).ok_or_else(|| loc.error(pos, format!("invalid time {t:?}")))?),
    };
    Ok(ReleasedMessage {
        id,
        batch_id,
        body: String::new(),
        language,
        method,
        source,
        profile_id: take(&mut a, "profile"),
        sent_at,
        sender_token: take(&mut a, "sender"),
        receiver_token: take(&mut a, "receiver"),
    })
}

fn read_profile(
    loc: &Locator<'_>,
    pos: u64,
    start: &BytesStart<'_>,
    warnings: &mut Vec<String>,
) -> Result<UserProfile, XmlSchemaError> {
    let known: Vec<&str> = std::iter::once("id")
        .chain(PROFILE_ATTRS.iter().map(|(n, _)| *n))
        .collect();
    let mut a = attributes(loc, pos, start, &known, warnings)?;
    let mut profile = UserProfile::unknown(required(loc, pos, &mut a, "profile", "id")?);
    for (name, field) in PROFILE_ATTRS {
        let value = required(loc, pos, &mut a, "profile", name)?;
        profile
            .set_field(field, &value)
            .map_err(|e| loc.error(pos, format!("profile {}: {e}", profile.id)))?;
    }
    Ok(profile)
}

/// Reads an XML dump back. Unknown attributes are ignored with a warning;
/// anything else outside the schema is an error with its line and column.
pub fn parse_release_xml(bytes: &[u8]) -> Result<ParsedRelease, XmlSchemaError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let loc = Locator {
            text: std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or(""),
        };
        loc.error(e.valid_up_to() as u64, "not valid UTF-8")
    })?;
    let loc = Locator { text };
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(false);
    let mut warnings = Vec::new();
    let mut header: Option<(crate::model::VersionId, DateTime<Utc>)> = None;
    let mut finished = false;
    let mut messages: Vec<ReleasedMessage> = Vec::new();
    let mut profiles: Vec<UserProfile> = Vec::new();
    let mut open: Option<ReleasedMessage> = None;
    let mut in_profile = false;
    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| loc.error(reader.error_position(), e.to_string()))?;
        let unexpected = |what: &str| loc.error(pos, format!("unexpected {what}"));
        match event {
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Start(e) | Event::Empty(e) if finished => {
                return Err(unexpected(&format!(
                    "<{}> after </smsCorpus>",
                    String::from_utf8_lossy(e.name().as_ref())
                )))
            }
            Event::Start(e) if header.is_none() => {
                if e.name().as_ref() != b"smsCorpus" {
                    return Err(loc.error(pos, "root element must be <smsCorpus>"));
                }
                let mut a = attributes(&loc, pos, &e, &["version", "date"], &mut warnings)?;
                let version = required(&loc, pos, &mut a, "smsCorpus", "version")?;
                let version = version
                    .parse()
                    .map_err(|e: crate::model::InvalidVersionId| loc.error(pos, e.to_string()))?;
                let date = required(&loc, pos, &mut a, "smsCorpus", "date")?;
                let date = DateTime::parse_from_rfc3339(&date)
                    .map_err(|_| loc.error(pos, format!("invalid date {date:?}")))?
                    .with_timezone(&Utc);
                header = Some((version, date));
            }
            Event::Empty(e) if header.is_none() => {
                return Err(loc.error(
                    pos,
                    format!(
                        "root element must be <smsCorpus>, found <{}/>",
                        String::from_utf8_lossy(e.name().as_ref())
                    ),
                ))
            }
            Event::Start(e) if open.is_none() && e.name().as_ref() == b"message" => {
                open = Some(start_message(&loc, pos, &e, &mut warnings)?);
            }
            Event::Empty(e) if open.is_none() && e.name().as_ref() == b"message" => {
                messages.push(start_message(&loc, pos, &e, &mut warnings)?);
            }
            Event::Empty(e) if open.is_none() && !in_profile && e.name().as_ref() == b"profile" => {
                profiles.push(read_profile(&loc, pos, &e, &mut warnings)?);
            }
            Event::Start(e) if open.is_none() && !in_profile && e.name().as_ref() == b"profile" => {
                profiles.push(read_profile(&loc, pos, &e, &mut warnings)?);
                in_profile = true;
            }
            Event::Start(e) | Event::Empty(e) => {
                return Err(unexpected(&format!(
                    "element <{}>",
                    String::from_utf8_lossy(e.name().as_ref())
                )))
            }
            Event::Text(t) => {
                let value = t.unescape().map_err(|e| loc.error(pos, e.to_string()))?;
                match open.as_mut() {
                    Some(m) => m.body.push_str(&value),
                    None if value.trim().is_empty() => {}
                    None if in_profile => return Err(unexpected("text inside <profile>")),
                    None => return Err(unexpected("text outside <message>")),
                }
            }
            Event::CData(c) => match open.as_mut() {
                Some(m) => m.body.push_str(&String::from_utf8_lossy(&c.into_inner())),
                None => return Err(unexpected("CDATA outside <message>")),
            },
            Event::End(e) => match (e.name().as_ref(), open.take()) {
                (b"message", Some(m)) => messages.push(m),
                (b"profile", None) if in_profile => in_profile = false,
                (b"smsCorpus", None) if header.is_some() && !finished => finished = true,
                (name, _) => return Err(unexpected(&format!("</{}>", String::from_utf8_lossy(name)))),
            },
            Event::Eof => break,
        }
    }
    let Some((version, date)) = header else {
        return Err(loc.error(text.len() as u64, "missing <smsCorpus> root"));
    };
    if !finished {
        return Err(loc.error(text.len() as u64, "unterminated <smsCorpus>"));
    }
    Ok(ParsedRelease {
        content: ReleaseContent {
            version,
            date,
            messages,
            profiles,
        },
        warnings,
    })
}
