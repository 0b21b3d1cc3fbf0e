//! Phone-export archives in the canonical CSV and XML schemas.
//!
//! CSV: header `direction,peer_number,timestamp,body`, RFC 4180 quoting.
//! XML: `<messages>` root holding `<message direction= peer= time=>body</message>`.
//!
//! Only sent messages are kept; received rows are dropped with a warning.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{decode_utf8, parse_timestamp, IngestError, RawMessage, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Xml,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExportParse {
    pub messages: Vec<RawMessage>,
    pub warnings: Vec<String>,
}

enum Direction {
    Sent,
    Received,
    Other,
}

fn direction(text: &str) -> Direction {
    match text.trim().to_ascii_lowercase().as_str() {
        "sent" | "outbox" | "out" | "outgoing" => Direction::Sent,
        "received" | "inbox" | "in" | "incoming" => Direction::Received,
        _ => Direction::Other,
    }
}

/// Shared per-record handling for both schemas.
fn accept_record(
    record: usize,
    dir: &str,
    peer: Option<&str>,
    time: Option<&str>,
    body: String,
    out: &mut ExportParse,
) {
    match direction(dir) {
        Direction::Sent => {}
        Direction::Received => {
            out.warnings.push(format!(
                "record {record}: received message dropped (sent messages only)"
            ));
            return;
        }
        Direction::Other => {
            out.warnings
                .push(format!("record {record}: unknown direction {dir:?}, dropped"));
            return;
        }
    }
    if body.trim().is_empty() {
        out.warnings.push(format!("record {record}: empty body dropped"));
        return;
    }
    let sent_at = match time.map(str::trim).filter(|t| !t.is_empty() && *t != "-") {
        None => None,
        Some(t) => {
            let parsed = parse_timestamp(t);
            if parsed.is_none() {
                out.warnings
                    .push(format!("record {record}: unparseable timestamp {t:?} ignored"));
            }
            parsed
        }
    };
    let receiver_raw = peer
        .map(str::trim)
        .filter(|p| !p.is_empty() && *p != "-")
        .map(str::to_string);
    out.messages.push(RawMessage {
        body_raw: body,
        sender_raw: None,
        receiver_raw,
        sent_at,
    });
}

/// Parses an export archive. Without a hint the schema is sniffed from the
/// first bytes.
pub fn parse_export(payload: &[u8], hint: Option<ExportFormat>) -> Result<ExportParse, IngestError> {
    let text = decode_utf8(payload)?;
    let format = match hint {
        Some(f) => f,
        None => {
            let trimmed = text.trim_start();
            if trimmed.starts_with('<') {
                ExportFormat::Xml
            } else if trimmed
                .lines()
                .next()
                .is_some_and(|l| l.trim().eq_ignore_ascii_case(CSV_HEADER))
            {
                ExportFormat::Csv
            } else {
                return Err(IngestError::NoSchema);
            }
        }
    };
    let parsed = match format {
        ExportFormat::Csv => parse_csv(text)?,
        ExportFormat::Xml => parse_xml(text)?,
    };
    if parsed.messages.is_empty() {
        return Err(IngestError::NoSentRows);
    }
    Ok(parsed)
}

fn parse_csv(text: &str) -> Result<ExportParse, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::NoSchema);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|_| IngestError::NoSchema)?;
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names != ["direction", "peer_number", "timestamp", "body"] {
        return Err(IngestError::NoSchema);
    }
    let mut out = ExportParse::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::MalformedRow {
            row,
            detail: e.to_string(),
        })?;
        accept_record(
            row,
            &record[0],
            Some(&record[1]),
            Some(&record[2]),
            record[3].to_string(),
            &mut out,
        );
    }
    Ok(out)
}

fn xml_err(reader: &Reader<&[u8]>, detail: impl ToString) -> IngestError {
    IngestError::Xml {
        position: reader.buffer_position(),
        detail: detail.to_string(),
    }
}

#[derive(Default)]
struct XmlRecord {
    direction: String,
    peer: Option<String>,
    time: Option<String>,
}

fn read_message_attrs(reader: &Reader<&[u8]>, start: &BytesStart<'_>) -> Result<XmlRecord, IngestError> {
    let mut rec = XmlRecord::default();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| xml_err(reader, e))?;
        let value = attr.unescape_value().map_err(|e| xml_err(reader, e))?.into_owned();
        match attr.key.as_ref() {
            b"direction" => rec.direction = value,
            b"peer" => rec.peer = Some(value),
            b"time" => rec.time = Some(value),
            _ => {}
        }
    }
    Ok(rec)
}

fn parse_xml(text: &str) -> Result<ExportParse, IngestError> {
    let mut reader = Reader::from_reader(text.as_bytes());
    reader.config_mut().trim_text(false);
    let mut out = ExportParse::default();
    let mut seen_root = false;
    let mut current: Option<(XmlRecord, String)> = None;
    let mut record = 0;
    loop {
        let event = reader.read_event().map_err(|e| xml_err(&reader, e))?;
        match event {
            Event::Start(e) => match (e.name().as_ref(), seen_root, current.is_some()) {
                (b"messages", false, _) => seen_root = true,
                (b"message", true, false) => current = Some((read_message_attrs(&reader, &e)?, String::new())),
                (name, _, _) => {
                    return Err(xml_err(
                        &reader,
                        format!("unexpected element <{}>", String::from_utf8_lossy(name)),
                    ))
                }
            },
            Event::Empty(e) => match (e.name().as_ref(), seen_root, current.is_some()) {
                (b"messages", false, _) => return Ok(out),
                (b"message", true, false) => {
                    record += 1;
                    let rec = read_message_attrs(&reader, &e)?;
                    accept_record(
                        record,
                        &rec.direction,
                        rec.peer.as_deref(),
                        rec.time.as_deref(),
                        String::new(),
                        &mut out,
                    );
                }
                (name, _, _) => {
                    return Err(xml_err(
                        &reader,
                        format!("unexpected element <{}/>", String::from_utf8_lossy(name)),
                    ))
                }
            },
            Event::Text(t) => {
                let value = t.unescape().map_err(|e| xml_err(&reader, e))?;
                match current.as_mut() {
                    Some((_, body)) => body.push_str(&value),
                    None if value.trim().is_empty() => {}
                    None => return Err(xml_err(&reader, "text outside <message>")),
                }
            }
            Event::CData(c) => match current.as_mut() {
                Some((_, body)) => body.push_str(&String::from_utf8_lossy(&c.into_inner())),
                None => return Err(xml_err(&reader, "CDATA outside <message>")),
            },
            Event::End(e) => match e.name().as_ref() {
                b"message" => {
                    let (rec, body) = current.take().ok_or_else(|| xml_err(&reader, "stray </message>"))?;
                    record += 1;
                    accept_record(
                        record,
                        &rec.direction,
                        rec.peer.as_deref(),
                        rec.time.as_deref(),
                        body,
                        &mut out,
                    );
                }
                b"messages" => return Ok(out),
                _ => return Err(xml_err(&reader, "unexpected end tag")),
            },
            Event::Eof => {
                return if seen_root {
                    Err(xml_err(&reader, "unterminated <messages>"))
                } else {
                    Err(IngestError::NoSchema)
                };
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
}
