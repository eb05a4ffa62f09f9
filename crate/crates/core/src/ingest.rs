//! Record parsers: the canonical tab-separated line format plus adapters for
//! full-text grant pages, application pages and search hit lists.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{parse_ipc, IpcCode, Kind, PatentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    GrantHtml,
    ApplicationHtml,
    Canonical,
}

#[derive(Debug, Clone)]
pub struct RecordSource {
    pub kind: SourceKind,
    pub origin: PathBuf,
}

impl RecordSource {
    /// Records from the source. HTML sources yield exactly one item.
    pub fn records(&self) -> Result<Box<dyn Iterator<Item = Result<PatentRecord>>>> {
        match self.kind {
            SourceKind::Canonical => {
                let f = std::fs::File::open(&self.origin)?;
                Ok(Box::new(read_canonical(std::io::BufReader::new(f))))
            }
            SourceKind::GrantHtml | SourceKind::ApplicationHtml => {
                let bytes = std::fs::read(&self.origin)?;
                let rec = if self.kind == SourceKind::GrantHtml {
                    parse_grant_page(&bytes)
                } else {
                    parse_application_page(&bytes)
                };
                Ok(Box::new(std::iter::once(rec)))
            }
        }
    }
}

// ---- canonical format ----

/// Lazily parsed canonical records. Blank lines are skipped.
pub struct CanonicalReader<R> {
    inner: R,
    buf: String,
    line_no: usize,
}

pub fn read_canonical<R: BufRead>(inner: R) -> CanonicalReader<R> {
    CanonicalReader {
        inner,
        buf: String::new(),
        line_no: 0,
    }
}

impl<R: BufRead> Iterator for CanonicalReader<R> {
    type Item = Result<PatentRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.line_no += 1;
                    return Some(Err(Error::MalformedRecord {
                        line: self.line_no,
                        reason: e.to_string(),
                    }));
                }
            }
            self.line_no += 1;
            let line = self.buf.strip_suffix('\n').unwrap_or(&self.buf);
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_canonical_line(line, self.line_no));
        }
    }
}

pub fn parse_canonical_line(line: &str, line_no: usize) -> Result<PatentRecord> {
    let bad = |reason: String| Error::MalformedRecord {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.splitn(6, '\t').collect();
    if fields.len() != 6 {
        return Err(bad(format!("expected 6 tab-separated fields, got {}", fields.len())));
    }
    let patent_id = fields[0].trim();
    if patent_id.is_empty() {
        return Err(bad("empty patent id".into()));
    }
    let kind = match fields[1] {
        "G" => Kind::Grant,
        "A" => Kind::Application,
        k => return Err(bad(format!("unknown kind {k:?}"))),
    };
    let date = match fields[2] {
        "?" | "" => None,
        d => {
            let parsed = NaiveDate::parse_from_str(d, "%Y-%m-%d").ok();
            if parsed.is_none() {
                log::warn!("line {line_no}: unparsable date {d:?}, kept as unknown");
            }
            parsed
        }
    };
    let mut ipc_codes = Vec::new();
    for item in fields[3].split(';').filter(|s| !s.trim().is_empty()) {
        ipc_codes.push(parse_ipc(item).map_err(|e| bad(e.to_string()))?);
    }
    if ipc_codes.is_empty() {
        return Err(bad("empty ipc list".into()));
    }
    let cited_ids = fields[4]
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    Ok(PatentRecord {
        patent_id: patent_id.to_string(),
        kind,
        date,
        ipc_codes,
        cited_ids,
        title: fields[5].to_string(),
    })
}

fn clean_field(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

pub fn format_canonical(rec: &PatentRecord) -> String {
    let date = rec
        .date
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| "?".into());
    let ipc: Vec<&str> = rec.ipc_codes.iter().map(|c| c.full_symbol.as_str()).collect();
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\n",
        clean_field(&rec.patent_id),
        rec.kind.tag(),
        date,
        ipc.join(";"),
        rec.cited_ids.join(";"),
        clean_field(&rec.title)
    )
}

pub fn write_canonical<W: Write>(mut w: W, rec: &PatentRecord) -> std::io::Result<()> {
    w.write_all(format_canonical(rec).as_bytes())
}

// ---- HTML adapters ----

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);?").unwrap());
static TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<title>\s*United States Patent( Application)?\s*:\s*([^<]*?)\s*</title>").unwrap());
static FONT_TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?is)<font\s+size\s*=\s*"?\+1"?\s*>(.*?)</font>"#).unwrap());
static DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec)[a-z]*\.?\s+(\d{1,2}),\s*(\d{4})\b").unwrap()
});
static ANCHOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?is)<a\s([^>]*)>(.*?)</a>"#).unwrap());
static HREF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?is)href\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap());
static PATENT_NO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:RE|PP|D|H|T)?\d{4,8}$").unwrap());
static HITS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)hits\s+\d+\s+through\s+\d+\s+out\s+of\s+(\d+)|:\s*(\d+)\s+(?:patents|applications)\b").unwrap()
});
static NO_HITS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)no\s+(?:patents|applications)\s+have\s+matched").unwrap());

const IPC_LABELS: [&str; 3] = [
    "Current International Class:",
    "International Class:",
    "Intern'l Class:",
];

fn decode_entities(s: &str) -> String {
    ENTITY
        .replace_all(s, |c: &regex::Captures| {
            let name = &c[1];
            let ch = if let Some(hex) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
            } else if let Some(dec) = name.strip_prefix('#') {
                dec.parse().ok().and_then(char::from_u32)
            } else {
                match name.to_ascii_lowercase().as_str() {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some(' '),
                    _ => None,
                }
            };
            ch.map(String::from).unwrap_or_else(|| c[0].to_string())
        })
        .into_owned()
}

/// Tags removed, entities decoded, whitespace collapsed.
pub fn html_text(fragment: &str) -> String {
    let stripped = TAG.replace_all(fragment, " ");
    let decoded = decode_entities(&stripped);
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn find_ci(hay: &str, needle: &str) -> Option<usize> {
    let h = hay.to_ascii_lowercase();
    h.find(&needle.to_ascii_lowercase())
}

/// Text of the table cell that follows a field label, or the rest of the label's own cell.
fn field_after_label(html: &str, labels: &[&str]) -> Option<String> {
    for label in labels {
        let Some(pos) = find_ci(html, label) else {
            continue;
        };
        let rest = &html[pos + label.len()..];
        let lower = rest.to_ascii_lowercase();
        let own_end = ["</td>", "</th>"].iter().filter_map(|m| lower.find(m)).min();
        let own = &rest[..own_end.unwrap_or(rest.len())];
        let own_text = html_text(own);
        if !own_text.is_empty() {
            return Some(own_text);
        }
        let Some(end) = own_end else {
            continue;
        };
        let after = &rest[end..];
        let lower = after.to_ascii_lowercase();
        let start = lower.find("<td").and_then(|i| after[i..].find('>').map(|j| i + j + 1))?;
        let cell = &after[start..];
        let lower = cell.to_ascii_lowercase();
        let stop = ["</td>", "</tr>", "</table>"]
            .iter()
            .filter_map(|m| lower.find(m))
            .min()
            .unwrap_or(cell.len());
        let text = html_text(&cell[..stop]);
        if !text.is_empty() {
            return Some(text);
        }
    }
    None
}

fn parse_date(text: &str) -> Option<NaiveDate> {
    let c = DATE.captures(text)?;
    let month = match c[1].to_ascii_lowercase().as_str() {
        "jan" => 1,
        "feb" => 2,
        "mar" => 3,
        "apr" => 4,
        "may" => 5,
        "jun" => 6,
        "jul" => 7,
        "aug" => 8,
        "sep" => 9,
        "oct" => 10,
        "nov" => 11,
        _ => 12,
    };
    NaiveDate::from_ymd_opt(c[3].parse().ok()?, month, c[2].parse().ok()?)
}

fn parse_ipc_field(html: &str) -> Result<Vec<IpcCode>> {
    let field = field_after_label(html, &IPC_LABELS).ok_or(Error::ParseFailure { field: "ipc" })?;
    let codes: Vec<IpcCode> = field
        .split(';')
        .filter_map(|item| {
            let item = item.split('(').next().unwrap_or("");
            // application pages append a version date and a compact repeat of the symbol
            let item = item
                .split_whitespace()
                .take_while(|t| !(t.len() >= 8 && t.bytes().all(|b| b.is_ascii_digit())))
                .collect::<Vec<_>>()
                .join(" ");
            if item.is_empty() {
                return None;
            }
            match parse_ipc(&item) {
                Ok(c) => Some(c),
                Err(_) => {
                    log::debug!("skipping unparsable classification {item:?}");
                    None
                }
            }
        })
        .collect();
    if codes.is_empty() {
        return Err(Error::ParseFailure { field: "ipc" });
    }
    Ok(codes)
}

fn page_id(html: &str, application: bool) -> Result<String> {
    let c = TITLE.captures(html).ok_or(Error::ParseFailure { field: "patent_id" })?;
    if c.get(1).is_some() != application {
        return Err(Error::ParseFailure { field: "patent_id" });
    }
    let id: String = html_text(&c[2])
        .chars()
        .filter(|ch| !matches!(ch, ',' | ' '))
        .collect();
    if id.is_empty() {
        return Err(Error::ParseFailure { field: "patent_id" });
    }
    Ok(id)
}

fn page_title(html: &str) -> String {
    FONT_TITLE
        .captures(html)
        .map(|c| html_text(&c[1]))
        .unwrap_or_default()
}

fn cited_patents(html: &str) -> Vec<String> {
    let Some(start) = find_ci(html, "U.S. Patent Documents") else {
        return Vec::new();
    };
    let section = &html[start..];
    let lower = section.to_ascii_lowercase();
    let end = [
        "foreign patent documents",
        "other references",
        "primary examiner",
        "</table>",
    ]
    .iter()
    .filter_map(|m| lower.find(m))
    .min()
    .unwrap_or(section.len());
    ANCHOR
        .captures_iter(&section[..end])
        .map(|c| html_text(&c[2]).replace(',', ""))
        .filter(|t| PATENT_NO.is_match(t))
        .collect()
}

pub fn parse_grant_page(html: &[u8]) -> Result<PatentRecord> {
    let html = String::from_utf8_lossy(html);
    let patent_id = page_id(&html, false)?;
    let ipc_codes = parse_ipc_field(&html)?;
    let date = parse_date(&html_text(&html));
    if date.is_none() {
        log::warn!("grant {patent_id}: issue date not found");
    }
    Ok(PatentRecord {
        patent_id,
        kind: Kind::Grant,
        date,
        ipc_codes,
        cited_ids: cited_patents(&html),
        title: page_title(&html),
    })
}

pub fn parse_application_page(html: &[u8]) -> Result<PatentRecord> {
    let html = String::from_utf8_lossy(html);
    let patent_id = page_id(&html, true)?;
    let ipc_codes = parse_ipc_field(&html)?;
    let date = field_after_label(&html, &["Filed:"]).and_then(|t| parse_date(&t));
    if date.is_none() {
        log::warn!("application {patent_id}: filing date not found");
    }
    Ok(PatentRecord {
        patent_id,
        kind: Kind::Application,
        date,
        ipc_codes,
        cited_ids: Vec::new(),
        title: page_title(&html),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hitlist {
    pub total_hits: u64,
    pub record_urls: Vec<String>,
    pub next_page_url: Option<String>,
}

fn href_of(attrs: &str) -> Option<String> {
    let c = HREF.captures(attrs)?;
    let raw = c.get(1).or(c.get(2)).or(c.get(3))?.as_str();
    Some(decode_entities(raw))
}

fn query_param<'a>(url: &'a str, key: &str) -> Option<&'a str> {
    let query = url.split_once('?')?.1;
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

pub fn parse_hitlist_page(html: &[u8]) -> Result<Hitlist> {
    let html = String::from_utf8_lossy(html);
    let text = html_text(&html);
    if NO_HITS.is_match(&text) {
        return Ok(Hitlist {
            total_hits: 0,
            record_urls: Vec::new(),
            next_page_url: None,
        });
    }
    let c = HITS.captures(&text).ok_or(Error::ParseFailure { field: "hitcount" })?;
    let total_hits = c
        .get(1)
        .or(c.get(2))
        .and_then(|m| m.as_str().parse().ok())
        .ok_or(Error::ParseFailure { field: "hitcount" })?;
    let mut seen = HashSet::new();
    let mut record_urls = Vec::new();
    let mut next_page_url = None;
    for a in ANCHOR.captures_iter(&html) {
        let Some(href) = href_of(&a[1]) else { continue };
        let inner = &a[2];
        if next_page_url.is_none()
            && (inner.contains("[NEXT_LIST]")
                || html_text(inner).eq_ignore_ascii_case("Next 50")
                || href.contains("NextList"))
        {
            next_page_url = Some(href);
            continue;
        }
        let is_record = query_param(&href, "f") == Some("G")
            && query_param(&href, "r")
                .and_then(|r| r.parse::<u64>().ok())
                .is_some_and(|r| r > 0);
        if is_record && seen.insert(href.clone()) {
            record_urls.push(href);
        }
    }
    Ok(Hitlist {
        total_hits,
        record_urls,
        next_page_url,
    })
}
