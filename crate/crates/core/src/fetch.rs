//! Paginated client for full-text search endpoints, with disk caching and
//! offline fixture transports.

pub mod fixture;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use crate::error::{Error, Result};
use crate::ingest::{parse_application_page, parse_grant_page, parse_hitlist_page};
use crate::model::PatentRecord;

pub const PAGE_SIZE: u64 = 50;
pub const SESSION_CAP: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Database {
    Grant,
    Application,
}

impl Database {
    pub fn code(self) -> &'static str {
        match self {
            Database::Grant => "PTXT",
            Database::Application => "PG01",
        }
    }
}

impl std::str::FromStr for Database {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grant" | "grants" | "patft" => Ok(Database::Grant),
            "application" | "applications" | "appft" => Ok(Database::Application),
            _ => Err(Error::Config(format!("unknown database {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub database: Database,
    pub query: String,
    /// 1-based sequence number of the first hit wanted.
    pub start: u64,
}

fn param(url: &Url, key: &str) -> Option<String> {
    url.query_pairs()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v.into_owned())
}

/// Recover query, database and start position from a hit-list or record url.
pub fn harvest_query(url: &str) -> Result<SearchSpec> {
    let bad = || Error::UnrecognizedUrl(url.to_string());
    let u = Url::parse(url).map_err(|_| bad())?;
    let host = u.host_str().unwrap_or("").to_ascii_lowercase();
    let d = param(&u, "d").map(|d| d.to_ascii_uppercase());
    let database = match (d.as_deref(), host.as_str()) {
        (Some("PG01"), _) => Database::Application,
        (Some("PTXT") | Some("PALL"), _) => Database::Grant,
        (_, h) if h.starts_with("appft") => Database::Application,
        (_, h) if h.starts_with("patft") => Database::Grant,
        _ => return Err(bad()),
    };
    let query = ["OS", "Query", "s1"]
        .iter()
        .find_map(|k| param(&u, k))
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty())
        .ok_or_else(bad)?;
    let num = |k: &str| param(&u, k).and_then(|v| v.parse::<u64>().ok());
    let start = match num("r") {
        Some(r) if r > 0 => r,
        _ => num("start").unwrap_or(1).max(1) + (num("p").unwrap_or(1).max(1) - 1) * PAGE_SIZE,
    };
    Ok(SearchSpec {
        database,
        query,
        start,
    })
}

/// Url layout of the search service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointProfile {
    pub grant_base: String,
    pub application_base: String,
}

impl Default for EndpointProfile {
    fn default() -> Self {
        EndpointProfile {
            grant_base: "http://patft.uspto.gov".into(),
            application_base: "http://appft.uspto.gov".into(),
        }
    }
}

fn enc(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

impl EndpointProfile {
    pub fn base(&self, db: Database) -> &str {
        match db {
            Database::Grant => &self.grant_base,
            Database::Application => &self.application_base,
        }
    }

    fn form(db: Database) -> &'static str {
        match db {
            Database::Grant => "%2Fnetahtml%2FPTO%2Fsearch-adv.htm",
            Database::Application => "%2Fnetahtml%2FPTO%2Fsearch-adv.html",
        }
    }

    /// Hit list for a session that begins at `start`, page `page` within it.
    pub fn list_url(&self, db: Database, query: &str, start: u64, page: u64) -> String {
        format!(
            "{}/netacgi/nph-Parser?Sect1=PTO2&Sect2=HITOFF&u={}&r=0&f=S&l=50&d={}&OS={}&start={}&p={}",
            self.base(db),
            Self::form(db),
            db.code(),
            enc(query),
            start,
            page
        )
    }

    pub fn record_url(&self, db: Database, query: &str, seq: u64, page: u64) -> String {
        format!(
            "{}/netacgi/nph-Parser?Sect1=PTO2&Sect2=HITOFF&u={}&r={}&f=G&l=50&d={}&p={}&OS={}",
            self.base(db),
            Self::form(db),
            seq,
            db.code(),
            page,
            enc(query)
        )
    }
}

pub trait Transport {
    fn get(&mut self, url: &str) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        (**self).get(url)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        (**self).get(url)
    }
}

pub fn url_key(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn page_path(dir: &Path, url: &str) -> PathBuf {
    dir.join(format!("{}.html", url_key(url)))
}

/// Pages stored as `<sha256(url)>.html`.
pub struct FixtureDir {
    pub dir: PathBuf,
}

impl Transport for FixtureDir {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        std::fs::read(page_path(&self.dir, url)).map_err(|e| Error::Transport {
            url: url.to_string(),
            reason: format!("no fixture page: {e}"),
        })
    }
}

/// Read-through cache in front of another transport.
pub struct CachingTransport<T> {
    pub inner: T,
    pub dir: PathBuf,
    pub hits: usize,
}

impl<T: Transport> CachingTransport<T> {
    /// With `overwrite`, previously cached pages are discarded first.
    pub fn new(inner: T, dir: impl Into<PathBuf>, overwrite: bool) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        if overwrite {
            let mut removed = 0;
            for entry in std::fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "html") {
                    std::fs::remove_file(p)?;
                    removed += 1;
                }
            }
            if removed > 0 {
                log::warn!("overwrite: discarded {removed} cached pages in {}", dir.display());
            }
        }
        Ok(CachingTransport { inner, dir, hits: 0 })
    }
}

impl<T: Transport> Transport for CachingTransport<T> {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        let path = page_path(&self.dir, url);
        if let Ok(bytes) = std::fs::read(&path) {
            self.hits += 1;
            return Ok(bytes);
        }
        let bytes = self.inner.get(url)?;
        crate::formats::write_atomic(&path, &bytes)?;
        Ok(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            backoff: Duration::from_millis(500),
            factor: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumeToken {
    pub database: Database,
    pub query: String,
    /// Sequence number of the next record to download.
    pub next: u64,
}

impl ResumeToken {
    pub fn spec(&self) -> SearchSpec {
        SearchSpec {
            database: self.database,
            query: self.query.clone(),
            start: self.next,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchLimits {
    /// Stop after this many record pages.
    pub max: Option<u64>,
    /// Pause between consecutive requests.
    pub delay: Duration,
    pub retry: RetryPolicy,
    pub profile: EndpointProfile,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits {
            max: None,
            delay: Duration::from_secs(1),
            retry: RetryPolicy::default(),
            profile: EndpointProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchReport {
    pub database: Database,
    pub query: String,
    pub total_hits: u64,
    pub list_pages: u64,
    pub fetched: u64,
    pub parsed: u64,
    pub failed: u64,
    /// Start offset of each search session issued.
    pub batch_offsets: Vec<u64>,
    pub complete: bool,
    pub error: Option<String>,
    pub resume: ResumeToken,
}

struct Client<'a, T: Transport> {
    transport: T,
    limits: &'a FetchLimits,
    requests: u64,
}

impl<T: Transport> Client<'_, T> {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        let mut wait = self.limits.retry.backoff;
        let attempts = self.limits.retry.attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            if self.requests > 0 && !self.limits.delay.is_zero() {
                std::thread::sleep(self.limits.delay);
            }
            self.requests += 1;
            match self.transport.get(url) {
                Ok(b) => return Ok(b),
                Err(e) => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(wait);
                        wait *= self.limits.retry.factor;
                    }
                }
            }
        }
        Err(last.unwrap())
    }
}

fn resolve(base: &str, href: &str) -> String {
    Url::parse(base)
        .and_then(|b| b.join(href))
        .map(String::from)
        .unwrap_or_else(|_| href.to_string())
}

fn record_seq(url: &str) -> Option<u64> {
    let u = Url::parse(url).ok()?;
    param(&u, "r")?.parse().ok()
}

/// Walk every hit of `spec`, fifty per list page, reissuing the search every
/// thousand hits. Each parsed record goes to `sink`.
pub fn fetch_all<T, F>(spec: &SearchSpec, transport: T, mut sink: F, limits: &FetchLimits) -> FetchReport
where
    T: Transport,
    F: FnMut(PatentRecord) -> Result<()>,
{
    let mut client = Client {
        transport,
        limits,
        requests: 0,
    };
    let mut report = FetchReport {
        database: spec.database,
        query: spec.query.clone(),
        total_hits: 0,
        list_pages: 0,
        fetched: 0,
        parsed: 0,
        failed: 0,
        batch_offsets: Vec::new(),
        complete: false,
        error: None,
        resume: ResumeToken {
            database: spec.database,
            query: spec.query.clone(),
            next: spec.start.max(1),
        },
    };
    let parse = match spec.database {
        Database::Grant => parse_grant_page,
        Database::Application => parse_application_page,
    };
    let mut next = spec.start.max(1);
    'sessions: loop {
        let session = next;
        report.batch_offsets.push(session);
        let mut url = limits.profile.list_url(spec.database, &spec.query, session, 1);
        loop {
            let page = match client.get(&url).and_then(|b| parse_hitlist_page(&b)) {
                Ok(p) => p,
                Err(e) => {
                    report.error = Some(e.to_string());
                    break 'sessions;
                }
            };
            report.list_pages += 1;
            report.total_hits = page.total_hits;
            for rec_url in &page.record_urls {
                let rec_url = resolve(&url, rec_url);
                let seq = record_seq(&rec_url).unwrap_or(next);
                if seq < next {
                    continue;
                }
                if limits.max.is_some_and(|m| report.fetched >= m) {
                    break 'sessions;
                }
                let bytes = match client.get(&rec_url) {
                    Ok(b) => b,
                    Err(e) => {
                        report.error = Some(e.to_string());
                        break 'sessions;
                    }
                };
                report.fetched += 1;
                match parse(&bytes) {
                    Ok(rec) => {
                        report.parsed += 1;
                        if let Err(e) = sink(rec) {
                            report.error = Some(e.to_string());
                            next = seq + 1;
                            break 'sessions;
                        }
                    }
                    Err(e) => {
                        report.failed += 1;
                        log::warn!("record {seq}: {e}");
                    }
                }
                next = seq + 1;
            }
            if next > page.total_hits {
                report.complete = true;
                break 'sessions;
            }
            if limits.max.is_some_and(|m| report.fetched >= m) {
                break 'sessions;
            }
            match page.next_page_url {
                Some(n) => url = resolve(&url, &n),
                None => break,
            }
        }
        if next == session {
            report.error = Some(format!("no progress in session starting at {session}"));
            break;
        }
    }
    report.resume.next = next;
    report
}
