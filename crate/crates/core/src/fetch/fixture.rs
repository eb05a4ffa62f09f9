//! In-process stand-in for the search service: renders hit lists and record
//! pages from a record set and logs every request.

use std::collections::HashMap;

use chrono::NaiveDate;
use url::Url;

use super::{param, Database, EndpointProfile, Transport, PAGE_SIZE, SESSION_CAP};
use crate::error::{Error, Result};
use crate::model::PatentRecord;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn long_date(d: NaiveDate) -> String {
    d.format("%B %-d, %Y").to_string()
}

pub fn render_grant_page(rec: &PatentRecord) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<HTML>\n<HEAD>\n<TITLE>United States Patent: {}</TITLE></HEAD>\n<BODY bgcolor=\"#FFFFFF\">\n",
        esc(&rec.patent_id)
    ));
    s.push_str("<TABLE WIDTH=\"100%\">\n<TR><TD ALIGN=\"LEFT\" WIDTH=\"50%\"><B>United States Patent </B></TD>\n");
    s.push_str(&format!(
        "<TD ALIGN=\"RIGHT\" WIDTH=\"50%\"><B><A NAME=\"h1\"></A>{}</B></TD></TR>\n",
        esc(&rec.patent_id)
    ));
    s.push_str("<TR><TD ALIGN=\"LEFT\" WIDTH=\"50%\"><b>Inventor,&nbsp;et al.</B></TD>\n");
    let date = rec.date.map(long_date).unwrap_or_default();
    s.push_str(&format!("<TD ALIGN=\"RIGHT\" WIDTH=\"50%\"> <B>{date}</B></TD></TR>\n</TABLE>\n<HR>\n"));
    s.push_str(&format!("<font size=\"+1\">{}\n</font><BR>\n", esc(&rec.title)));
    s.push_str("<TABLE WIDTH=\"100%\">\n");
    let ipc: Vec<String> = rec
        .ipc_codes
        .iter()
        .map(|c| format!("{}&nbsp(20060101)", esc(&c.full_symbol)))
        .collect();
    s.push_str(&format!(
        "<TR><TD VALIGN=\"TOP\" ALIGN=\"LEFT\" WIDTH=\"40%\"><B>Current International Class: </B></TD>\n<TD VALIGN=\"TOP\" ALIGN=\"RIGHT\" WIDTH=\"60%\">{}</TD></TR>\n</TABLE>\n",
        ipc.join("; ")
    ));
    if !rec.cited_ids.is_empty() {
        s.push_str("<CENTER><B>References Cited</B></CENTER>\n<TABLE WIDTH=\"100%\">\n");
        s.push_str("<TR><TD COLSPAN=3><CENTER><B>U.S. Patent Documents</B></CENTER></TD></TR>\n");
        for c in &rec.cited_ids {
            s.push_str(&format!(
                "<TR><TD align=left><a href=\"/netacgi/nph-Parser?Sect2=PTO1&amp;Sect2=HITOFF&amp;p=1&amp;r=1&amp;f=G&amp;l=50&amp;d=PALL&amp;RefSrch=yes&amp;Query=PN%2F{c}\">{c}</a></TD><TD align=left>January 2000</TD><TD align=left>Someone</TD></TR>\n",
                c = esc(c)
            ));
        }
        s.push_str("</TABLE>\n");
    }
    s.push_str("<I>Primary Examiner:</I> Examiner\n</BODY>\n</HTML>\n");
    s
}

pub fn render_application_page(rec: &PatentRecord) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<HTML>\n<HEAD>\n<TITLE>United States Patent Application: {}</TITLE></HEAD>\n<BODY bgcolor=\"#FFFFFF\">\n",
        esc(&rec.patent_id)
    ));
    s.push_str(&format!(
        "<TABLE WIDTH=\"100%\">\n<TR><TD ALIGN=\"LEFT\" WIDTH=\"50%\"><B>United States Patent Application</B></TD>\n<TD ALIGN=\"RIGHT\" WIDTH=\"50%\"><B>{}</B></TD></TR>\n",
        esc(&rec.patent_id)
    ));
    s.push_str("<TR><TD ALIGN=\"LEFT\" WIDTH=\"50%\"><B>Kind Code</B></TD><TD ALIGN=\"RIGHT\" WIDTH=\"50%\"><B>A1</B></TD></TR>\n</TABLE>\n<HR>\n");
    s.push_str(&format!("<font size=\"+1\">{}\n</font><BR>\n", esc(&rec.title)));
    let date = rec.date.map(long_date).unwrap_or_default();
    s.push_str(&format!(
        "<TABLE WIDTH=\"100%\">\n<TR><TH scope=\"row\" VALIGN=\"TOP\" ALIGN=\"LEFT\" WIDTH=\"10%\">Filed:</TH>\n<TD ALIGN=\"LEFT\" WIDTH=\"90%\">\n<B>{date}</B></TD></TR>\n</TABLE>\n"
    ));
    let ipc: Vec<String> = rec
        .ipc_codes
        .iter()
        .map(|c| format!("{} 20060101", esc(&c.full_symbol)))
        .collect();
    s.push_str(&format!(
        "<TABLE WIDTH=\"100%\">\n<TR><TD VALIGN=\"TOP\" ALIGN=\"LEFT\" WIDTH=\"30%\"><B>Current International Class: </B></TD>\n<TD VALIGN=\"TOP\" ALIGN=\"RIGHT\" WIDTH=\"70%\">{}</TD></TR>\n</TABLE>\n</BODY>\n</HTML>\n",
        ipc.join("; ")
    ));
    s
}

pub fn render_hitlist(
    profile: &EndpointProfile,
    db: Database,
    query: &str,
    total: u64,
    session: u64,
    page: u64,
    titles: &[(u64, String, String)],
) -> String {
    let noun = match db {
        Database::Grant => "patents",
        Database::Application => "applications",
    };
    let mut s = String::from("<HTML><HEAD><TITLE>Search Results</TITLE></HEAD>\n<BODY BGCOLOR=\"#FFFFFF\">\n");
    if total == 0 || titles.is_empty() {
        s.push_str(&format!(
            "<I>Results of Search in {} db for:</I><BR>\n<B>{}</B>: 0 {noun}.<BR>\nNo {noun} have matched your query<BR>\n</BODY></HTML>\n",
            db.code(),
            esc(query)
        ));
        return s;
    }
    let (first, last) = (titles[0].0, titles[titles.len() - 1].0);
    s.push_str(&format!(
        "<I>Results of Search in {} db for:</I><BR>\n<B>{}</B>: {total} {noun}.<BR>\n<I>Hits {first} through {last} out of {total}</I><BR><BR>\n",
        db.code(),
        esc(query)
    ));
    let cap_end = (session + SESSION_CAP - 1).min(total);
    if last < cap_end {
        let next = profile.list_url(db, query, session, page + 1);
        s.push_str(&format!(
            "<A HREF=\"{}&amp;NextList{}=Next+50+Hits\"><IMG src=\"/netaicon/PTO/nextlist.gif\" border=\"0\" ALIGN=\"MIDDLE\" ALT=\"[NEXT_LIST]\"></A>\n",
            esc(&next),
            page + 1
        ));
    }
    s.push_str("<TABLE>\n<TR><TD></TD><TH>PAT. NO.</TH><TH>Title</TH></TR>\n");
    for (seq, id, title) in titles {
        let u = esc(&profile.record_url(db, query, *seq, page));
        s.push_str(&format!(
            "<TR><TD valign=top>{seq}</TD>\n<TD valign=top><A HREF={u}>{}</A></TD>\n<TD valign=top><A HREF={u}>{}</A></TD>\n</TR>\n",
            esc(id),
            esc(title)
        ));
    }
    s.push_str("</TABLE>\n</BODY></HTML>\n");
    s
}

/// Serves one result set per (database, query) and records each request url.
#[derive(Default)]
pub struct FixtureServer {
    pub profile: EndpointProfile,
    results: HashMap<(Database, String), Vec<PatentRecord>>,
    pub log: Vec<String>,
    /// Requests whose url contains the key fail this many more times.
    faults: Vec<(String, usize)>,
    /// Every request fails once this many have been served.
    pub fail_after: Option<usize>,
    served: usize,
}

impl FixtureServer {
    pub fn new(profile: EndpointProfile) -> Self {
        FixtureServer {
            profile,
            ..Default::default()
        }
    }

    pub fn add_results(&mut self, db: Database, query: &str, records: Vec<PatentRecord>) {
        self.results.insert((db, query.to_string()), records);
    }

    pub fn fail(&mut self, url_part: &str, times: usize) {
        self.faults.push((url_part.to_string(), times));
    }

    /// Logged hit-list requests as (session start, page).
    pub fn list_requests(&self) -> Vec<(u64, u64)> {
        self.log
            .iter()
            .filter_map(|u| {
                let u = Url::parse(u).ok()?;
                if param(&u, "f").as_deref() != Some("S") {
                    return None;
                }
                Some((param(&u, "start")?.parse().ok()?, param(&u, "p")?.parse().ok()?))
            })
            .collect()
    }

    /// Logged record requests by sequence number.
    pub fn record_requests(&self) -> Vec<u64> {
        self.log
            .iter()
            .filter_map(|u| {
                let u = Url::parse(u).ok()?;
                if param(&u, "f").as_deref() != Some("G") {
                    return None;
                }
                param(&u, "r")?.parse().ok()
            })
            .collect()
    }

    fn serve(&self, url: &str) -> Result<String> {
        let fail = |reason: &str| Error::Transport {
            url: url.to_string(),
            reason: reason.to_string(),
        };
        let u = Url::parse(url).map_err(|_| fail("bad url"))?;
        let db = match param(&u, "d").as_deref() {
            Some("PTXT") => Database::Grant,
            Some("PG01") => Database::Application,
            _ => return Err(fail("404")),
        };
        let query = param(&u, "OS").ok_or_else(|| fail("404"))?;
        let empty = Vec::new();
        let records = self.results.get(&(db, query.clone())).unwrap_or(&empty);
        let total = records.len() as u64;
        let num = |k: &str| param(&u, k).and_then(|v| v.parse::<u64>().ok());
        match param(&u, "f").as_deref() {
            Some("S") => {
                let session = num("start").unwrap_or(1).max(1);
                let page = num("p").unwrap_or(1).max(1);
                let first = session + (page - 1) * PAGE_SIZE;
                let last = (first + PAGE_SIZE - 1)
                    .min(total)
                    .min(session + SESSION_CAP - 1);
                let titles: Vec<(u64, String, String)> = (first..=last)
                    .map(|seq| {
                        let r = &records[seq as usize - 1];
                        (seq, r.patent_id.clone(), r.title.clone())
                    })
                    .collect();
                Ok(render_hitlist(&self.profile, db, &query, total, session, page, &titles))
            }
            Some("G") => {
                let seq = num("r").filter(|&r| r >= 1 && r <= total).ok_or_else(|| fail("404"))?;
                let rec = &records[seq as usize - 1];
                Ok(match db {
                    Database::Grant => render_grant_page(rec),
                    Database::Application => render_application_page(rec),
                })
            }
            _ => Err(fail("404")),
        }
    }
}

impl Transport for FixtureServer {
    fn get(&mut self, url: &str) -> Result<Vec<u8>> {
        self.log.push(url.to_string());
        if self.fail_after.is_some_and(|n| self.served >= n) {
            return Err(Error::Transport {
                url: url.to_string(),
                reason: "connection refused".into(),
            });
        }
        if let Some(f) = self.faults.iter_mut().find(|(k, n)| *n > 0 && url.contains(k.as_str())) {
            f.1 -= 1;
            return Err(Error::Transport {
                url: url.to_string(),
                reason: "injected fault".into(),
            });
        }
        self.served += 1;
        self.serve(url).map(String::into_bytes)
    }
}
