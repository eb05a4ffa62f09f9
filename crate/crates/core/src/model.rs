//! Domain types shared across the pipeline and the bundled IPC scheme.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Three,
    Four,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::Three, Level::Four];

    pub fn digits(self) -> u8 {
        match self {
            Level::Three => 3,
            Level::Four => 4,
        }
    }

    pub fn from_digits(d: u8) -> Option<Level> {
        match d {
            3 => Some(Level::Three),
            4 => Some(Level::Four),
            _ => None,
        }
    }

    /// Size of the packed key space at this level.
    pub fn key_space(self) -> usize {
        match self {
            Level::Three => 800,
            Level::Four => 800 * 26,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.digits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IpcCode {
    pub section: char,
    pub class2: u8,
    pub subclass: Option<char>,
    pub full_symbol: String,
}

impl IpcCode {
    pub fn level3(&self) -> String {
        format!("{}{:02}", self.section, self.class2)
    }

    pub fn level4(&self) -> Option<String> {
        self.subclass
            .map(|s| format!("{}{:02}{}", self.section, self.class2, s))
    }

    pub fn project(&self, level: Level) -> Option<String> {
        match level {
            Level::Three => Some(self.level3()),
            Level::Four => self.level4(),
        }
    }

    /// Dense integer key of the projection; `None` when the code has no subclass at level 4.
    pub fn key(&self, level: Level) -> Option<u32> {
        let k3 = (self.section as u32 - 'A' as u32) * 100 + self.class2 as u32;
        match level {
            Level::Three => Some(k3),
            Level::Four => self.subclass.map(|s| k3 * 26 + (s as u32 - 'A' as u32)),
        }
    }
}

impl fmt::Display for IpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.full_symbol)
    }
}

/// Inverse of [`IpcCode::key`].
pub fn symbol_of_key(level: Level, key: u32) -> String {
    let (k3, sub) = match level {
        Level::Three => (key, None),
        Level::Four => (key / 26, Some((b'A' + (key % 26) as u8) as char)),
    };
    let section = (b'A' + (k3 / 100) as u8) as char;
    let mut s = format!("{}{:02}", section, k3 % 100);
    if let Some(c) = sub {
        s.push(c);
    }
    s
}

/// Parse an IPC symbol such as `A01B`, `h04l 12/58` or `C07`.
///
/// Group and subgroup digits after the subclass letter are accepted and dropped.
pub fn parse_ipc(symbol: &str) -> Result<IpcCode> {
    let trimmed = symbol.trim();
    let bad = || Error::MalformedIpc(symbol.to_string());
    let mut chars = trimmed.chars();
    let section = chars.next().ok_or_else(bad)?.to_ascii_uppercase();
    if !('A'..='H').contains(&section) {
        return Err(bad());
    }
    let d1 = chars.next().and_then(|c| c.to_digit(10)).ok_or_else(bad)?;
    let d2 = chars.next().and_then(|c| c.to_digit(10)).ok_or_else(bad)?;
    let rest = chars.as_str();
    let mut rest_chars = rest.chars();
    let subclass = match rest_chars.next() {
        None => None,
        Some(c) if c.is_ascii_alphabetic() => {
            let tail = rest_chars.as_str();
            match tail.chars().next() {
                None => {}
                Some(t) if t.is_whitespace() || t.is_ascii_digit() => {}
                Some(_) => return Err(bad()),
            }
            Some(c.to_ascii_uppercase())
        }
        Some(_) => return Err(bad()),
    };
    Ok(IpcCode {
        section,
        class2: (d1 * 10 + d2) as u8,
        subclass,
        full_symbol: trimmed.to_string(),
    })
}

const PLACEHOLDER_MARK: &str = "subject matter not otherwise provided for";

/// Registry of valid 3- and 4-digit symbols with their headings.
#[derive(Debug, Clone)]
pub struct IpcScheme {
    pub valid3: BTreeSet<String>,
    pub valid4: BTreeSet<String>,
    pub placeholders: BTreeSet<String>,
    headings: BTreeMap<String, String>,
    admissible3: Vec<bool>,
    admissible4: Vec<bool>,
}

static REFERENCE: OnceLock<IpcScheme> = OnceLock::new();

impl IpcScheme {
    pub const REFERENCE_CLASSES: usize = 129;
    pub const REFERENCE_SUBCLASSES: usize = 637;

    /// The bundled IPC 2012 scheme. Panics if the shipped file is inconsistent.
    pub fn reference() -> &'static IpcScheme {
        REFERENCE.get_or_init(|| {
            let s = IpcScheme::from_tsv(include_str!("../data/ipc2012.tsv"))
                .expect("bundled IPC scheme parses");
            assert_eq!(s.valid3.len(), Self::REFERENCE_CLASSES, "3-digit class count");
            assert_eq!(s.valid4.len(), Self::REFERENCE_SUBCLASSES, "4-digit subclass count");
            s
        })
    }

    /// Parse `symbol<TAB>heading` rows. Lines starting with `#` and blank lines are ignored.
    pub fn from_tsv(text: &str) -> Result<IpcScheme> {
        let mut valid3 = BTreeSet::new();
        let mut valid4 = BTreeSet::new();
        let mut placeholders = BTreeSet::new();
        let mut headings = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (sym, heading) = line.split_once('\t').ok_or_else(|| Error::Syntax {
                line: i + 1,
                reason: "expected symbol<TAB>heading".into(),
            })?;
            let code = parse_ipc(sym)?;
            let canonical = match sym.len() {
                3 if code.subclass.is_none() => code.level3(),
                4 if code.subclass.is_some() => code.level4().unwrap(),
                _ => {
                    return Err(Error::Syntax {
                        line: i + 1,
                        reason: format!("{sym} is not a 3- or 4-digit symbol"),
                    })
                }
            };
            if heading.to_lowercase().contains(PLACEHOLDER_MARK) {
                placeholders.insert(canonical.clone());
            }
            if canonical.len() == 3 {
                valid3.insert(canonical.clone());
            } else {
                valid4.insert(canonical.clone());
            }
            headings.insert(canonical, heading.trim().to_string());
        }
        if let Some(orphan) = valid4.iter().find(|s| !valid3.contains(&s[..3])) {
            return Err(Error::Config(format!("subclass {orphan} has no parent class")));
        }
        let mut admissible3 = vec![false; Level::Three.key_space()];
        let mut admissible4 = vec![false; Level::Four.key_space()];
        for (set, table, level) in [
            (&valid3, &mut admissible3, Level::Three),
            (&valid4, &mut admissible4, Level::Four),
        ] {
            for s in set.iter().filter(|s| !placeholders.contains(*s)) {
                let k = parse_ipc(s).unwrap().key(level).unwrap();
                table[k as usize] = true;
            }
        }
        Ok(IpcScheme {
            valid3,
            valid4,
            placeholders,
            headings,
            admissible3,
            admissible4,
        })
    }

    pub fn heading(&self, symbol: &str) -> Option<&str> {
        self.headings.get(symbol).map(String::as_str)
    }

    /// Valid at `level` and not a placeholder, by packed key.
    pub fn admits_key(&self, level: Level, key: u32) -> bool {
        let table = match level {
            Level::Three => &self.admissible3,
            Level::Four => &self.admissible4,
        };
        table.get(key as usize).copied().unwrap_or(false)
    }

    pub fn admits(&self, symbol: &str, level: Level) -> bool {
        match parse_ipc(symbol) {
            Ok(c) if c.project(level).as_deref() == Some(symbol) => validate(&c, self, level),
            _ => false,
        }
    }

    /// Admissible symbols at a level, sorted.
    pub fn admissible(&self, level: Level) -> Vec<String> {
        let set = match level {
            Level::Three => &self.valid3,
            Level::Four => &self.valid4,
        };
        set.iter()
            .filter(|s| !self.placeholders.contains(*s))
            .cloned()
            .collect()
    }
}

/// True iff the projection at `level` is in the scheme and is not a placeholder class.
pub fn validate(code: &IpcCode, scheme: &IpcScheme, level: Level) -> bool {
    code.key(level).is_some_and(|k| scheme.admits_key(level, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Grant,
    Application,
}

impl Kind {
    pub fn tag(self) -> char {
        match self {
            Kind::Grant => 'G',
            Kind::Application => 'A',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentRecord {
    pub patent_id: String,
    pub kind: Kind,
    /// Issue date for grants, filing date for applications; `None` when unknown.
    pub date: Option<NaiveDate>,
    /// Document order; the first entry is the primary class.
    pub ipc_codes: Vec<IpcCode>,
    pub cited_ids: Vec<String>,
    pub title: String,
}

impl PatentRecord {
    pub fn primary(&self) -> Option<&IpcCode> {
        self.ipc_codes.first()
    }

    pub fn year(&self) -> Option<i32> {
        self.date.map(|d| d.year())
    }
}

/// Sparse citing x cited counts over the classes of one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCitationMatrix {
    pub level: Level,
    pub classes: Vec<String>,
    pub counts: BTreeMap<(usize, usize), u64>,
    pub total_citations: u64,
}

impl ClassCitationMatrix {
    /// Build from symbol triples; classes are the sorted union of all symbols seen.
    pub fn from_triples<I, S>(level: Level, triples: I) -> ClassCitationMatrix
    where
        I: IntoIterator<Item = (S, S, u64)>,
        S: Into<String>,
    {
        let raw: Vec<(String, String, u64)> = triples
            .into_iter()
            .filter(|t| t.2 > 0)
            .map(|(a, b, n)| (a.into(), b.into(), n))
            .collect();
        let classes: Vec<String> = raw
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut counts = BTreeMap::new();
        for (a, b, n) in &raw {
            *counts.entry((index[a.as_str()], index[b.as_str()])).or_insert(0) += n;
        }
        let total_citations = counts.values().sum();
        ClassCitationMatrix {
            level,
            classes,
            counts,
            total_citations,
        }
    }

    /// Number of distinct nonzero cells.
    pub fn links(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, citing: &str, cited: &str) -> u64 {
        let i = self.classes.binary_search_by(|c| c.as_str().cmp(citing));
        let j = self.classes.binary_search_by(|c| c.as_str().cmp(cited));
        match (i, j) {
            (Ok(i), Ok(j)) => self.counts.get(&(i, j)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.classes.len()];
        for (&(i, _), &n) in &self.counts {
            sums[i] += n;
        }
        sums
    }

    /// Dense row-major copy.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.classes.len();
        let mut m = vec![vec![0.0; n]; n];
        for (&(i, j), &c) in &self.counts {
            m[i][j] = c as f64;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseEntry {
    pub symbol: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub cluster: u32,
    /// Citing row sum in the basemap matrix.
    pub citations: u64,
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseMap {
    pub level: Level,
    pub entries: Vec<BaseEntry>,
    pub stress: f64,
}

impl BaseMap {
    pub fn symbols(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.symbol.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub level: Level,
    /// Fractional count per class.
    pub weights: BTreeMap<String, f64>,
    /// Number of distinct patents attributed to each class.
    pub patents: BTreeMap<String, u64>,
    pub patent_count: u64,
    pub class_attribution_count: u64,
    /// Records with no valid class at this level.
    pub skipped: u64,
    pub diversity: Option<f64>,
}
