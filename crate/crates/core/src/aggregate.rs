//! Primary-class citation matrices with the invalid-class correction step.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{symbol_of_key, ClassCitationMatrix, IpcCode, IpcScheme, Level, PatentRecord};

/// Primary code packed as `class3_key * 27 + subclass` (0 = no subclass).
pub type Packed = u32;

pub fn pack(code: &IpcCode) -> Packed {
    let k3 = code.key(Level::Three).unwrap();
    k3 * 27 + code.subclass.map(|s| s as u32 - 'A' as u32 + 1).unwrap_or(0)
}

pub fn packed_key(p: Packed, level: Level) -> Option<u32> {
    match level {
        Level::Three => Some(p / 27),
        Level::Four => (!p.is_multiple_of(27)).then(|| (p / 27) * 26 + p % 27 - 1),
    }
}

fn unpack(p: Packed) -> IpcCode {
    let sym = match packed_key(p, Level::Four) {
        Some(k) => symbol_of_key(Level::Four, k),
        None => symbol_of_key(Level::Three, p / 27),
    };
    crate::model::parse_ipc(&sym).unwrap()
}

const BUCKETS: usize = 64;
const CHUNK: usize = 16_384;

fn bucket_of(id: &str) -> usize {
    let mut h = DefaultHasher::new();
    id.hash(&mut h);
    (h.finish() % BUCKETS as u64) as usize
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    /// Entries held in memory before spilling to the on-disk store.
    pub memory_cap: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            memory_cap: 20_000_000,
        }
    }
}

/// Hash-partitioned id -> primary store in a temporary directory.
#[derive(Debug)]
pub struct DiskIndex {
    dir: tempfile::TempDir,
    len: usize,
}

impl DiskIndex {
    fn bucket_path(&self, b: usize) -> std::path::PathBuf {
        self.dir.path().join(format!("index{b:02}.tsv"))
    }

    fn load_bucket(&self, b: usize) -> Result<HashMap<String, Packed>> {
        let mut map = HashMap::new();
        let f = BufReader::new(File::open(self.bucket_path(b))?);
        for line in f.lines() {
            let line = line?;
            if let Some((id, p)) = line.split_once('\t') {
                map.insert(id.to_string(), p.parse().map_err(|_| corrupt())?);
            }
        }
        Ok(map)
    }
}

fn corrupt() -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        "corrupt spill file",
    ))
}

#[derive(Debug)]
pub enum PrimaryIndex {
    Memory(HashMap<String, Packed>),
    Disk(DiskIndex),
}

impl PrimaryIndex {
    pub fn len(&self) -> usize {
        match self {
            PrimaryIndex::Memory(m) => m.len(),
            PrimaryIndex::Disk(d) => d.len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_on_disk(&self) -> bool {
        matches!(self, PrimaryIndex::Disk(_))
    }

    pub fn get_packed(&self, id: &str) -> Result<Option<Packed>> {
        match self {
            PrimaryIndex::Memory(m) => Ok(m.get(id).copied()),
            PrimaryIndex::Disk(d) => Ok(d.load_bucket(bucket_of(id))?.get(id).copied()),
        }
    }

    /// Primary code of a patent, reduced to its subclass.
    pub fn get(&self, id: &str) -> Result<Option<IpcCode>> {
        Ok(self.get_packed(id)?.map(unpack))
    }

    pub fn to_map(&self) -> Result<HashMap<String, Packed>> {
        match self {
            PrimaryIndex::Memory(m) => Ok(m.clone()),
            PrimaryIndex::Disk(d) => {
                let mut all = HashMap::with_capacity(d.len);
                for b in 0..BUCKETS {
                    all.extend(d.load_bucket(b)?);
                }
                Ok(all)
            }
        }
    }
}

fn open_buckets(dir: &Path, prefix: &str) -> Result<Vec<BufWriter<File>>> {
    (0..BUCKETS)
        .map(|b| Ok(BufWriter::new(File::create(dir.join(format!("{prefix}{b:02}.tsv")))?)))
        .collect()
}

fn note_conflict(id: &str, first: Packed, other: Packed, conflicts: &mut u64) {
    if first != other {
        *conflicts += 1;
        log::warn!(
            "{}; keeping {} over {}",
            Error::DuplicateId(id.to_string()),
            unpack(first).level4().unwrap_or_else(|| unpack(first).level3()),
            unpack(other).level4().unwrap_or_else(|| unpack(other).level3())
        );
    }
}

/// First pass: patent id -> primary class. Duplicate ids keep the first record.
pub fn two_pass_index<I>(records: I, opts: &IndexOptions) -> Result<PrimaryIndex>
where
    I: IntoIterator<Item = PatentRecord>,
{
    let mut mem: HashMap<String, Packed> = HashMap::new();
    let mut spill: Option<(tempfile::TempDir, Vec<BufWriter<File>>)> = None;
    let mut conflicts = 0u64;
    for rec in records {
        let Some(primary) = rec.primary() else { continue };
        let p = pack(primary);
        if let Some((_, writers)) = spill.as_mut() {
            writeln!(writers[bucket_of(&rec.patent_id)], "{}\t{}", rec.patent_id, p)?;
            continue;
        }
        match mem.get(&rec.patent_id) {
            Some(&first) => note_conflict(&rec.patent_id, first, p, &mut conflicts),
            None => {
                mem.insert(rec.patent_id, p);
            }
        }
        if mem.len() > opts.memory_cap {
            log::info!("primary index exceeds {} entries, spilling to disk", opts.memory_cap);
            let dir = tempfile::tempdir()?;
            let mut writers = open_buckets(dir.path(), "raw")?;
            for (id, p) in mem.drain() {
                writeln!(writers[bucket_of(&id)], "{id}\t{p}")?;
            }
            spill = Some((dir, writers));
        }
    }
    let Some((dir, writers)) = spill else {
        return Ok(PrimaryIndex::Memory(mem));
    };
    for w in writers {
        w.into_inner().map_err(|e| e.into_error())?;
    }
    let mut len = 0;
    for b in 0..BUCKETS {
        let raw = dir.path().join(format!("raw{b:02}.tsv"));
        let mut seen: HashMap<String, Packed> = HashMap::new();
        let mut order = Vec::new();
        for line in BufReader::new(File::open(&raw)?).lines() {
            let line = line?;
            let (id, p) = line.split_once('\t').ok_or_else(corrupt)?;
            let p: Packed = p.parse().map_err(|_| corrupt())?;
            match seen.get(id) {
                Some(&first) => note_conflict(id, first, p, &mut conflicts),
                None => {
                    seen.insert(id.to_string(), p);
                    order.push(id.to_string());
                }
            }
        }
        let mut out = BufWriter::new(File::create(dir.path().join(format!("index{b:02}.tsv")))?);
        for id in &order {
            writeln!(out, "{}\t{}", id, seen[id])?;
        }
        out.flush()?;
        std::fs::remove_file(raw)?;
        len += order.len();
    }
    if conflicts > 0 {
        log::warn!("{conflicts} duplicate ids with conflicting primary classes");
    }
    Ok(PrimaryIndex::Disk(DiskIndex { dir, len }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectionReport {
    pub level: Level,
    pub scheme_classes: usize,
    pub classes_before: usize,
    pub classes_after: usize,
    pub links_before: usize,
    pub links_after: usize,
    pub citations_before: u64,
    pub citations_after: u64,
    /// Edges whose cited id is not in the index.
    pub unresolvable: u64,
    /// Edges where either side has no projection at this level.
    pub unprojectable: u64,
}

impl fmt::Display for CorrectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#level={} scheme_classes={}", self.level, self.scheme_classes)?;
        writeln!(f, "statistic\tbefore\tafter")?;
        writeln!(f, "classes\t{}\t{}", self.classes_before, self.classes_after)?;
        writeln!(f, "links\t{}\t{}", self.links_before, self.links_after)?;
        writeln!(f, "citations\t{}\t{}", self.citations_before, self.citations_after)?;
        writeln!(f, "unresolvable\t{}", self.unresolvable)?;
        writeln!(f, "unprojectable\t{}", self.unprojectable)
    }
}

#[derive(Default)]
struct Tally {
    cells: Vec<HashMap<u64, u64>>,
    unresolvable: u64,
    unprojectable: Vec<u64>,
}

impl Tally {
    fn new(levels: usize) -> Tally {
        Tally {
            cells: vec![HashMap::new(); levels],
            unresolvable: 0,
            unprojectable: vec![0; levels],
        }
    }

    fn edge(&mut self, levels: &[Level], citing: Packed, cited: Packed) {
        for (l, &level) in levels.iter().enumerate() {
            match (packed_key(citing, level), packed_key(cited, level)) {
                (Some(a), Some(b)) => {
                    *self.cells[l].entry((a as u64) << 32 | b as u64).or_insert(0) += 1
                }
                _ => self.unprojectable[l] += 1,
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (mine, theirs) in self.cells.iter_mut().zip(other.cells) {
            if mine.len() < theirs.len() {
                let small = std::mem::replace(mine, theirs);
                for (k, v) in small {
                    *mine.entry(k).or_insert(0) += v;
                }
            } else {
                for (k, v) in theirs {
                    *mine.entry(k).or_insert(0) += v;
                }
            }
        }
        self.unresolvable += other.unresolvable;
        for (a, b) in self.unprojectable.iter_mut().zip(other.unprojectable) {
            *a += b;
        }
        self
    }
}

/// Distinct cited ids of a record.
fn distinct_cited(rec: &PatentRecord) -> Vec<&str> {
    let mut ids: Vec<&str> = rec.cited_ids.iter().map(String::as_str).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn tally_chunk(chunk: &[PatentRecord], index: &HashMap<String, Packed>, levels: &[Level]) -> Tally {
    chunk
        .par_iter()
        .fold(
            || Tally::new(levels.len()),
            |mut t, rec| {
                let Some(primary) = rec.primary() else { return t };
                let citing = pack(primary);
                for id in distinct_cited(rec) {
                    match index.get(id) {
                        Some(&cited) => t.edge(levels, citing, cited),
                        None => t.unresolvable += 1,
                    }
                }
                t
            },
        )
        .reduce(|| Tally::new(levels.len()), Tally::merge)
}

fn tally_in_memory<I>(records: I, index: &HashMap<String, Packed>, levels: &[Level]) -> Tally
where
    I: IntoIterator<Item = PatentRecord>,
{
    let mut total = Tally::new(levels.len());
    let mut chunk = Vec::with_capacity(CHUNK);
    for rec in records {
        chunk.push(rec);
        if chunk.len() == CHUNK {
            total = total.merge(tally_chunk(&chunk, index, levels));
            chunk.clear();
        }
    }
    if !chunk.is_empty() {
        total = total.merge(tally_chunk(&chunk, index, levels));
    }
    total
}

/// External hash join: edges are bucketed by cited id, then each bucket is
/// resolved against the matching index partition.
fn tally_on_disk<I>(records: I, index: &DiskIndex, levels: &[Level]) -> Result<Tally>
where
    I: IntoIterator<Item = PatentRecord>,
{
    let dir = tempfile::tempdir()?;
    let mut writers = open_buckets(dir.path(), "edges")?;
    for rec in records {
        let Some(primary) = rec.primary() else { continue };
        let citing = pack(primary);
        for id in distinct_cited(&rec) {
            writeln!(writers[bucket_of(id)], "{citing}\t{id}")?;
        }
    }
    for w in writers {
        w.into_inner().map_err(|e| e.into_error())?;
    }
    let mut total = Tally::new(levels.len());
    for b in 0..BUCKETS {
        let part = index.load_bucket(b)?;
        let path = dir.path().join(format!("edges{b:02}.tsv"));
        let mut t = Tally::new(levels.len());
        for line in BufReader::new(File::open(&path)?).lines() {
            let line = line?;
            let (citing, id) = line.split_once('\t').ok_or_else(corrupt)?;
            let citing: Packed = citing.parse().map_err(|_| corrupt())?;
            match part.get(id) {
                Some(&cited) => t.edge(levels, citing, cited),
                None => t.unresolvable += 1,
            }
        }
        total = total.merge(t);
    }
    Ok(total)
}

fn finish(
    cells: HashMap<u64, u64>,
    unresolvable: u64,
    unprojectable: u64,
    scheme: &IpcScheme,
    level: Level,
) -> Result<(ClassCitationMatrix, CorrectionReport)> {
    let mut classes_before = BTreeSet::new();
    let mut citations_before = 0;
    let links_before = cells.len();
    let mut kept = Vec::new();
    for (k, n) in cells {
        let (a, b) = ((k >> 32) as u32, k as u32);
        classes_before.insert(a);
        classes_before.insert(b);
        citations_before += n;
        if scheme.admits_key(level, a) && scheme.admits_key(level, b) {
            kept.push((a, b, n));
        }
    }
    let class_keys: BTreeSet<u32> = kept.iter().flat_map(|&(a, b, _)| [a, b]).collect();
    let position: HashMap<u32, usize> = class_keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let classes: Vec<String> = class_keys.iter().map(|&k| symbol_of_key(level, k)).collect();
    let counts: std::collections::BTreeMap<(usize, usize), u64> = kept
        .iter()
        .map(|&(a, b, n)| ((position[&a], position[&b]), n))
        .collect();
    let total_citations: u64 = counts.values().sum();
    let report = CorrectionReport {
        level,
        scheme_classes: match level {
            Level::Three => scheme.valid3.len(),
            Level::Four => scheme.valid4.len(),
        },
        classes_before: classes_before.len(),
        classes_after: classes.len(),
        links_before,
        links_after: counts.len(),
        citations_before,
        citations_after: total_citations,
        unresolvable,
        unprojectable,
    };
    if total_citations == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok((
        ClassCitationMatrix {
            level,
            classes,
            counts,
            total_citations,
        },
        report,
    ))
}

/// One pass over the citing records producing a matrix per requested level.
pub fn build_citation_matrices<I>(
    citing: I,
    index: &PrimaryIndex,
    scheme: &IpcScheme,
    levels: &[Level],
) -> Result<Vec<(ClassCitationMatrix, CorrectionReport)>>
where
    I: IntoIterator<Item = PatentRecord>,
{
    let tally = match index {
        PrimaryIndex::Memory(m) => tally_in_memory(citing, m, levels),
        PrimaryIndex::Disk(d) => tally_on_disk(citing, d, levels)?,
    };
    let unresolvable = tally.unresolvable;
    tally
        .cells
        .into_iter()
        .zip(tally.unprojectable)
        .zip(levels)
        .map(|((cells, unproj), &level)| finish(cells, unresolvable, unproj, scheme, level))
        .collect()
}

pub fn build_citation_matrix<I>(
    citing: I,
    index: &PrimaryIndex,
    scheme: &IpcScheme,
    level: Level,
) -> Result<(ClassCitationMatrix, CorrectionReport)>
where
    I: IntoIterator<Item = PatentRecord>,
{
    Ok(build_citation_matrices(citing, index, scheme, &[level])?.remove(0))
}

pub fn format_matrix(m: &ClassCitationMatrix) -> String {
    let mut s = format!(
        "#level={} classes={} citations={}\n",
        m.level,
        m.classes.len(),
        m.total_citations
    );
    for (&(i, j), &n) in &m.counts {
        s.push_str(&format!("{}\t{}\t{}\n", m.classes[i], m.classes[j], n));
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<ClassCitationMatrix> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let syntax = |line: usize, reason: &str| Error::Syntax {
        line,
        reason: reason.to_string(),
    };
    let mut level = None;
    let mut classes = None;
    let mut citations = None;
    for part in header.trim_start_matches('#').split_whitespace() {
        match part.split_once('=') {
            Some(("level", v)) => level = v.parse().ok().and_then(Level::from_digits),
            Some(("classes", v)) => classes = v.parse::<usize>().ok(),
            Some(("citations", v)) => citations = v.parse::<u64>().ok(),
            _ => {}
        }
    }
    let (Some(level), Some(classes), Some(citations)) = (level, classes, citations) else {
        return Err(syntax(1, "bad matrix header"));
    };
    let mut triples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let n = (f.len() == 3).then(|| f[2].parse::<u64>().ok()).flatten();
        let n = n.ok_or_else(|| syntax(i + 2, "expected citing<TAB>cited<TAB>count"))?;
        triples.push((f[0].to_string(), f[1].to_string(), n));
    }
    let m = ClassCitationMatrix::from_triples(level, triples);
    if m.classes.len() != classes || m.total_citations != citations {
        return Err(syntax(1, "header totals disagree with body"));
    }
    Ok(m)
}
