//! Seeded synthetic corpora with planted class groups, for tests and benchmarks.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::write_canonical;
use crate::model::{parse_ipc, IpcCode, IpcScheme, Kind, Level, PatentRecord};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub patents: usize,
    /// Distinct admissible subclasses drawn from the scheme.
    pub classes: usize,
    /// Planted groups of classes that preferentially cite each other.
    pub groups: usize,
    pub mean_citations: f64,
    /// Probability that a citation stays inside the citing class's group.
    pub p_in: f64,
    /// Upper bound on secondary codes per record.
    pub extra_codes: usize,
    /// Share of records whose primary code is a placeholder or lacks a subclass.
    pub invalid_rate: f64,
    /// Share of citations pointing outside the corpus.
    pub unresolvable_rate: f64,
    pub kind: Kind,
    pub first_year: i32,
    pub years: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patents: 1000,
            classes: 40,
            groups: 4,
            mean_citations: 6.0,
            p_in: 0.8,
            extra_codes: 2,
            invalid_rate: 0.02,
            unresolvable_rate: 0.03,
            kind: Kind::Grant,
            first_year: 2000,
            years: 8,
            seed: 7,
        }
    }
}

pub struct SynthCorpus {
    pub config: SynthConfig,
    pub classes: Vec<IpcCode>,
    class_of: Vec<u32>,
    members: Vec<Vec<u32>>,
    class_weights: Vec<f64>,
    invalid: Vec<IpcCode>,
}

pub fn patent_id(i: usize) -> String {
    format!("{}", 5_000_000 + i)
}

fn pick_weighted(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().unwrap();
    let x = rng.random_range(0.0..total);
    cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1)
}

pub fn generate(config: SynthConfig) -> SynthCorpus {
    let scheme = IpcScheme::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool = scheme.admissible(Level::Four);
    pool.shuffle(&mut rng);
    pool.truncate(config.classes.clamp(1, pool.len()));
    pool.sort();
    let classes: Vec<IpcCode> = pool.iter().map(|s| parse_ipc(s).unwrap()).collect();
    let k = classes.len();
    let class_weights: Vec<f64> = (0..k).map(|r| 1.0 / (1.0 + (r % 7) as f64)).collect();
    let cumulative: Vec<f64> = class_weights
        .iter()
        .scan(0.0, |s, w| {
            *s += w;
            Some(*s)
        })
        .collect();
    let groups = config.groups.clamp(1, k);
    let mut class_of = Vec::with_capacity(config.patents);
    let mut members = vec![Vec::new(); groups];
    for i in 0..config.patents {
        let c = pick_weighted(&mut rng, &cumulative);
        class_of.push(c as u32);
        members[c % groups].push(i as u32);
    }
    let invalid = ["C99Z", "H99Z", "B23", "G06"]
        .iter()
        .map(|s| parse_ipc(s).unwrap())
        .collect();
    SynthCorpus {
        config,
        classes,
        class_of,
        members,
        class_weights,
        invalid,
    }
}

impl SynthCorpus {
    pub fn records(&self) -> SynthIter<'_> {
        SynthIter {
            corpus: self,
            rng: ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed),
            next: 0,
        }
    }

    pub fn write_canonical(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in self.records() {
            write_canonical(&mut w, &r)?;
        }
        w.flush()
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }
}

pub struct SynthIter<'a> {
    corpus: &'a SynthCorpus,
    rng: ChaCha8Rng,
    next: usize,
}

impl Iterator for SynthIter<'_> {
    type Item = PatentRecord;

    fn next(&mut self) -> Option<PatentRecord> {
        let c = self.corpus;
        let cfg = &c.config;
        if self.next >= cfg.patents {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let rng = &mut self.rng;
        let k = c.classes.len();
        let groups = c.members.len();
        let own = c.class_of[i] as usize;
        let mut ipc_codes = vec![if rng.random_bool(cfg.invalid_rate) {
            c.invalid[rng.random_range(0..c.invalid.len())].clone()
        } else {
            c.classes[own].clone()
        }];
        for _ in 0..rng.random_range(0..=cfg.extra_codes) {
            let near = (own + rng.random_range(0..3)) % k;
            ipc_codes.push(c.classes[near].clone());
        }
        let n_cites = if cfg.mean_citations > 0.0 {
            rng.random_range(0..=(2.0 * cfg.mean_citations).round() as usize)
        } else {
            0
        };
        let mut cited_ids = Vec::with_capacity(n_cites);
        for _ in 0..n_cites {
            if rng.random_bool(cfg.unresolvable_rate) {
                cited_ids.push(format!("D{}", rng.random_range(100_000..999_999)));
                continue;
            }
            let g = if rng.random_bool(cfg.p_in) {
                own % groups
            } else {
                rng.random_range(0..groups)
            };
            let pool = &c.members[g];
            if pool.is_empty() {
                continue;
            }
            cited_ids.push(patent_id(pool[rng.random_range(0..pool.len())] as usize));
        }
        let year = cfg.first_year + rng.random_range(0..cfg.years.max(1)) as i32;
        let date = NaiveDate::from_ymd_opt(year, rng.random_range(1..=12), rng.random_range(1..=28));
        Some(PatentRecord {
            patent_id: patent_id(i),
            kind: cfg.kind,
            date,
            ipc_codes,
            cited_ids,
            title: format!("Synthetic record {i}"),
        })
    }
}
