//! End-to-end commands: basemap construction, overlays, per-year animation
//! and diversity reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::aggregate::{build_citation_matrices, two_pass_index, CorrectionReport, IndexOptions};
use crate::analysis::{
    cosine_citing, format_cosine, format_diversity, fractional_counts, parse_cosine, rao_stirling,
    SimilarityMatrix,
};
use crate::community::{louvain_with, threshold_graph, ComponentCensus, Partition, DEFAULT_TRIALS};
use crate::error::{Error, Result, StageExt};
use crate::formats::{
    emit_clu, emit_pajek_project, emit_vec, emit_vos_map, format_counts, parse_vos, truncate_label,
    write_atomic, VosOptions, LABEL_MAX,
};
use crate::ingest::read_canonical;
use crate::layout::{layout_mds, layout_spring, Algorithm, Layout, LayoutConfig};
use crate::model::{BaseEntry, BaseMap, ClassCitationMatrix, IpcScheme, Level, Overlay, PatentRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub layout: LayoutConfig,
    /// Cosine threshold for the Pajek network and its partition.
    pub tau: f64,
    pub louvain_trials: usize,
    pub memory_cap: usize,
    pub hide_empty_labels: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            layout: LayoutConfig::default(),
            tau: 0.2,
            louvain_trials: DEFAULT_TRIALS,
            memory_cap: IndexOptions::default().memory_cap,
            hide_empty_labels: false,
        }
    }
}

impl Config {
    pub fn seed(&self) -> u64 {
        self.layout.seed
    }

    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("bad value {value:?} for {key}"));
        let v = value.trim();
        match key.trim() {
            "seed" => self.layout.seed = v.parse().map_err(|_| bad())?,
            "max_iters" => self.layout.max_iters = v.parse().map_err(|_| bad())?,
            "tolerance" => self.layout.tolerance = v.parse().map_err(|_| bad())?,
            "algorithm" => self.layout.algorithm = v.parse()?,
            "restarts" => self.layout.restarts = v.parse().map_err(|_| bad())?,
            "tau" => {
                let t: f64 = v.parse().map_err(|_| bad())?;
                if !(0.0..1.0).contains(&t) {
                    return Err(bad());
                }
                self.tau = t
            }
            "louvain_trials" => self.louvain_trials = v.parse().map_err(|_| bad())?,
            "memory_cap" => self.memory_cap = v.parse().map_err(|_| bad())?,
            "hide_empty_labels" => self.hide_empty_labels = v.parse().map_err(|_| bad())?,
            k => return Err(Error::Config(format!("unknown key {k:?}"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; `#` starts a comment.
    pub fn parse_into(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Settings plus each input as file name and content digest, so the echo
    /// does not depend on where the inputs live.
    pub fn echo(&self, inputs: &[(&str, &Path)]) -> Result<String> {
        let mut s = String::new();
        for (k, p) in inputs {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            let _ = writeln!(s, "{k}={name} sha256:{}", input_digest(p)?);
        }
        let l = &self.layout;
        let _ = writeln!(s, "seed={}", l.seed);
        let _ = writeln!(s, "algorithm={}", l.algorithm);
        let _ = writeln!(s, "max_iters={}", l.max_iters);
        let _ = writeln!(s, "tolerance={}", l.tolerance);
        let _ = writeln!(s, "restarts={}", l.restarts);
        let _ = writeln!(s, "tau={}", self.tau);
        let _ = writeln!(s, "louvain_trials={}", self.louvain_trials);
        let _ = writeln!(s, "memory_cap={}", self.memory_cap);
        let _ = writeln!(s, "hide_empty_labels={}", self.hide_empty_labels);
        Ok(s)
    }
}

/// Digest of a file, or of the basemap files inside a directory.
fn input_digest(path: &Path) -> Result<String> {
    let io = |e: std::io::Error| std::io::Error::new(e.kind(), format!("{}: {e}", path.display()));
    let mut h = Sha256::new();
    if path.is_dir() {
        for name in ["cos_ipc3.txt", "ipc3.txt", "cos_ipc4.txt", "ipc4.txt"] {
            let f = path.join(name);
            if f.is_file() {
                h.update(name.as_bytes());
                h.update(std::fs::read(&f).map_err(io)?);
            }
        }
    } else {
        h.update(std::fs::read(path).map_err(io)?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Valid records from a canonical file; malformed lines are logged and counted.
pub struct CorpusReader {
    inner: crate::ingest::CanonicalReader<BufReader<File>>,
    pub errors: usize,
}

impl Iterator for CorpusReader {
    type Item = PatentRecord;
    fn next(&mut self) -> Option<PatentRecord> {
        loop {
            match self.inner.next()? {
                Ok(r) => return Some(r),
                Err(e) => {
                    self.errors += 1;
                    log::warn!("skipping record: {e}");
                }
            }
        }
    }
}

pub fn open_corpus(path: &Path) -> Result<CorpusReader> {
    let f = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(CorpusReader {
        inner: read_canonical(BufReader::new(f)),
        errors: 0,
    })
}

pub fn class_label(scheme: &IpcScheme, symbol: &str) -> String {
    let full = match scheme.heading(symbol) {
        Some(h) => format!("{symbol} {h}"),
        None => symbol.to_string(),
    };
    truncate_label(&full, LABEL_MAX)
}

pub struct BuiltBasemap {
    pub base: BaseMap,
    pub sim: SimilarityMatrix,
    pub layout: Layout,
    pub clusters: Partition,
    pub threshold: crate::community::Graph,
    pub threshold_partition: Partition,
    pub census: ComponentCensus,
}

/// Cosine, layout and clustering for one citation matrix.
pub fn build_basemap(matrix: &ClassCitationMatrix, scheme: &IpcScheme, config: &Config) -> Result<BuiltBasemap> {
    let sim = cosine_citing(matrix);
    let threshold = threshold_graph(&sim, config.tau);
    let layout = match config.layout.algorithm {
        Algorithm::Mds => layout_mds(&sim, &config.layout),
        Algorithm::KamadaKawai => layout_spring(&threshold, &config.layout),
    }
    .stage("layout")?;
    let clusters = louvain_with(&threshold_graph(&sim, 0.0), config.seed(), config.louvain_trials);
    let threshold_partition = louvain_with(&threshold, config.seed(), config.louvain_trials);
    let census = threshold.census();
    let rows = matrix.row_sums();
    let entries = matrix
        .classes
        .iter()
        .enumerate()
        .map(|(i, s)| BaseEntry {
            symbol: s.clone(),
            label: class_label(scheme, s),
            x: layout.positions[i].0,
            y: layout.positions[i].1,
            cluster: clusters.membership[i],
            citations: rows[i],
            isolated: sim.isolated[i],
        })
        .collect();
    Ok(BuiltBasemap {
        base: BaseMap {
            level: matrix.level,
            entries,
            stress: layout.stress,
        },
        sim,
        layout,
        clusters,
        threshold,
        threshold_partition,
        census,
    })
}

const STOPWORDS: &[&str] = &[
    "and", "for", "the", "with", "thereof", "other", "not", "otherwise", "provided", "specially",
    "adapted", "their", "than", "such", "from", "general", "e.g.", "using", "devices", "apparatus",
    "methods", "means", "or", "of", "in", "to", "by", "as", "on", "a", "an", "therefor", "covered",
];

/// Cluster id, size and the most frequent heading words.
pub fn cluster_table(base: &BaseMap, scheme: &IpcScheme) -> String {
    let mut groups: BTreeMap<u32, Vec<&BaseEntry>> = BTreeMap::new();
    for e in &base.entries {
        groups.entry(e.cluster).or_default().push(e);
    }
    let mut s = String::from("cluster\tsize\ttop_words\n");
    for (c, members) in groups {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for e in &members {
            let heading = scheme.heading(&e.symbol).unwrap_or("");
            let words: BTreeSet<String> = heading
                .split(|ch: char| !ch.is_alphanumeric() && ch != '-')
                .map(|w| w.to_lowercase())
                .filter(|w| w.len() > 2 && !STOPWORDS.contains(&w.as_str()))
                .collect();
            for w in words {
                *freq.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: Vec<&str> = ranked.iter().take(5).map(|x| x.0.as_str()).collect();
        let _ = writeln!(s, "{c}\t{}\t{}", members.len(), top.join(" "));
    }
    s
}

#[derive(Debug, Clone)]
pub struct BasemapSummary {
    pub reports: Vec<CorrectionReport>,
    pub stress: Vec<(Level, f64)>,
    pub clusters: Vec<(Level, usize)>,
    pub malformed: usize,
    pub files: Vec<PathBuf>,
}

pub fn cmd_basemap(
    corpus: &Path,
    levels: &[Level],
    out_dir: &Path,
    config: &Config,
    write_matrix: bool,
) -> Result<BasemapSummary> {
    let scheme = IpcScheme::reference();
    std::fs::create_dir_all(out_dir)?;
    let mut pass1 = open_corpus(corpus).stage("ingest")?;
    let index = two_pass_index(
        &mut pass1,
        &IndexOptions {
            memory_cap: config.memory_cap,
        },
    )
    .stage("index")?;
    let malformed = pass1.errors;
    let pass2 = open_corpus(corpus).stage("ingest")?;
    let matrices = build_citation_matrices(pass2, &index, scheme, levels).stage("aggregate")?;
    let mut summary = BasemapSummary {
        reports: vec![],
        stress: vec![],
        clusters: vec![],
        malformed,
        files: vec![],
    };
    for (matrix, report) in matrices {
        let l = matrix.level;
        let built = build_basemap(&matrix, scheme, config)?;
        let name = format!("ipc{l}");
        let mut put = |file: String, body: String| -> Result<()> {
            let p = out_dir.join(file);
            write_atomic(&p, body.as_bytes()).stage("write")?;
            summary.files.push(p);
            Ok(())
        };
        put(format!("cos_ipc{l}.txt"), format_cosine(&built.sim))?;
        put(format!("{name}.txt"), emit_vos_map(&built.base, None, VosOptions::default()))?;
        let citations: Vec<f64> = built.base.entries.iter().map(|e| e.citations as f64).collect();
        put(
            format!("{name}.paj"),
            emit_pajek_project(
                &name,
                &built.base,
                &built.threshold,
                &built.threshold_partition,
                &[(format!("{name}_citations"), citations)],
            )
            .stage("formats")?,
        )?;
        put(format!("correction{l}.txt"), report.to_string())?;
        let mut table = cluster_table(&built.base, scheme);
        let _ = writeln!(
            table,
            "#pajek tau={} clusters={} Q={:.3}",
            config.tau, built.threshold_partition.clusters, built.threshold_partition.q
        );
        let _ = writeln!(table, "#basemap clusters={} Q={:.3} stress={:.6}", built.clusters.clusters, built.clusters.q, built.base.stress);
        table.push_str(&built.census.table(&matrix.classes));
        put(format!("clusters{l}.txt"), table)?;
        if write_matrix {
            put(format!("matrix{l}.txt"), crate::aggregate::format_matrix(&matrix))?;
        }
        log::info!(
            "level {l}: {} classes, {} citations, stress {:.4}, {} clusters",
            matrix.classes.len(),
            matrix.total_citations,
            built.base.stress,
            built.clusters.clusters
        );
        summary.stress.push((l, built.base.stress));
        summary.clusters.push((l, built.clusters.clusters));
        summary.reports.push(report);
    }
    write_atomic(
        &out_dir.join("config.txt"),
        config.echo(&[("corpus", corpus)])?.as_bytes(),
    )?;
    Ok(summary)
}

/// Basemap of one level as written by `cmd_basemap`.
pub fn load_basemap(dir: &Path, level: Level) -> Result<(BaseMap, SimilarityMatrix)> {
    let cos_path = dir.join(format!("cos_ipc{level}.txt"));
    let vos_path = dir.join(format!("ipc{level}.txt"));
    for p in [&cos_path, &vos_path] {
        if !p.exists() {
            return Err(Error::MissingBasemap(p.clone()));
        }
    }
    let sim = parse_cosine(&std::fs::read_to_string(&cos_path)?)?;
    if sim.level != level {
        return Err(Error::LevelMismatch {
            overlay: level,
            matrix: sim.level,
        });
    }
    let vos = parse_vos(&std::fs::read_to_string(&vos_path)?)?;
    if vos.len() != sim.len() {
        return Err(Error::IndexMisalignment {
            what: "basemap map file",
            got: vos.len(),
            expected: sim.len(),
        });
    }
    let entries = vos
        .into_iter()
        .zip(&sim.classes)
        .enumerate()
        .map(|(i, (v, s))| BaseEntry {
            symbol: s.clone(),
            label: v.label,
            x: v.x,
            y: v.y,
            cluster: v.cluster,
            citations: 0,
            isolated: sim.isolated[i],
        })
        .collect();
    Ok((
        BaseMap {
            level,
            entries,
            stress: f64::NAN,
        },
        sim,
    ))
}

#[derive(Debug, Clone)]
pub struct OverlaySummary {
    pub overlays: Vec<Overlay>,
    pub malformed: usize,
}

fn overlay_records(records: &[PatentRecord], base_dir: &Path, out_dir: &Path, config: &Config, inputs: &[(&str, &Path)]) -> Result<Vec<Overlay>> {
    let scheme = IpcScheme::reference();
    let mut bases = Vec::new();
    for level in Level::BOTH {
        bases.push(load_basemap(base_dir, level).stage("basemap")?);
    }
    std::fs::create_dir_all(out_dir)?;
    let opts = VosOptions {
        hide_empty_labels: config.hide_empty_labels,
    };
    let mut overlays = Vec::new();
    for (base, sim) in &bases {
        let l = base.level;
        let mut overlay = fractional_counts(records.iter().cloned(), scheme, l);
        overlay.diversity = match rao_stirling(&overlay, sim) {
            Ok(d) => Some(d),
            Err(Error::EmptyOverlay) => None,
            Err(e) => return Err(e.in_stage("diversity")),
        };
        let n = base.entries.len();
        let weights: Vec<f64> = base
            .entries
            .iter()
            .map(|e| overlay.weights.get(&e.symbol).copied().unwrap_or(0.0))
            .collect();
        let cls: Vec<u32> = base
            .entries
            .iter()
            .zip(&weights)
            .map(|(e, &w)| if w > 0.0 { e.cluster } else { 0 })
            .collect();
        write_atomic(&out_dir.join(format!("vos{l}.txt")), emit_vos_map(base, Some(&overlay), opts).as_bytes())?;
        write_atomic(&out_dir.join(format!("ipc{l}.vec")), emit_vec(&weights, n)?.as_bytes())?;
        write_atomic(&out_dir.join(format!("ipc{l}.cls")), emit_clu(&cls, n)?.as_bytes())?;
        overlays.push(overlay);
    }
    write_atomic(
        &out_dir.join("ipc_rao.txt"),
        format_diversity(overlays[0].diversity, overlays[1].diversity).as_bytes(),
    )?;
    let refs: Vec<&Overlay> = overlays.iter().collect();
    write_atomic(&out_dir.join("vos.csv"), format_counts(&refs).as_bytes())?;
    write_atomic(&out_dir.join("config.txt"), config.echo(inputs)?.as_bytes())?;
    Ok(overlays)
}

pub fn cmd_overlay(patent_set: &Path, base_dir: &Path, out_dir: &Path, config: &Config) -> Result<OverlaySummary> {
    let mut reader = open_corpus(patent_set).stage("ingest")?;
    let records: Vec<PatentRecord> = reader.by_ref().collect();
    let overlays = overlay_records(
        &records,
        base_dir,
        out_dir,
        config,
        &[("patent_set", patent_set), ("basemap", base_dir)],
    )?;
    Ok(OverlaySummary {
        overlays,
        malformed: reader.errors,
    })
}

#[derive(Debug, Clone)]
pub struct AnimateSummary {
    pub years: Vec<(i32, usize)>,
    pub undated: usize,
    pub malformed: usize,
}

/// One overlay per year, from the first to the last year present unless a range is given.
pub fn cmd_animate(
    patent_set: &Path,
    base_dir: &Path,
    out_dir: &Path,
    config: &Config,
    years: Option<(i32, i32)>,
) -> Result<AnimateSummary> {
    let mut reader = open_corpus(patent_set).stage("ingest")?;
    let mut by_year: BTreeMap<i32, Vec<PatentRecord>> = BTreeMap::new();
    let mut undated = 0;
    for r in reader.by_ref() {
        match r.year() {
            Some(y) => by_year.entry(y).or_default().push(r),
            None => undated += 1,
        }
    }
    if undated > 0 {
        log::warn!("{undated} records without a date are left out of the animation");
    }
    let (first, last) = match years {
        Some(r) => r,
        None => match (by_year.keys().next(), by_year.keys().next_back()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::EmptyCorpus.in_stage("animate")),
        },
    };
    let mut done = Vec::new();
    for y in first..=last {
        let recs = by_year.get(&y).map(Vec::as_slice).unwrap_or(&[]);
        overlay_records(
            recs,
            base_dir,
            &out_dir.join(y.to_string()),
            config,
            &[("patent_set", patent_set), ("basemap", base_dir)],
        )?;
        done.push((y, recs.len()));
    }
    Ok(AnimateSummary {
        years: done,
        undated,
        malformed: reader.errors,
    })
}

/// Δ at both levels for a patent set against a basemap directory.
pub fn diversity(patent_set: &Path, base_dir: &Path) -> Result<(Option<f64>, Option<f64>)> {
    let scheme = IpcScheme::reference();
    let records: Vec<PatentRecord> = open_corpus(patent_set)?.collect();
    let mut out = [None, None];
    for (k, level) in Level::BOTH.into_iter().enumerate() {
        let (_, sim) = load_basemap(base_dir, level)?;
        let o = fractional_counts(records.iter().cloned(), scheme, level);
        out[k] = match rao_stirling(&o, &sim) {
            Ok(d) => Some(d),
            Err(Error::EmptyOverlay) => None,
            Err(e) => return Err(e),
        };
    }
    Ok((out[0], out[1]))
}

/// Re-parse a file by extension and re-emit it; true when the bytes agree.
pub fn check_format(path: &Path) -> Result<bool> {
    use crate::formats::*;
    let text = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let again = match ext {
        "net" => emit_net(&parse_net(&text)?),
        "paj" => format_project(&parse_paj(&text)?),
        "vec" => {
            let v = parse_vec(&text)?;
            emit_vec(&v, v.len())?
        }
        "clu" | "cls" => {
            let v = parse_clu(&text)?;
            emit_clu(&v, v.len())?
        }
        _ if text.starts_with(VOS_HEADER) => format_vos(&parse_vos(&text)?),
        _ if text.starts_with("#level=") && text.lines().nth(1).is_some_and(|l| l.split('\t').count() == 3 && l.contains('.')) => {
            format_cosine(&parse_cosine(&text)?)
        }
        _ => {
            return Err(Error::Syntax {
                line: 1,
                reason: format!("unrecognized file type for {}", path.display()),
            })
        }
    };
    Ok(again == text)
}
