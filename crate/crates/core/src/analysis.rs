//! Citing-side cosine similarity, technological distance, fractional counts
//! and Rao-Stirling diversity.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate, ClassCitationMatrix, IpcScheme, Level, Overlay, PatentRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub level: Level,
    pub classes: Vec<String>,
    /// Row-major n x n.
    cos: Vec<f64>,
    pub isolated: Vec<bool>,
}

impl SimilarityMatrix {
    /// Build from a full symmetric matrix. Rows with a zero diagonal are flagged isolated.
    pub fn from_dense(level: Level, classes: Vec<String>, cos: Vec<f64>) -> Result<SimilarityMatrix> {
        let n = classes.len();
        if cos.len() != n * n {
            return Err(Error::IndexMisalignment {
                what: "cosine cells",
                got: cos.len(),
                expected: n * n,
            });
        }
        let isolated = (0..n).map(|i| cos[i * n + i] == 0.0).collect();
        Ok(SimilarityMatrix {
            level,
            classes,
            cos,
            isolated,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn cos(&self, i: usize, j: usize) -> f64 {
        self.cos[i * self.len() + j]
    }

    /// 1 - cos off the diagonal; 0 on it, isolated classes included.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            1.0 - self.cos(i, j)
        }
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == symbol)
    }

    pub fn non_isolated(&self) -> usize {
        self.isolated.iter().filter(|&&b| !b).count()
    }
}

/// Cosine between citing rows, each unordered pair computed once and mirrored.
pub fn cosine_citing(matrix: &ClassCitationMatrix) -> SimilarityMatrix {
    let n = matrix.classes.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(i, j), &c) in &matrix.counts {
        rows[i].push((j, c as f64));
    }
    let sim = cosine_rows(&rows, n);
    SimilarityMatrix::from_dense(matrix.level, matrix.classes.clone(), sim).unwrap()
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut x, mut y, mut s) = (0, 0, 0.0);
    while x < a.len() && y < b.len() {
        match a[x].0.cmp(&b[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                s += a[x].1 * b[y].1;
                x += 1;
                y += 1;
            }
        }
    }
    s
}

/// Sparse rows sorted by column; returns the dense n x n cosine matrix.
pub fn cosine_rows(rows: &[Vec<(usize, f64)>], n: usize) -> Vec<f64> {
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
        .collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if norms[i] == 0.0 || norms[j] == 0.0 {
                        0.0
                    } else if i == j {
                        1.0
                    } else {
                        (sparse_dot(&rows[i], &rows[j]) / (norms[i] * norms[j])).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + k;
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// Split each record's unit weight over its valid class attributions at `level`,
/// keeping multiplicity after projection.
pub fn fractional_counts<I>(records: I, scheme: &IpcScheme, level: Level) -> Overlay
where
    I: IntoIterator<Item = PatentRecord>,
{
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut patents: BTreeMap<String, u64> = BTreeMap::new();
    let (mut patent_count, mut attributions, mut skipped) = (0u64, 0u64, 0u64);
    for rec in records {
        let classes: Vec<String> = rec
            .ipc_codes
            .iter()
            .filter(|c| validate(c, scheme, level))
            .filter_map(|c| c.project(level))
            .collect();
        if classes.is_empty() {
            skipped += 1;
            continue;
        }
        let share = 1.0 / classes.len() as f64;
        let mut distinct: Vec<&String> = Vec::new();
        for c in &classes {
            *weights.entry(c.clone()).or_insert(0.0) += share;
            if !distinct.contains(&c) {
                distinct.push(c);
            }
        }
        for c in distinct {
            *patents.entry(c.clone()).or_insert(0) += 1;
        }
        patent_count += 1;
        attributions += classes.len() as u64;
    }
    Overlay {
        level,
        weights,
        patents,
        patent_count,
        class_attribution_count: attributions,
        skipped,
        diversity: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairConvention {
    /// Sum over all ordered pairs (i, j), diagonal included with d_ii = 0.
    #[default]
    Ordered,
    /// Sum over i < j only.
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    pub delta: f64,
    /// Overlay weight on classes missing from the similarity matrix.
    pub absent_weight: f64,
}

pub fn rao_stirling(overlay: &Overlay, sim: &SimilarityMatrix) -> Result<f64> {
    Ok(rao_stirling_with(overlay, sim, PairConvention::Ordered)?.delta)
}

pub fn rao_stirling_with(
    overlay: &Overlay,
    sim: &SimilarityMatrix,
    convention: PairConvention,
) -> Result<Diversity> {
    if overlay.level != sim.level {
        return Err(Error::LevelMismatch {
            overlay: overlay.level,
            matrix: sim.level,
        });
    }
    let index: HashMap<&str, usize> = sim
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut present = Vec::new();
    let mut absent_weight = 0.0;
    for (c, &w) in &overlay.weights {
        match index.get(c.as_str()) {
            Some(&i) if w > 0.0 => present.push((i, w)),
            Some(_) => {}
            None => absent_weight += w,
        }
    }
    if absent_weight > 0.0 {
        log::warn!(
            "overlay weight {absent_weight:.4} falls on classes absent from the level-{} map",
            sim.level
        );
    }
    let total: f64 = present.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return Err(Error::EmptyOverlay);
    }
    let p: Vec<(usize, f64)> = present.into_iter().map(|(i, w)| (i, w / total)).collect();
    Ok(Diversity {
        delta: quadratic_entropy(&p, |i, j| sim.distance(i, j), convention),
        absent_weight,
    })
}

/// Σ p_i p_j d_ij over the given (index, share) pairs.
pub fn quadratic_entropy<D>(p: &[(usize, f64)], d: D, convention: PairConvention) -> f64
where
    D: Fn(usize, usize) -> f64,
{
    let mut sum = 0.0;
    for (a, &(i, pi)) in p.iter().enumerate() {
        let start = match convention {
            PairConvention::Ordered => 0,
            PairConvention::Unordered => a + 1,
        };
        for &(j, pj) in &p[start..] {
            sum += pi * pj * d(i, j);
        }
    }
    sum
}

/// Kruskal stress over pairs of non-isolated classes.
pub fn kruskal_stress(positions: &[(f64, f64)], sim: &SimilarityMatrix) -> f64 {
    let n = sim.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = sim.distance(i, j);
        }
    }
    let include: Vec<bool> = sim.isolated.iter().map(|b| !b).collect();
    stress_of(positions, &d, &include)
}

/// S = sqrt(Σ_{i≠j} (‖x_i − x_j‖ − d_ij)² / Σ_{i≠j} d_ij²) over included points.
pub fn stress_of(positions: &[(f64, f64)], d: &[f64], include: &[bool]) -> f64 {
    let n = include.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        if !include[i] {
            continue;
        }
        for j in 0..n {
            if i == j || !include[j] {
                continue;
            }
            let (dx, dy) = (positions[i].0 - positions[j].0, positions[i].1 - positions[j].1);
            let e = (dx * dx + dy * dy).sqrt() - d[i * n + j];
            num += e * e;
            den += d[i * n + j] * d[i * n + j];
        }
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

pub fn format_cosine(sim: &SimilarityMatrix) -> String {
    let n = sim.len();
    let mut s = format!("#level={} classes={}\n", sim.level, n);
    for i in 0..n {
        for j in i..n {
            s.push_str(&format!(
                "{}\t{}\t{:.6}\n",
                sim.classes[i],
                sim.classes[j],
                sim.cos(i, j)
            ));
        }
    }
    s
}

pub fn parse_cosine(text: &str) -> Result<SimilarityMatrix> {
    let syntax = |line: usize, reason: &str| Error::Syntax {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let mut level = None;
    let mut n = None;
    for part in header.trim_start_matches('#').split_whitespace() {
        match part.split_once('=') {
            Some(("level", v)) => level = v.parse().ok().and_then(Level::from_digits),
            Some(("classes", v)) => n = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let (Some(level), Some(n)) = (level, n) else {
        return Err(syntax(1, "bad cosine header"));
    };
    let mut classes: Vec<String> = Vec::with_capacity(n);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let v = (f.len() == 3).then(|| f[2].parse::<f64>().ok()).flatten();
        let v = v.ok_or_else(|| syntax(k + 2, "expected symbol<TAB>symbol<TAB>cosine"))?;
        let mut id = |s: &str| {
            *index.entry(s.to_string()).or_insert_with(|| {
                classes.push(s.to_string());
                classes.len() - 1
            })
        };
        let (i, j) = (id(f[0]), id(f[1]));
        cells.push((i, j, v));
    }
    if classes.len() != n {
        return Err(syntax(1, "class count disagrees with header"));
    }
    let mut cos = vec![0.0; n * n];
    for (i, j, v) in cells {
        cos[i * n + j] = v;
        cos[j * n + i] = v;
    }
    SimilarityMatrix::from_dense(level, classes, cos)
}

pub fn format_diversity(delta3: Option<f64>, delta4: Option<f64>) -> String {
    let f = |d: Option<f64>| d.map(|v| format!("{v:.3}")).unwrap_or_else(|| "NA".into());
    format!("level3\t{}\nlevel4\t{}\n", f(delta3), f(delta4))
}
