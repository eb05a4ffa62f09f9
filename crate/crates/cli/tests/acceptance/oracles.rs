//! Slow, direct reference computations the library results are checked against.

use std::collections::{BTreeMap, HashMap};

use ipcmap::{IpcScheme, Level, PatentRecord};

/// Citation counts by a plain double loop: every citing record, every distinct
/// reference found in the corpus, first record per id defines its class.
pub fn citation_counts(records: &[PatentRecord], scheme: &IpcScheme, level: Level) -> BTreeMap<(String, String), u64> {
    let mut first: HashMap<&str, usize> = HashMap::new();
    for (k, r) in records.iter().enumerate() {
        first.entry(r.patent_id.as_str()).or_insert(k);
    }
    let mut out = BTreeMap::new();
    for r in records {
        let mut done: Vec<&String> = Vec::new();
        for c in &r.cited_ids {
            if done.contains(&c) {
                continue;
            }
            done.push(c);
            let Some(&k) = first.get(c.as_str()) else { continue };
            let from = r.ipc_codes[0].project(level);
            let to = records[k].ipc_codes[0].project(level);
            if let (Some(a), Some(b)) = (from, to) {
                if scheme.admits(&a, level) && scheme.admits(&b, level) {
                    *out.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// Dense cosine between rows; zero rows give zero everywhere.
pub fn cosine(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nj = 0.0;
            for k in 0..rows[i].len() {
                dot += rows[i][k] * rows[j][k];
                ni += rows[i][k] * rows[i][k];
                nj += rows[j][k] * rows[j][k];
            }
            if ni > 0.0 && nj > 0.0 {
                out[i][j] = dot / (ni.sqrt() * nj.sqrt());
            }
        }
    }
    out
}

/// Σ_i Σ_j p_i p_j d_ij with p normalized to sum 1.
pub fn rao_stirling(weights: &[f64], d: &[Vec<f64>]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut s = 0.0;
    for i in 0..weights.len() {
        for j in 0..weights.len() {
            s += (weights[i] / total) * (weights[j] / total) * d[i][j];
        }
    }
    s
}

pub fn kruskal(positions: &[(f64, f64)], d: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..positions.len() {
        for j in 0..positions.len() {
            if i != j {
                let dist = ((positions[i].0 - positions[j].0).powi(2) + (positions[i].1 - positions[j].1).powi(2)).sqrt();
                num += (dist - d[i][j]).powi(2);
                den += d[i][j].powi(2);
            }
        }
    }
    (num / den).sqrt()
}

/// Q = (1/2m) Σ_ij (A_ij - k_i k_j / 2m) [c_i = c_j] over a dense adjacency.
pub fn modularity(n: usize, edges: &[(usize, usize, f64)], membership: &[u32]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        if i != j {
            a[j][i] += w;
        }
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if membership[i] == membership[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Highest modularity over every set partition of the vertices.
pub fn best_modularity(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    // restricted growth strings enumerate each set partition once
    let mut rgs = vec![0u32; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(fast_q(n, edges, &rgs));
        let mut i = n - 1;
        loop {
            if i == 0 {
                return best;
            }
            let max_prev = *rgs[..i].iter().max().unwrap();
            if rgs[i] <= max_prev {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Same quantity as `modularity`, arranged per community for the enumeration loop.
fn fast_q(n: usize, edges: &[(usize, usize, f64)], c: &[u32]) -> f64 {
    let mut deg = [0.0f64; 16];
    let mut inside = [0.0f64; 16];
    let mut two_m = 0.0;
    let mut k = vec![0.0; n];
    for &(i, j, w) in edges {
        k[i] += w;
        k[j] += w;
        two_m += 2.0 * w;
        if c[i] == c[j] {
            inside[c[i] as usize] += 2.0 * w;
        }
    }
    if two_m == 0.0 {
        return 0.0;
    }
    for i in 0..n {
        deg[c[i] as usize] += k[i];
    }
    (0..n.min(16)).map(|g| inside[g] / two_m - (deg[g] / two_m).powi(2)).sum()
}

/// Decode one graph6 line (graphs with fewer than 63 vertices).
pub fn graph6(line: &str) -> (usize, Vec<(usize, usize, f64)>) {
    let bytes: Vec<u8> = line.trim().bytes().map(|b| b - 63).collect();
    let n = bytes[0] as usize;
    let bits = bytes[1..].iter().flat_map(|&b| (0..6).rev().map(move |k| (b >> k) & 1 == 1));
    let pairs = (1..n).flat_map(|j| (0..j).map(move |i| (i, j)));
    let edges = pairs.zip(bits).filter(|(_, b)| *b).map(|((i, j), _)| (i, j, 1.0)).collect();
    (n, edges)
}

/// Fraction of vertices placed consistently with a two-block truth, best injective matching.
pub fn two_block_agreement(truth: &[u32], found: &[u32]) -> f64 {
    let k = *found.iter().max().unwrap() as usize;
    let mut overlap = vec![[0usize; 2]; k + 1];
    for (&t, &f) in truth.iter().zip(found) {
        overlap[f as usize][t as usize] += 1;
    }
    let mut best = 0;
    for a in 1..=k {
        for b in 1..=k {
            if a != b {
                best = best.max(overlap[a][0] + overlap[b][1]);
            }
        }
        best = best.max(overlap[a][0]).max(overlap[a][1]);
    }
    best as f64 / truth.len() as f64
}
