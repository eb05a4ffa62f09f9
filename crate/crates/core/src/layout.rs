//! Two-dimensional layouts: stress majorization over technological distance and
//! a Kamada-Kawai spring embedder for thresholded graphs.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{stress_of, SimilarityMatrix};
use crate::community::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mds,
    KamadaKawai,
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mds" => Ok(Algorithm::Mds),
            "kamada_kawai" | "kk" => Ok(Algorithm::KamadaKawai),
            _ => Err(Error::Config(format!("unknown layout algorithm {s:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Mds => "mds",
            Algorithm::KamadaKawai => "kamada_kawai",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Relative stress change for majorization; gradient norm for the spring embedder.
    pub tolerance: f64,
    pub algorithm: Algorithm,
    /// Independent random starts; the lowest final stress wins.
    pub restarts: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            seed: 13,
            max_iters: 2000,
            tolerance: 1e-7,
            algorithm: Algorithm::Mds,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Centered, unit RMS radius; isolated points sit on an outer ring.
    pub positions: Vec<(f64, f64)>,
    /// Kruskal stress of the unscaled solution.
    pub stress: f64,
    /// Factor applied to the unscaled solution.
    pub scale: f64,
    /// Kruskal stress after each majorization step of the winning start.
    pub history: Vec<f64>,
    pub degenerate: bool,
    /// Points that were placed on the ring instead of being laid out.
    pub ringed: Vec<bool>,
}

fn random_init(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Guttman-transform iterations from `x`. Returns the final configuration and the
/// Kruskal stress before the first and after every step.
pub fn smacof(delta: &[f64], mut x: Vec<(f64, f64)>, max_iters: usize, tol: f64) -> (Vec<(f64, f64)>, Vec<f64>) {
    let n = x.len();
    let all = vec![true; n];
    let mut history = vec![stress_of(&x, delta, &all)];
    for _ in 0..max_iters {
        let next: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut sx, mut sy) = (0.0, 0.0);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let (dx, dy) = (x[i].0 - x[j].0, x[i].1 - x[j].1);
                    let dist = (dx * dx + dy * dy).sqrt();
                    let b = if dist > 0.0 { delta[i * n + j] / dist } else { 0.0 };
                    sx += b * dx;
                    sy += b * dy;
                }
                (sx / n as f64, sy / n as f64)
            })
            .collect();
        // B(X)X / n; the centroid term vanishes because B has zero row sums.
        x = next;
        let s = stress_of(&x, delta, &all);
        let prev = *history.last().unwrap();
        history.push(s);
        if s < 1e-14 || (prev - s).abs() <= tol * prev {
            break;
        }
    }
    (x, history)
}

fn normalize(points: &mut [(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let rms = (points
        .iter()
        .map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    for p in points.iter_mut() {
        *p = (clean((p.0 - cx) * scale), clean((p.1 - cy) * scale));
    }
    scale
}

fn clean(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Place the included points at their laid-out positions and the rest on a ring.
fn assemble(sub: &[(f64, f64)], include: &[bool]) -> Vec<(f64, f64)> {
    let max_r = sub
        .iter()
        .map(|p| (p.0 * p.0 + p.1 * p.1).sqrt())
        .fold(0.0, f64::max);
    let radius = 1.1 * max_r.max(1.0);
    let outside = include.iter().filter(|&&b| !b).count();
    let (mut k, mut r) = (0, 0);
    include
        .iter()
        .map(|&inc| {
            if inc {
                k += 1;
                sub[k - 1]
            } else {
                let a = 2.0 * std::f64::consts::PI * r as f64 / outside as f64;
                r += 1;
                (clean(radius * a.cos()), clean(radius * a.sin()))
            }
        })
        .collect()
}

/// Stress majorization on d = 1 - cos over all non-isolated classes.
pub fn layout_mds(sim: &SimilarityMatrix, config: &LayoutConfig) -> Result<Layout> {
    let include: Vec<bool> = sim.isolated.iter().map(|b| !b).collect();
    let idx: Vec<usize> = (0..sim.len()).filter(|&i| include[i]).collect();
    let m = idx.len();
    if m < 2 {
        return Err(Error::TooFewClasses(m));
    }
    let mut delta = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            delta[a * m + b] = sim.distance(i, j);
        }
    }
    let mut layout = layout_distances(&delta, m, config)?;
    layout.positions = assemble(&layout.positions, &include);
    layout.ringed = include.iter().map(|b| !b).collect();
    Ok(layout)
}

/// Stress majorization on an arbitrary symmetric distance matrix.
pub fn layout_distances(delta: &[f64], n: usize, config: &LayoutConfig) -> Result<Layout> {
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    if delta.iter().all(|&d| d == 0.0) {
        log::warn!("all pairwise distances are zero; degenerate layout");
        return Ok(Layout {
            positions: vec![(0.0, 0.0); n],
            stress: 0.0,
            scale: 1.0,
            history: vec![0.0],
            degenerate: true,
            ringed: vec![false; n],
        });
    }
    let mut best: Option<(Vec<(f64, f64)>, Vec<f64>)> = None;
    for r in 0..config.restarts.max(1) {
        let init = random_init(n, config.seed.wrapping_add(r as u64));
        let (x, h) = smacof(delta, init, config.max_iters, config.tolerance);
        let better = match &best {
            None => true,
            Some((_, bh)) => h.last() < bh.last(),
        };
        if better {
            best = Some((x, h));
        }
    }
    let (mut x, history) = best.unwrap();
    let stress = *history.last().unwrap();
    let scale = normalize(&mut x);
    Ok(Layout {
        positions: x,
        stress,
        scale,
        history,
        degenerate: false,
        ringed: vec![false; n],
    })
}

fn hop_distances(graph: &Graph, members: &[usize]) -> Vec<f64> {
    let m = members.len();
    let mut local = vec![usize::MAX; graph.n];
    for (k, &v) in members.iter().enumerate() {
        local[v] = k;
    }
    let adj = graph.adjacency();
    let mut d = vec![f64::INFINITY; m * m];
    for (s, &src) in members.iter().enumerate() {
        let mut queue = std::collections::VecDeque::from([src]);
        d[s * m + s] = 0.0;
        while let Some(u) = queue.pop_front() {
            let du = d[s * m + local[u]];
            for &(v, _) in &adj[u] {
                let lv = local[v];
                if d[s * m + lv].is_infinite() {
                    d[s * m + lv] = du + 1.0;
                    queue.push_back(v);
                }
            }
        }
    }
    d
}

/// Kamada-Kawai on the largest component with unit edge length; other vertices on a ring.
pub fn layout_spring(graph: &Graph, config: &LayoutConfig) -> Result<Layout> {
    let members = graph.largest_component();
    let m = members.len();
    if m < 2 {
        return Err(Error::TooFewClasses(m));
    }
    let l = hop_distances(graph, &members);
    let k: Vec<f64> = l
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / (d * d) } else { 0.0 })
        .collect();
    let mut x = random_init(m, config.seed);
    let grad = |x: &[(f64, f64)], i: usize| {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..m {
            if j == i {
                continue;
            }
            let (dx, dy) = (x[i].0 - x[j].0, x[i].1 - x[j].1);
            let dist = (dx * dx + dy * dy).sqrt().max(1e-12);
            let kk = k[i * m + j];
            gx += kk * (dx - l[i * m + j] * dx / dist);
            gy += kk * (dy - l[i * m + j] * dy / dist);
        }
        (gx, gy)
    };
    let tol = config.tolerance;
    let mut steps = 0;
    let budget = config.max_iters * m;
    let mut history = Vec::new();
    loop {
        let norms: Vec<f64> = (0..m)
            .map(|i| {
                let g = grad(&x, i);
                (g.0 * g.0 + g.1 * g.1).sqrt()
            })
            .collect();
        let (worst, &gmax) = norms
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        history.push(gmax);
        if gmax < tol || steps >= budget {
            break;
        }
        let i = worst;
        // Newton steps on vertex i until its own gradient is small.
        for _ in 0..50 {
            let (gx, gy) = grad(&x, i);
            if (gx * gx + gy * gy).sqrt() < tol {
                break;
            }
            let (mut hxx, mut hyy, mut hxy) = (0.0, 0.0, 0.0);
            for j in 0..m {
                if j == i {
                    continue;
                }
                let (dx, dy) = (x[i].0 - x[j].0, x[i].1 - x[j].1);
                let d2 = (dx * dx + dy * dy).max(1e-24);
                let d3 = d2 * d2.sqrt();
                let kk = k[i * m + j];
                let lij = l[i * m + j];
                hxx += kk * (1.0 - lij * dy * dy / d3);
                hyy += kk * (1.0 - lij * dx * dx / d3);
                hxy += kk * lij * dx * dy / d3;
            }
            let det = hxx * hyy - hxy * hxy;
            if det.abs() < 1e-18 {
                break;
            }
            let sx = (-gx * hyy + gy * hxy) / det;
            let sy = (gx * hxy - gy * hxx) / det;
            x[i].0 += sx;
            x[i].1 += sy;
            steps += 1;
        }
    }
    let include = vec![true; m];
    let stress = stress_of(&x, &l, &include);
    let scale = normalize(&mut x);
    let mut in_comp = vec![false; graph.n];
    for &v in &members {
        in_comp[v] = true;
    }
    let positions = assemble(&x, &in_comp);
    Ok(Layout {
        positions,
        stress,
        scale,
        history,
        degenerate: false,
        ringed: in_comp.iter().map(|b| !b).collect(),
    })
}
