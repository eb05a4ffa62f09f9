//! Thresholded cosine networks and Louvain modularity clustering.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::SimilarityMatrix;

/// Weighted undirected graph; edges stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    pub fn from_edges<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, edges: I) -> Graph {
        let mut e: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .filter(|&(i, j, _)| i != j)
            .map(|(i, j, w)| (i.min(j), i.max(j), w))
            .collect();
        e.sort_by_key(|a| (a.0, a.1));
        Graph { n, edges: e }
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for a in &mut adj {
            a.sort_by_key(|x| x.0);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut k = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            k[i] += w;
            k[j] += w;
        }
        k
    }

    /// Connected components, largest first; ties go to the one holding the smaller vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = vec![];
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    pub fn largest_component(&self) -> Vec<usize> {
        self.components().into_iter().next().unwrap_or_default()
    }

    pub fn census(&self) -> ComponentCensus {
        let comps = self.components();
        ComponentCensus {
            sizes: comps.iter().map(Vec::len).collect(),
            largest: comps.into_iter().next().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentCensus {
    /// Component sizes, descending.
    pub sizes: Vec<usize>,
    pub largest: Vec<usize>,
}

impl ComponentCensus {
    pub fn table(&self, labels: &[String]) -> String {
        let mut s = String::from("component\tsize\n");
        for (i, n) in self.sizes.iter().enumerate() {
            s.push_str(&format!("{}\t{}\n", i + 1, n));
        }
        let names: Vec<&str> = self.largest.iter().map(|&v| labels[v].as_str()).collect();
        s.push_str(&format!("largest\t{}\n", names.join(" ")));
        s
    }
}

/// Edges where cos > tau, i != j.
pub fn threshold_graph(sim: &SimilarityMatrix, tau: f64) -> Graph {
    let n = sim.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let c = sim.cos(i, j);
            if c > tau {
                edges.push((i, j, c));
            }
        }
    }
    Graph { n, edges }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Cluster id per vertex, 1-based and contiguous.
    pub membership: Vec<u32>,
    pub q: f64,
    pub clusters: usize,
}

/// Weighted Newman modularity of an arbitrary labelling.
pub fn modularity(graph: &Graph, membership: &[u32]) -> f64 {
    let k = graph.degrees();
    let m2: f64 = k.iter().sum();
    if m2 == 0.0 {
        return 0.0;
    }
    let nc = membership.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut inside = vec![0.0; nc];
    let mut tot = vec![0.0; nc];
    for &(i, j, w) in &graph.edges {
        if membership[i] == membership[j] {
            inside[membership[i] as usize] += 2.0 * w;
        }
    }
    for (v, &kv) in k.iter().enumerate() {
        tot[membership[v] as usize] += kv;
    }
    inside
        .iter()
        .zip(&tot)
        .map(|(&a, &t)| a / m2 - (t / m2) * (t / m2))
        .sum()
}

struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|x| x.1).sum::<f64>() + 2.0 * self.loops[i]
    }
}

/// Local moving phase from a starting assignment. Returns community per node
/// and whether anything moved.
fn local_moves(level: &Level, m2: f64, rng: &mut ChaCha8Rng, mut comm: Vec<usize>) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let k: Vec<f64> = (0..n).map(|i| level.degree(i)).collect();
    let slots = comm.iter().copied().max().map_or(0, |c| c + 1).max(n);
    let mut tot = vec![0.0; slots];
    for (i, &c) in comm.iter().enumerate() {
        tot[c] += k[i];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut link = vec![0.0; slots];
    let mut is_touched = vec![false; slots];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let ci = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if !is_touched[c] {
                    is_touched[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[ci] -= k[i];
            let gain = |c: usize, link: &[f64]| link[c] - tot[c] * k[i] / m2;
            let mut best = ci;
            let mut best_gain = gain(ci, &link);
            for &c in &touched {
                let g = gain(c, &link);
                if g > best_gain + 1e-12 {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += k[i];
            if best != ci {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                is_touched[c] = false;
            }
            link[ci] = 0.0;
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

fn aggregate(level: &Level, comm: &[usize]) -> (Level, Vec<usize>) {
    let mut relabel = vec![usize::MAX; comm.iter().copied().max().map_or(0, |c| c + 1)];
    let mut next = 0;
    for &c in comm {
        if relabel[c] == usize::MAX {
            relabel[c] = next;
            next += 1;
        }
    }
    let node_comm: Vec<usize> = comm.iter().map(|&c| relabel[c]).collect();
    let mut loops = vec![0.0; next];
    let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); next];
    for (i, nbrs) in level.adj.iter().enumerate() {
        let ci = node_comm[i];
        loops[ci] += level.loops[i];
        for &(j, w) in nbrs {
            let cj = node_comm[j];
            if ci == cj {
                // each internal edge is seen from both ends
                loops[ci] += w / 2.0;
            } else {
                *maps[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    let adj = maps.into_iter().map(|m| m.into_iter().collect()).collect();
    (Level { adj, loops }, node_comm)
}

/// Repeated local moving and aggregation starting from `assignment` on the base level.
fn multilevel(base: &Level, m2: f64, rng: &mut ChaCha8Rng, mut assignment: Vec<usize>) -> (Vec<usize>, bool) {
    let (comm, mut changed) = local_moves(base, m2, rng, assignment);
    assignment = comm;
    let (mut level, node_comm) = aggregate(base, &assignment);
    assignment = node_comm;
    loop {
        let n = level.adj.len();
        let (comm, moved) = local_moves(&level, m2, rng, (0..n).collect());
        if !moved {
            break;
        }
        changed = true;
        let (next, node_comm) = aggregate(&level, &comm);
        for a in assignment.iter_mut() {
            *a = node_comm[*a];
        }
        if next.adj.len() == n {
            break;
        }
        level = next;
    }
    (assignment, changed)
}

/// Best two-way split of one community: leading eigenvector of its modularity
/// matrix, then single-vertex flips. Returns the side per member when the split
/// raises modularity.
fn bisect(base: &Level, k: &[f64], m2: f64, members: &[usize], rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
    let n = members.len();
    if n < 2 {
        return None;
    }
    let mut local = vec![usize::MAX; base.adj.len()];
    for (a, &v) in members.iter().enumerate() {
        local[v] = a;
    }
    let adj: Vec<Vec<(usize, f64)>> = members
        .iter()
        .map(|&v| {
            base.adj[v]
                .iter()
                .filter(|(j, _)| local[*j] != usize::MAX)
                .map(|&(j, w)| (local[j], w))
                .collect()
        })
        .collect();
    let kc: Vec<f64> = members.iter().map(|&v| k[v]).collect();
    let k_total: f64 = kc.iter().sum();
    // diagonal of the community-restricted modularity matrix, self-loops cancel out
    let diag: Vec<f64> = (0..n)
        .map(|a| {
            let inner: f64 = adj[a].iter().map(|x| x.1).sum();
            -kc[a] * kc[a] / m2 - (inner - kc[a] * k_total / m2)
        })
        .collect();
    // off-diagonal product: Σ_{b≠a} (A_ab - k_a k_b / m2) x_b
    let offdiag = |x: &[f64], out: &mut [f64]| {
        let kx: f64 = kc.iter().zip(x).map(|(a, b)| a * b).sum();
        for a in 0..n {
            let ax: f64 = adj[a].iter().map(|&(b, w)| w * x[b]).sum();
            out[a] = ax - kc[a] * (kx - kc[a] * x[a]) / m2;
        }
    };
    let shift = (0..n)
        .map(|a| adj[a].iter().map(|x| x.1).sum::<f64>() + kc[a] * k_total / m2 + diag[a].abs())
        .fold(0.0, f64::max);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    for _ in 0..200 {
        offdiag(&x, &mut y);
        for a in 0..n {
            y[a] += (diag[a] + shift) * x[a];
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let mut delta = 0.0f64;
        for a in 0..n {
            let v = y[a] / norm;
            delta = delta.max((v - x[a]).abs());
            x[a] = v;
        }
        if delta < 1e-6 {
            break;
        }
    }
    let mut s: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
    // value(s) = Σ_ab B_ab s_a s_b over the restricted matrix, g = offdiagonal part of B s
    let value = |s: &[f64], g: &[f64]| (0..n).map(|a| s[a] * g[a] + diag[a]).sum::<f64>();
    let mut g = vec![0.0; n];
    offdiag(&s, &mut g);
    let mut current = value(&s, &g);
    loop {
        let start = current;
        let mut flipped = vec![false; n];
        let mut best = (current, 0usize);
        let mut history = Vec::with_capacity(n);
        for step in 0..n {
            let mut pick = None;
            for a in (0..n).filter(|&a| !flipped[a]) {
                let d = -4.0 * s[a] * g[a];
                if pick.is_none_or(|(_, bd)| d > bd) {
                    pick = Some((a, d));
                }
            }
            let (a, d) = pick.unwrap();
            flipped[a] = true;
            let old = s[a];
            s[a] = -old;
            current += d;
            for &(b, w) in &adj[a] {
                g[b] -= 2.0 * old * w;
            }
            for b in (0..n).filter(|&b| b != a) {
                g[b] += 2.0 * old * kc[a] * kc[b] / m2;
            }
            history.push(a);
            if current > best.0 + 1e-12 {
                best = (current, step + 1);
            }
        }
        // undo the flips past the best prefix
        for &a in history[best.1..].iter().rev() {
            let old = s[a];
            s[a] = -old;
            for &(b, w) in &adj[a] {
                g[b] -= 2.0 * old * w;
            }
            for b in (0..n).filter(|&b| b != a) {
                g[b] += 2.0 * old * kc[a] * kc[b] / m2;
            }
        }
        current = best.0;
        if current <= start + 1e-12 {
            break;
        }
    }
    // modularity change of the split is value / (2 * m2)
    let plus = s.iter().filter(|&&v| v > 0.0).count();
    (current / (2.0 * m2) > 1e-10 && plus > 0 && plus < n).then(|| s.iter().map(|&v| v > 0.0).collect())
}

/// Alternates community splitting, moves, merges and exchanges until modularity stops rising.
fn refine(base: &Level, m2: f64, rng: &mut ChaCha8Rng, mut assignment: Vec<usize>) -> Vec<usize> {
    let k: Vec<f64> = (0..base.adj.len()).map(|i| base.degree(i)).collect();
    for _ in 0..64 {
        let mut changed = false;
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (v, &c) in assignment.iter().enumerate() {
            groups.entry(c).or_default().push(v);
        }
        let mut fresh = assignment.len();
        for members in groups.values() {
            if let Some(side) = bisect(base, &k, m2, members, rng) {
                for (&v, &up) in members.iter().zip(&side) {
                    if up {
                        assignment[v] = fresh;
                    }
                }
                fresh += 1;
                changed = true;
            }
        }
        let (next, moved) = multilevel(base, m2, rng, compact(&assignment));
        let (next, exchanged) = exchange(base, m2, next);
        assignment = next;
        if !changed && !moved && !exchanged {
            break;
        }
    }
    assignment
}

/// Multiway vertex-exchange passes: move each vertex once to its best community,
/// losses allowed, then keep the best prefix of the sequence.
fn exchange(base: &Level, m2: f64, assignment: Vec<usize>) -> (Vec<usize>, bool) {
    let n = base.adj.len();
    // dense per-vertex link table; skipped on very large graphs
    if !(2..=4096).contains(&n) {
        return (assignment, false);
    }
    let k: Vec<f64> = (0..n).map(|i| base.degree(i)).collect();
    let mut comm = compact(&assignment);
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    let mut link = vec![vec![0.0; n]; n];
    for v in 0..n {
        tot[comm[v]] += k[v];
        size[comm[v]] += 1;
        for &(u, w) in &base.adj[v] {
            link[v][comm[u]] += w;
        }
    }
    let mut improved = false;
    for _ in 0..32 {
        let mut locked = vec![false; n];
        let mut history: Vec<(usize, usize)> = Vec::with_capacity(n);
        let (mut gain, mut best) = (0.0, (0.0, 0usize));
        for step in 0..n {
            let active: Vec<usize> = (0..n).filter(|&c| size[c] > 0).collect();
            let empty = (0..n).find(|&c| size[c] == 0);
            let mut pick: Option<(usize, usize, f64)> = None;
            for v in (0..n).filter(|&v| !locked[v]) {
                let a = comm[v];
                for &b in active.iter().chain(empty.iter()) {
                    if b == a || (size[a] == 1 && size[b] == 0) {
                        continue;
                    }
                    let d = 2.0 * (link[v][b] - link[v][a]) / m2 + 2.0 * k[v] * (tot[a] - tot[b] - k[v]) / (m2 * m2);
                    if pick.is_none_or(|p| d > p.2 + 1e-15) {
                        pick = Some((v, b, d));
                    }
                }
            }
            let Some((v, b, d)) = pick else { break };
            let a = comm[v];
            move_vertex(base, &k, &mut comm, &mut tot, &mut size, &mut link, v, b);
            locked[v] = true;
            history.push((v, a));
            gain += d;
            if gain > best.0 + 1e-12 {
                best = (gain, step + 1);
            }
        }
        for &(v, a) in history[best.1..].iter().rev() {
            move_vertex(base, &k, &mut comm, &mut tot, &mut size, &mut link, v, a);
        }
        if best.1 == 0 {
            break;
        }
        improved = true;
    }
    (comm, improved)
}

#[allow(clippy::too_many_arguments)]
fn move_vertex(
    base: &Level,
    k: &[f64],
    comm: &mut [usize],
    tot: &mut [f64],
    size: &mut [usize],
    link: &mut [Vec<f64>],
    v: usize,
    to: usize,
) {
    let from = comm[v];
    comm[v] = to;
    tot[from] -= k[v];
    tot[to] += k[v];
    size[from] -= 1;
    size[to] += 1;
    for &(u, w) in &base.adj[v] {
        link[u][from] -= w;
        link[u][to] += w;
    }
}

fn compact(assignment: &[usize]) -> Vec<usize> {
    let mut relabel = std::collections::HashMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = relabel.len();
            *relabel.entry(c).or_insert(next)
        })
        .collect()
}

/// One trial; odd trials start from a random coarse partition instead of singletons.
fn louvain_once(graph: &Graph, seed: u64, trial: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m2: f64 = graph.degrees().iter().sum();
    if m2 == 0.0 {
        return (0..graph.n).collect();
    }
    let base = Level {
        adj: graph.adjacency(),
        loops: vec![0.0; graph.n],
    };
    let start: Vec<usize> = if trial % 2 == 1 {
        let labels = (graph.n / 4).max(2);
        (0..graph.n).map(|_| rng.random_range(0..labels)).collect()
    } else {
        (0..graph.n).collect()
    };
    let (assignment, _) = multilevel(&base, m2, &mut rng, compact(&start));
    let mut best = refine(&base, m2, &mut rng, assignment);
    let mut best_q = level_modularity(&base, m2, &best);
    let mut idle = 0;
    while idle < PATIENCE {
        let kicked = perturb(&base, &mut rng, &best);
        let candidate = refine(&base, m2, &mut rng, kicked);
        let q = level_modularity(&base, m2, &candidate);
        if q > best_q + 1e-12 {
            best = candidate;
            best_q = q;
            idle = 0;
        } else {
            idle += 1;
        }
    }
    best
}

/// Perturbations without improvement after which a trial stops.
const PATIENCE: usize = 32;

/// Kicks the partition out of its local optimum: random vertices go to a
/// neighbour's community or a new one, a community splits at random, or two merge.
fn perturb(base: &Level, rng: &mut ChaCha8Rng, assignment: &[usize]) -> Vec<usize> {
    let n = assignment.len();
    let mut out = assignment.to_vec();
    let communities = out.iter().copied().max().map_or(0, |c| c + 1);
    match rng.random_range(0..3) {
        0 => {
            let c = out[rng.random_range(0..n)];
            for x in out.iter_mut().filter(|x| **x == c) {
                if rng.random_bool(0.5) {
                    *x = n;
                }
            }
        }
        1 if communities > 1 => {
            let a = rng.random_range(0..communities);
            let b = rng.random_range(0..communities);
            for x in out.iter_mut().filter(|x| **x == b) {
                *x = a;
            }
        }
        _ => {
            let mut fresh = n;
            for _ in 0..rng.random_range(1..=(n / 8).max(2)) {
                let v = rng.random_range(0..n);
                let nbrs = &base.adj[v];
                if nbrs.is_empty() || rng.random_bool(0.25) {
                    out[v] = fresh;
                    fresh += 1;
                } else {
                    out[v] = out[nbrs[rng.random_range(0..nbrs.len())].0];
                }
            }
        }
    }
    compact(&out)
}

fn level_modularity(base: &Level, m2: f64, assignment: &[usize]) -> f64 {
    let mut inside = vec![0.0; assignment.len()];
    let mut tot = vec![0.0; assignment.len()];
    for (v, nbrs) in base.adj.iter().enumerate() {
        let c = assignment[v];
        tot[c] += base.degree(v);
        inside[c] += nbrs.iter().filter(|(u, _)| assignment[*u] == c).map(|x| x.1).sum::<f64>();
    }
    inside.iter().zip(&tot).map(|(a, t)| a / m2 - (t / m2) * (t / m2)).sum()
}

fn canonical_labels(graph: &Graph, assignment: &[usize]) -> Vec<u32> {
    let n = graph.n;
    let mut incident = vec![0usize; n];
    for &(i, j, _) in &graph.edges {
        incident[i] += 1;
        incident[j] += 1;
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut isolated = Vec::new();
    for v in 0..n {
        if incident[v] == 0 {
            isolated.push(v);
        } else {
            groups.entry(assignment[v]).or_default().push(v);
        }
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters.extend(isolated.into_iter().map(|v| vec![v]));
    let mut membership = vec![0u32; n];
    for (c, members) in clusters.iter().enumerate() {
        for &v in members {
            membership[v] = c as u32 + 1;
        }
    }
    membership
}

/// Randomized starts tried by [`louvain`]; the highest modularity wins.
pub const DEFAULT_TRIALS: usize = 8;

pub fn louvain(graph: &Graph, seed: u64) -> Partition {
    louvain_with(graph, seed, DEFAULT_TRIALS)
}

/// Louvain with `trials` seed-shuffled runs derived from `seed`.
pub fn louvain_with(graph: &Graph, seed: u64, trials: usize) -> Partition {
    let mut best: Option<Partition> = None;
    for t in 0..trials.max(1) {
        let assignment = louvain_once(graph, seed.wrapping_add(t as u64), t);
        let membership = canonical_labels(graph, &assignment);
        let q = modularity(graph, &membership);
        if best.as_ref().is_none_or(|b| q > b.q + 1e-12) {
            let clusters = membership.iter().copied().max().unwrap_or(0) as usize;
            best = Some(Partition {
                membership,
                q,
                clusters,
            });
        }
    }
    best.unwrap()
}
