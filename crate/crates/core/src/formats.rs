//! VOSviewer map files and Pajek network, vector, partition and project files.

use std::io::Write;
use std::path::Path;

use crate::community::{Graph, Partition};
use crate::error::{Error, Result};
use crate::model::{BaseMap, Overlay};

pub const LABEL_MAX: usize = 75;
const ELLIPSIS: &str = "...";

/// Cut to at most `max` characters at the right-most space, then append "...".
/// Without a usable space the cut is hard at `max`. Already-truncated labels pass through.
pub fn truncate_label(heading: &str, max: usize) -> String {
    let len = heading.chars().count();
    if len <= max {
        return heading.to_string();
    }
    if heading.ends_with(ELLIPSIS) && len - ELLIPSIS.len() <= max {
        return heading.to_string();
    }
    let head: String = heading.chars().take(max).collect();
    let cut = match head.rfind(' ').map(|i| head[..i].trim_end()) {
        Some(body) if !body.is_empty() => body,
        _ => &head[..],
    };
    format!("{cut}{ELLIPSIS}")
}

/// `%.4f` without negative zero.
pub fn fixed4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VosEntry {
    pub id: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub cluster: u32,
    pub weight: f64,
    pub normalized_weight: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VosOptions {
    pub hide_empty_labels: bool,
}

pub const VOS_HEADER: &str = "id,label,x,y,cluster,weight,normalized weight";

/// Scale positive weights to mean 1; zeros stay zero.
pub fn normalize_weights(w: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return vec![0.0; w.len()];
    }
    let mean = pos.iter().sum::<f64>() / pos.len() as f64;
    w.iter().map(|&v| if v > 0.0 { v / mean } else { 0.0 }).collect()
}

/// Map rows for a basemap. With an overlay, weight = ln(1 + fractional count);
/// without one, weight = ln(1 + citing row sum).
pub fn vos_entries(base: &BaseMap, overlay: Option<&Overlay>, opts: VosOptions) -> Vec<VosEntry> {
    let raw: Vec<f64> = base
        .entries
        .iter()
        .map(|e| match overlay {
            Some(o) => o.weights.get(&e.symbol).copied().unwrap_or(0.0).ln_1p(),
            None => (e.citations as f64).ln_1p(),
        })
        .collect();
    let norm = normalize_weights(&raw);
    base.entries
        .iter()
        .enumerate()
        .map(|(i, e)| VosEntry {
            id: i + 1,
            label: if opts.hide_empty_labels && raw[i] == 0.0 {
                String::new()
            } else {
                e.label.clone()
            },
            x: e.x,
            y: e.y,
            cluster: e.cluster,
            weight: raw[i],
            normalized_weight: norm[i],
        })
        .collect()
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn format_vos(entries: &[VosEntry]) -> String {
    let mut s = String::from(VOS_HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.id,
            csv_quote(&e.label),
            fixed4(e.x),
            fixed4(e.y),
            e.cluster,
            fixed4(e.weight),
            fixed4(e.normalized_weight)
        ));
    }
    s
}

pub fn emit_vos_map(base: &BaseMap, overlay: Option<&Overlay>, opts: VosOptions) -> String {
    format_vos(&vos_entries(base, overlay, opts))
}

pub fn parse_vos(text: &str) -> Result<Vec<VosEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Syntax {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != VOS_HEADER {
        return Err(Error::Syntax {
            line: 1,
            reason: "unexpected map file header".into(),
        });
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let bad = |reason: String| Error::Syntax { line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 7 {
            return Err(bad(format!("expected 7 columns, got {}", row.len())));
        }
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &row[i])));
        out.push(VosEntry {
            id: row[0].parse().map_err(|_| bad("bad id".into()))?,
            label: row[1].to_string(),
            x: num(2)?,
            y: num(3)?,
            cluster: row[4].parse().map_err(|_| bad("bad cluster".into()))?,
            weight: num(5)?,
            normalized_weight: num(6)?,
        });
    }
    Ok(out)
}

// ---- Pajek ----

const CRLF: &str = "\r\n";

#[derive(Debug, Clone, PartialEq)]
pub struct PajekNetwork {
    pub name: Option<String>,
    pub labels: Vec<String>,
    pub coords: Option<Vec<(f64, f64)>>,
    /// 0-based endpoints.
    pub edges: Vec<(usize, usize, f64)>,
}

impl PajekNetwork {
    pub fn graph(&self) -> Graph {
        Graph::from_edges(self.labels.len(), self.edges.iter().copied())
    }
}

fn pajek_label(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'"))
}

fn write_network_body(s: &mut String, net: &PajekNetwork) {
    s.push_str(&format!("*Vertices {}{CRLF}", net.labels.len()));
    for (i, l) in net.labels.iter().enumerate() {
        match &net.coords {
            Some(c) => s.push_str(&format!(
                "{} {} {} {}{CRLF}",
                i + 1,
                pajek_label(l),
                fixed4(c[i].0),
                fixed4(c[i].1)
            )),
            None => s.push_str(&format!("{} {}{CRLF}", i + 1, pajek_label(l))),
        }
    }
    s.push_str(&format!("*Edges{CRLF}"));
    for &(i, j, w) in &net.edges {
        s.push_str(&format!("{} {} {}{CRLF}", i + 1, j + 1, fixed6(w)));
    }
}

pub fn emit_net(net: &PajekNetwork) -> String {
    let mut s = String::new();
    write_network_body(&mut s, net);
    s
}

pub fn emit_vec(values: &[f64], n: usize) -> Result<String> {
    if values.len() != n {
        return Err(Error::LengthMismatch {
            got: values.len(),
            expected: n,
        });
    }
    let mut s = format!("*Vertices {n}{CRLF}");
    for v in values {
        s.push_str(&format!("{v}{CRLF}"));
    }
    Ok(s)
}

pub fn emit_clu(clusters: &[u32], n: usize) -> Result<String> {
    if clusters.len() != n {
        return Err(Error::LengthMismatch {
            got: clusters.len(),
            expected: n,
        });
    }
    let mut s = format!("*Vertices {n}{CRLF}");
    for c in clusters {
        s.push_str(&format!("{c}{CRLF}"));
    }
    Ok(s)
}

/// Affine map into [0,1] with a common scale for both axes.
pub fn unit_square(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    const MARGIN: f64 = 0.05;
    if points.is_empty() {
        return Vec::new();
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0);
    if span <= 0.0 {
        return vec![(0.5, 0.5); points.len()];
    }
    let k = (1.0 - 2.0 * MARGIN) / span;
    let (ox, oy) = (
        MARGIN + (1.0 - 2.0 * MARGIN - k * (x1 - x0)) / 2.0,
        MARGIN + (1.0 - 2.0 * MARGIN - k * (y1 - y0)) / 2.0,
    );
    points
        .iter()
        .map(|&(x, y)| (ox + k * (x - x0), oy + k * (y - y0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PajekProject {
    pub networks: Vec<PajekNetwork>,
    pub partitions: Vec<(String, Vec<u32>)>,
    pub vectors: Vec<(String, Vec<f64>)>,
}

pub fn format_project(p: &PajekProject) -> String {
    let mut s = String::new();
    for net in &p.networks {
        s.push_str(&format!("*Network {}{CRLF}", net.name.as_deref().unwrap_or("network")));
        write_network_body(&mut s, net);
        s.push_str(CRLF);
    }
    for (name, part) in &p.partitions {
        s.push_str(&format!("*Partition {name}{CRLF}"));
        s.push_str(&emit_clu(part, part.len()).unwrap());
        s.push_str(CRLF);
    }
    for (name, v) in &p.vectors {
        s.push_str(&format!("*Vector {name}{CRLF}"));
        s.push_str(&emit_vec(v, v.len()).unwrap());
        s.push_str(CRLF);
    }
    s
}

/// Project bundle: basemap network with cosine edges, the partition, then any vectors.
pub fn emit_pajek_project(
    name: &str,
    base: &BaseMap,
    graph: &Graph,
    partition: &Partition,
    vectors: &[(String, Vec<f64>)],
) -> Result<String> {
    let n = base.entries.len();
    let check = |what, got| {
        if got != n {
            Err(Error::IndexMisalignment {
                what,
                got,
                expected: n,
            })
        } else {
            Ok(())
        }
    };
    check("graph", graph.n)?;
    check("partition", partition.membership.len())?;
    for (_, v) in vectors {
        check("vector", v.len())?;
    }
    let pts: Vec<(f64, f64)> = base.entries.iter().map(|e| (e.x, e.y)).collect();
    let project = PajekProject {
        networks: vec![PajekNetwork {
            name: Some(name.to_string()),
            labels: base.entries.iter().map(|e| e.label.clone()).collect(),
            coords: Some(unit_square(&pts)),
            edges: graph.edges.clone(),
        }],
        partitions: vec![(format!("{name}_clusters"), partition.membership.clone())],
        vectors: vectors.to_vec(),
    };
    Ok(format_project(&project))
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        let items = text
            .split('\n')
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('%'))
            .collect();
        Lines { items, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let x = self.peek();
        self.pos += 1;
        x
    }

    fn last_line(&self) -> usize {
        self.items.last().map(|x| x.0).unwrap_or(0)
    }
}

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        reason: reason.into(),
    }
}

fn keyword(line: &str) -> Option<(String, &str)> {
    let l = line.trim_start();
    let rest = l.strip_prefix('*')?;
    let (kw, arg) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    Some((kw.to_ascii_lowercase(), arg.trim()))
}

fn vertices_count(lines: &mut Lines) -> Result<usize> {
    let (ln, l) = lines.next().ok_or_else(|| syntax(lines.last_line(), "missing *Vertices"))?;
    match keyword(l) {
        Some((kw, arg)) if kw == "vertices" => arg
            .split_whitespace()
            .next()
            .and_then(|a| a.parse().ok())
            .ok_or_else(|| syntax(ln, "bad vertex count")),
        _ => Err(syntax(ln, "expected *Vertices")),
    }
}

fn parse_vertex_line(ln: usize, l: &str, expected: usize) -> Result<(String, Option<(f64, f64)>)> {
    let l = l.trim();
    let (id, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
    if id.parse::<usize>().ok() != Some(expected) {
        return Err(syntax(ln, format!("expected vertex {expected}")));
    }
    let rest = rest.trim_start();
    let (label, tail) = if let Some(r) = rest.strip_prefix('"') {
        let end = r.find('"').ok_or_else(|| syntax(ln, "unterminated label"))?;
        (r[..end].to_string(), &r[end + 1..])
    } else {
        let (a, b) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        (a.to_string(), b)
    };
    let nums: Vec<&str> = tail.split_whitespace().collect();
    let coords = match nums.len() {
        0 => None,
        2 | 3 => {
            let x = nums[0].parse().map_err(|_| syntax(ln, "bad x"))?;
            let y = nums[1].parse().map_err(|_| syntax(ln, "bad y"))?;
            Some((x, y))
        }
        _ => return Err(syntax(ln, "unexpected vertex fields")),
    };
    Ok((label, coords))
}

fn parse_network_body(lines: &mut Lines, name: Option<String>) -> Result<PajekNetwork> {
    let n = vertices_count(lines)?;
    let mut labels = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    while let Some((ln, l)) = lines.peek() {
        if keyword(l).is_some() {
            break;
        }
        lines.next();
        let (label, c) = parse_vertex_line(ln, l, labels.len() + 1)?;
        labels.push(label);
        coords.push(c);
    }
    if labels.len() != n {
        if !labels.is_empty() {
            return Err(syntax(lines.last_line(), "vertex count mismatch"));
        }
        labels = (1..=n).map(|i| i.to_string()).collect();
        coords = vec![None; n];
    }
    let coords = if n > 0 && coords.iter().all(Option::is_some) {
        Some(coords.into_iter().map(Option::unwrap).collect())
    } else if coords.iter().all(Option::is_none) {
        None
    } else {
        return Err(syntax(lines.last_line(), "coordinates on some vertices only"));
    };
    let mut edges = Vec::new();
    while let Some((ln, l)) = lines.peek() {
        match keyword(l) {
            Some((kw, _)) if kw == "edges" || kw == "arcs" => {
                lines.next();
                while let Some((ln, l)) = lines.peek() {
                    if keyword(l).is_some() {
                        break;
                    }
                    lines.next();
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() < 2 {
                        return Err(syntax(ln, "edge needs two endpoints"));
                    }
                    let end = |s: &str| {
                        s.parse::<usize>()
                            .ok()
                            .filter(|&v| v >= 1 && v <= n)
                            .ok_or_else(|| syntax(ln, "bad endpoint"))
                    };
                    let w = match f.get(2) {
                        Some(w) => w.parse().map_err(|_| syntax(ln, "bad weight"))?,
                        None => 1.0,
                    };
                    edges.push((end(f[0])? - 1, end(f[1])? - 1, w));
                }
            }
            Some(_) => break,
            None => return Err(syntax(ln, "unexpected line")),
        }
    }
    Ok(PajekNetwork {
        name,
        labels,
        coords,
        edges,
    })
}

pub fn parse_net(text: &str) -> Result<PajekNetwork> {
    let mut lines = Lines::new(text);
    let mut name = None;
    if let Some((_, l)) = lines.peek() {
        if let Some((kw, arg)) = keyword(l) {
            if kw == "network" {
                name = Some(arg.to_string());
                lines.next();
            }
        }
    }
    let net = parse_network_body(&mut lines, name)?;
    if let Some((ln, _)) = lines.peek() {
        return Err(syntax(ln, "trailing content"));
    }
    Ok(net)
}

fn parse_values<T: std::str::FromStr>(lines: &mut Lines) -> Result<Vec<T>> {
    let n = vertices_count(lines)?;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| syntax(lines.last_line(), "too few values"))?;
        v.push(l.trim().parse().map_err(|_| syntax(ln, format!("bad value {l:?}")))?);
    }
    Ok(v)
}

fn single<T: std::str::FromStr>(text: &str) -> Result<Vec<T>> {
    let mut lines = Lines::new(text);
    let v = parse_values(&mut lines)?;
    if let Some((ln, _)) = lines.peek() {
        return Err(syntax(ln, "trailing content"));
    }
    Ok(v)
}

pub fn parse_vec(text: &str) -> Result<Vec<f64>> {
    single(text)
}

pub fn parse_clu(text: &str) -> Result<Vec<u32>> {
    single(text)
}

pub fn parse_paj(text: &str) -> Result<PajekProject> {
    let mut lines = Lines::new(text);
    let mut p = PajekProject {
        networks: vec![],
        partitions: vec![],
        vectors: vec![],
    };
    while let Some((ln, l)) = lines.next() {
        match keyword(l) {
            Some((kw, arg)) if kw == "network" => {
                p.networks.push(parse_network_body(&mut lines, Some(arg.to_string()))?)
            }
            Some((kw, arg)) if kw == "partition" => {
                p.partitions.push((arg.to_string(), parse_values(&mut lines)?))
            }
            Some((kw, arg)) if kw == "vector" => p.vectors.push((arg.to_string(), parse_values(&mut lines)?)),
            _ => return Err(syntax(ln, "expected *Network, *Partition or *Vector")),
        }
    }
    Ok(p)
}

/// Replace `path` with `contents` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Per-run counts: one row per class and level.
pub fn format_counts(overlays: &[&Overlay]) -> String {
    let mut s = String::from("class,level,patents,fractional_count\n");
    for o in overlays {
        for (c, w) in &o.weights {
            let n = o.patents.get(c).copied().unwrap_or(0);
            s.push_str(&format!("{},{},{},{:.6}\n", c, o.level, n, w));
        }
    }
    s
}
