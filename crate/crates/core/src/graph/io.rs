//! Dataset file formats.
//!
//! * Features, text: a header line `N D`, then `N` lines of `D` whitespace-separated reals.
//! * Features, binary: the 8 magic bytes `DINKFEAT`, little-endian `u64` N and D, then
//!   `N·D` little-endian `f32` values in row-major order.
//! * Edges: one `u v` pair per line, 0-indexed. Lines starting with `#` and blank lines
//!   are ignored. Edges are symmetrized and deduplicated on load; self-loops are dropped.
//! * Labels (and cluster assignments): one non-negative integer per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const BINARY_FEATURES_MAGIC: &[u8; 8] = b"DINKFEAT";

/// Paths of the files that make up one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphFiles {
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path, context: &str) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| Error::format("text", format!("{context}: {e}")))
}

/// Loads and validates a dataset. Binary feature files are recognised by their magic bytes.
pub fn load_graph(
    features_path: &Path,
    edges_path: &Path,
    labels_path: Option<&Path>,
) -> Result<SparseGraph> {
    let features = parse_features(&read_bytes(features_path)?)?;
    let edges = parse_edges(&read_text(edges_path, "edges")?, features.rows())?;
    let labels = match labels_path {
        Some(p) => {
            let labels = parse_labels(&read_text(p, "labels")?)?;
            if labels.len() != features.rows() {
                return Err(Error::shape("label count", features.rows(), labels.len()));
            }
            Some(labels)
        }
        None => None,
    };
    SparseGraph::from_edges(features, &edges, labels)
}

impl GraphFiles {
    pub fn load(&self) -> Result<SparseGraph> {
        load_graph(&self.features, &self.edges, self.labels.as_deref())
    }
}

/// Parses either feature encoding.
pub fn parse_features(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.starts_with(BINARY_FEATURES_MAGIC) {
        parse_features_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::format("features text", e.to_string()))?;
        parse_features_text(text)
    }
}

fn parse_count(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse("features", line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse("features", line, format!("invalid {what} '{tok}'")))
}

pub fn parse_features_text(input: &str) -> Result<DenseMatrix> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse("features", 1, "missing 'N D' header"))?;
    let mut toks = header.split_whitespace();
    let n = parse_count(toks.next(), header_line, "node count")?;
    let d = parse_count(toks.next(), header_line, "feature dimension")?;
    if toks.next().is_some() {
        return Err(Error::parse(
            "features",
            header_line,
            "header must be 'N D'",
        ));
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| Error::parse("features", header_line, "N·D overflows"))?;
    let mut data = Vec::with_capacity(total.min(input.len()));
    let mut rows = 0;
    for (line_no, line) in lines {
        if rows == n {
            return Err(Error::parse(
                "features",
                line_no,
                format!("more than {n} rows"),
            ));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse("features", line_no, format!("invalid real '{tok}'")))?;
            if !v.is_finite() {
                return Err(Error::parse("features", line_no, "non-finite value"));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(Error::parse(
                "features",
                line_no,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::shape("feature rows", n, rows));
    }
    DenseMatrix::from_vec(n, d, data)
}

pub fn parse_features_binary(bytes: &[u8]) -> Result<DenseMatrix> {
    let body = bytes
        .strip_prefix(BINARY_FEATURES_MAGIC.as_slice())
        .ok_or_else(|| Error::format("binary features", "bad magic"))?;
    if body.len() < 16 {
        return Err(Error::format("binary features", "truncated header"));
    }
    let n = u64::from_le_bytes(body[0..8].try_into().unwrap());
    let d = u64::from_le_bytes(body[8..16].try_into().unwrap());
    let payload = &body[16..];
    if d == 0 && n > 0 {
        return Err(Error::format("binary features", "zero feature dimension"));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::format("binary features", "N·D overflows"))?;
    if payload.len() as u64 != expected {
        return Err(Error::format(
            "binary features",
            format!(
                "expected {expected} payload bytes for {n}x{d}, found {}",
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            "binary features",
            format!("non-finite value at entry {i}"),
        ));
    }
    DenseMatrix::from_vec(n as usize, d as usize, data)
}

/// Parses an edge list, checking every endpoint against `num_nodes`.
pub fn parse_edges(input: &str, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let mut endpoint = || -> Result<usize> {
            let tok = toks
                .next()
                .ok_or_else(|| Error::parse("edges", line_no, "expected 'u v'"))?;
            let v: u64 = tok
                .parse()
                .map_err(|_| Error::parse("edges", line_no, format!("invalid node id '{tok}'")))?;
            if v >= num_nodes as u64 {
                return Err(Error::Range {
                    context: format!("edges line {line_no}"),
                    index: v,
                    limit: num_nodes as u64,
                });
            }
            Ok(v as usize)
        };
        let u = endpoint()?;
        let v = endpoint()?;
        if toks.next().is_some() {
            return Err(Error::parse("edges", line_no, "expected exactly two ids"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// One non-negative integer per line; blank lines are skipped.
pub fn parse_labels(input: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: u32 = line
            .parse()
            .map_err(|_| Error::parse("labels", i + 1, format!("invalid label '{line}'")))?;
        out.push(v as usize);
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&read_text(path, "labels")?)
}

pub fn write_features_text<W: Write>(mut w: W, x: &DenseMatrix) -> std::io::Result<()> {
    writeln!(w, "{} {}", x.rows(), x.cols())?;
    for row in x.row_iter() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_features_binary<W: Write>(mut w: W, x: &DenseMatrix) -> std::io::Result<()> {
    w.write_all(BINARY_FEATURES_MAGIC)?;
    w.write_all(&(x.rows() as u64).to_le_bytes())?;
    w.write_all(&(x.cols() as u64).to_le_bytes())?;
    for &v in x.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(mut w: W, g: &SparseGraph) -> std::io::Result<()> {
    for (u, v) in g.undirected_edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(mut w: W, labels: &[usize]) -> std::io::Result<()> {
    for l in labels {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

/// Writes `features.txt`, `edges.txt` and (if present) `labels.txt` into `dir`.
pub fn write_dataset(dir: &Path, g: &SparseGraph) -> Result<GraphFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = GraphFiles {
        features: dir.join("features.txt"),
        edges: dir.join("edges.txt"),
        labels: g.labels().map(|_| dir.join("labels.txt")),
    };
    let write = |path: &Path, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    };
    write(&files.features, &|b| write_features_text(b, g.features()))?;
    write(&files.edges, &|b| write_edges(b, g))?;
    if let (Some(path), Some(labels)) = (&files.labels, g.labels()) {
        write(path, &|b| write_labels(b, labels))?;
    }
    Ok(files)
}
