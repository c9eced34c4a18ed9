//! File formats: edge lists, DOT drawings of quotients, CSV tables and
//! grapheur JSON.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grapheur::Grapheur;
use crate::graph::WeightedDigraph;
use crate::numeric::fmt17;

/// How to read an edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeListOptions {
    /// Field separator; `None` splits on runs of whitespace.
    pub delimiter: Option<char>,
    /// Smallest vertex id in the file.
    pub id_base: usize,
    /// Add every edge in both directions (loops once).
    pub undirected: bool,
    /// Weight of lines with only two fields.
    pub default_weight: f64,
}

impl Default for EdgeListOptions {
    fn default() -> Self {
        EdgeListOptions {
            delimiter: None,
            id_base: 1,
            undirected: false,
            default_weight: 1.0,
        }
    }
}

/// Parses `src dst [weight]` lines. Blank lines and lines starting with `#`
/// or `%` are skipped; duplicate edges are summed.
pub fn parse_edge_list<R: Read>(reader: R, opts: &EdgeListOptions) -> Result<WeightedDigraph> {
    let mut triplets = Vec::new();
    let mut n = 0;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = match opts.delimiter {
            Some(d) => trimmed.split(d).map(str::trim).collect(),
            None => trimmed.split_whitespace().collect(),
        };
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let id = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| err(format!("invalid vertex id `{s}`")))?;
            v.checked_sub(opts.id_base)
                .ok_or_else(|| err(format!("vertex id {v} is below the id base {}", opts.id_base)))
        };
        let (i, j) = (id(fields[0])?, id(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| err(format!("invalid weight `{s}`")))?,
            None => opts.default_weight,
        };
        if !(w.is_finite() && w >= 0.0) {
            return Err(err(format!("weight {w} is negative or not finite")));
        }
        n = n.max(i + 1).max(j + 1);
        triplets.push((i, j, w));
        if opts.undirected && i != j {
            triplets.push((j, i, w));
        }
    }
    if triplets.is_empty() {
        return Err(Error::EmptyInput);
    }
    WeightedDigraph::from_triplets(n, triplets)
}

pub fn read_edge_list(path: &Path, opts: &EdgeListOptions) -> Result<WeightedDigraph> {
    parse_edge_list(File::open(path)?, opts)
}

/// Writes the nonzero entries as `src\tdst\tweight` lines.
pub fn write_edge_list<W: Write>(g: &WeightedDigraph, id_base: usize, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (i, j, w) in g.entries() {
        writeln!(out, "{}\t{}\t{}", i + id_base, j + id_base, fmt17(w))?;
    }
    out.flush()?;
    Ok(())
}

/// A DOT digraph of a quotient: one node per part, one edge per nonzero
/// entry (loops included) with `penwidth` proportional to weight.
pub fn quotient_dot(g: &WeightedDigraph) -> String {
    let max = g.entries().map(|e| e.2).fold(0.0, f64::max);
    let mut s = String::from("digraph quotient {\n");
    for v in 0..g.n() {
        s.push_str(&format!("  {v} [label=\"{v}\"];\n"));
    }
    for (i, j, w) in g.entries().filter(|e| e.2 > 0.0) {
        let pen = 8.0 * w / max;
        s.push_str(&format!(
            "  {i} -> {j} [label=\"{w:.4}\", weight={}, penwidth={}];\n",
            fmt17(w),
            fmt17(pen)
        ));
    }
    s.push_str("}\n");
    s
}

pub fn export_quotient_dot(g: &WeightedDigraph, path: &Path) -> Result<()> {
    std::fs::write(path, quotient_dot(g))?;
    Ok(())
}

/// A CSV field.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Num(x) => f.write_str(&fmt17(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// RFC 4180 CSV with a header row; floats use 17 significant digits.
pub fn emit_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        w.write_record(row.iter().map(Cell::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn serialize_grapheur(m: &Grapheur) -> Result<String> {
    Ok(serde_json::to_string_pretty(m)?)
}

/// Parses and validates grapheur JSON (`E`, `sigma`, `varsigma`, `theta`,
/// `vartheta`); unit mass is required within `1e-9`.
pub fn parse_grapheur(text: &str) -> Result<Grapheur> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_grapheur(path: &Path) -> Result<Grapheur> {
    parse_grapheur(&std::fs::read_to_string(path)?)
}
