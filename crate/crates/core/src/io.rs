//! File formats: mesh JSON, sparse matrix triplets, band tables.
//!
//! Matrix dumps are text: one JSON header line `{"name", "rows", "cols", "nnz"}`, then one
//! `row col value` line per stored entry, zero-based.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh2D;
use crate::sparse::{self, Csr};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

pub fn write_mesh(path: &Path, mesh: &Mesh2D) -> Result<()> {
    write_json(path, mesh)
}

pub fn read_mesh(path: &Path) -> Result<Mesh2D> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
}

pub fn write_triplets(w: &mut impl Write, name: &str, a: &Csr) -> Result<()> {
    let header = MatrixHeader {
        name: name.to_string(),
        rows: a.rows(),
        cols: a.cols(),
        nnz: a.nnz(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for (v, (i, j)) in a.iter() {
        writeln!(w, "{i} {j} {v:e}")?;
    }
    Ok(())
}

pub fn read_triplets(r: impl BufRead) -> Result<(MatrixHeader, Csr)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::invalid("matrix", "empty file"))??;
    let header: MatrixHeader = serde_json::from_str(&first)?;
    let mut entries = Vec::with_capacity(header.nnz);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::invalid("matrix", format!("bad triplet line: {line}"));
        let mut it = line.split_whitespace();
        let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if i >= header.rows || j >= header.cols {
            return Err(bad());
        }
        entries.push((i, j, v));
    }
    if entries.len() != header.nnz {
        return Err(Error::invalid("matrix", "entry count does not match header"));
    }
    Ok((header.clone(), sparse::from_triplets(header.rows, header.cols, &entries)))
}

pub fn dump_matrix(path: &Path, name: &str, a: &Csr) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_triplets(&mut w, name, a)?;
    w.flush()?;
    Ok(())
}

/// Columns band_index (from 1), start, end.
pub fn band_csv(bands: &[(f64, f64)]) -> String {
    let mut s = String::from("band_index,start,end\n");
    for (i, (a, b)) in bands.iter().enumerate() {
        s.push_str(&format!("{},{a:.12e},{b:.12e}\n", i + 1));
    }
    s
}
