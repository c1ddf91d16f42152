//! Matrix Market coordinate/array exchange for debugging and oracle data.

use std::io::{BufRead, Write};

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Writes `m` in `coordinate real` format. With `symmetric`, only the lower
/// triangle is stored.
pub fn write_matrix<W: Write>(mut w: W, m: &SparseMatrix, symmetric: bool) -> Result<()> {
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let entries: Vec<(usize, usize, f64)> = (0..m.n())
        .flat_map(|i| m.row(i).map(move |(j, v)| (i, j, v)))
        .filter(|&(i, j, _)| !symmetric || j <= i)
        .collect();
    writeln!(w, "{} {} {}", m.n(), m.n(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::data(format!("matrix market: {}", msg.into()))
}

fn data_lines<R: BufRead>(r: R) -> Result<(String, Vec<String>)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty input"))??;
    let mut body = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push(t.to_string());
    }
    Ok((header.to_lowercase(), body))
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(format!("missing {what}")))?.parse().map_err(|_| parse_err(format!("invalid {what}")))
}

/// Reads a square `coordinate real` matrix (general or symmetric).
pub fn read_matrix<R: BufRead>(r: R) -> Result<SparseMatrix> {
    let (header, body) = data_lines(r)?;
    if !header.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(parse_err(format!("unsupported header '{header}'")));
    }
    let symmetric = header.contains("symmetric");
    let mut it = body.iter();
    let size = it.next().ok_or_else(|| parse_err("missing size line"))?;
    let mut tok = size.split_whitespace();
    let rows: usize = parse(tok.next(), "row count")?;
    let cols: usize = parse(tok.next(), "column count")?;
    let nnz: usize = parse(tok.next(), "entry count")?;
    if rows != cols {
        return Err(parse_err("only square matrices are supported"));
    }
    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    for line in it {
        let mut tok = line.split_whitespace();
        let i: usize = parse(tok.next(), "row index")?;
        let j: usize = parse(tok.next(), "column index")?;
        let v: f64 = parse(tok.next(), "value")?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(format!("entry ({i}, {j}) out of range")));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let expected = if symmetric {
        triplets.len() - triplets.iter().filter(|(i, j, _)| i != j).count() / 2
    } else {
        triplets.len()
    };
    if expected != nnz {
        return Err(parse_err(format!("expected {nnz} entries, found {expected}")));
    }
    SparseMatrix::from_triplets(rows, &triplets)
}

/// Writes a dense column vector in `array real general` format.
pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

pub fn read_vector<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let (header, body) = data_lines(r)?;
    if !header.starts_with("%%matrixmarket matrix array real") {
        return Err(parse_err(format!("unsupported header '{header}'")));
    }
    let mut it = body.iter();
    let size = it.next().ok_or_else(|| parse_err("missing size line"))?;
    let mut tok = size.split_whitespace();
    let rows: usize = parse(tok.next(), "row count")?;
    let cols: usize = parse(tok.next(), "column count")?;
    if cols != 1 {
        return Err(parse_err("only column vectors are supported"));
    }
    let v: Vec<f64> = it.map(|l| parse(Some(l.as_str()), "value")).collect::<Result<_>>()?;
    if v.len() != rows {
        return Err(parse_err(format!("expected {rows} values, found {}", v.len())));
    }
    Ok(v)
}
