//! Matrix Market reader and writer for symmetric coordinate matrices and
//! dense arrays.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::sparse::{BlockError, SymmetricOperatorBlock};

#[derive(Debug, Error)]
pub enum MmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported Matrix Market header: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Block(#[from] BlockError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MmError {
    MmError::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

fn parse_header(line: &str) -> Result<Header, MmError> {
    let lower = line.to_ascii_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(MmError::Unsupported(line.trim().to_string()));
    }
    let layout = match words[2] {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        _ => return Err(MmError::Unsupported(line.trim().to_string())),
    };
    if !matches!(words[3], "real" | "integer" | "double") {
        return Err(MmError::Unsupported(line.trim().to_string()));
    }
    let symmetry = match words[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        _ => return Err(MmError::Unsupported(line.trim().to_string())),
    };
    Ok(Header { layout, symmetry })
}

/// Non-comment lines with their 1-based line numbers, after the header.
fn body_lines<R: BufRead>(reader: R) -> Result<(Header, Vec<(usize, String)>), MmError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => return Err(parse_err(1, "empty file")),
    };
    let mut body = Vec::new();
    for (i, l) in lines {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push((i + 1, t.to_string()));
    }
    Ok((header, body))
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>, MmError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(parse_err(line, format!("expected {count} fields, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| parse_err(line, format!("cannot parse '{f}'"))))
        .collect()
}

/// Reads a `coordinate real symmetric` matrix into a block labeled `label`.
pub fn read_symmetric<R: Read>(reader: R, label: &str) -> Result<SymmetricOperatorBlock, MmError> {
    let (header, body) = body_lines(BufReader::new(reader))?;
    if header.layout != Layout::Coordinate || header.symmetry != Symmetry::Symmetric {
        return Err(MmError::Unsupported("expected 'coordinate real symmetric'".into()));
    }
    let Some(((size_line, size), entries)) = body.split_first() else {
        return Err(parse_err(1, "missing size line"));
    };
    let dims: Vec<usize> = parse_fields(*size_line, size, 3)?;
    if dims[0] != dims[1] {
        return Err(parse_err(*size_line, "matrix is not square"));
    }
    if entries.len() != dims[2] {
        return Err(parse_err(
            *size_line,
            format!("declared {} entries, found {}", dims[2], entries.len()),
        ));
    }
    let mut triplets = Vec::with_capacity(entries.len());
    for (line, text) in entries {
        let f: Vec<&str> = text.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(*line, "expected 'row col value'"));
        }
        let i: usize = f[0].parse().map_err(|_| parse_err(*line, "bad row index"))?;
        let j: usize = f[1].parse().map_err(|_| parse_err(*line, "bad column index"))?;
        let v: f64 = f[2].parse().map_err(|_| parse_err(*line, "bad value"))?;
        if i == 0 || j == 0 {
            return Err(parse_err(*line, "indices are 1-based"));
        }
        triplets.push((i - 1, j - 1, v));
    }
    Ok(SymmetricOperatorBlock::from_triplets(label, dims[0], triplets)?)
}

pub fn read_symmetric_file(path: &Path, label: &str) -> Result<SymmetricOperatorBlock, MmError> {
    read_symmetric(File::open(path)?, label)
}

/// Writes the lower triangle, as the format prescribes for symmetric storage.
pub fn write_symmetric<W: Write>(block: &SymmetricOperatorBlock, mut w: W) -> Result<(), MmError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "% {}", block.label())?;
    let mut entries: Vec<(usize, usize, f64)> = block.upper_triplets().iter().map(|&(i, j, v)| (j, i, v)).collect();
    entries.sort_by_key(|&(i, j, _)| (j, i));
    writeln!(w, "{} {} {}", block.dim(), block.dim(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_symmetric_file(block: &SymmetricOperatorBlock, path: &Path) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_symmetric(block, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes a dense matrix as `array real general`, column-major.
pub fn write_dense<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<(), MmError> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn write_dense_file(m: &DMatrix<f64>, path: &Path) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dense<R: Read>(reader: R) -> Result<DMatrix<f64>, MmError> {
    let (header, body) = body_lines(BufReader::new(reader))?;
    if header.layout != Layout::Array || header.symmetry != Symmetry::General {
        return Err(MmError::Unsupported("expected 'array real general'".into()));
    }
    let Some(((size_line, size), values)) = body.split_first() else {
        return Err(parse_err(1, "missing size line"));
    };
    let dims: Vec<usize> = parse_fields(*size_line, size, 2)?;
    if values.len() != dims[0] * dims[1] {
        return Err(parse_err(*size_line, format!("expected {} values, found {}", dims[0] * dims[1], values.len())));
    }
    let mut data = Vec::with_capacity(values.len());
    for (line, text) in values {
        data.push(parse_fields::<f64>(*line, text, 1)?[0]);
    }
    Ok(DMatrix::from_vec(dims[0], dims[1], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_round_trip() {
        let b = SymmetricOperatorBlock::from_triplets("t", 3, [(0, 0, 1.5), (0, 2, -2.0), (1, 1, 0.1)]).unwrap();
        let mut buf = Vec::new();
        write_symmetric(&b, &mut buf).unwrap();
        let back = read_symmetric(buf.as_slice(), "t").unwrap();
        assert_eq!(back.to_dense(), b.to_dense());
    }

    #[test]
    fn upper_triangle_entries_are_accepted() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 2 3.0\n2 2 1\n";
        let b = read_symmetric(text.as_bytes(), "x").unwrap();
        assert_eq!(b.to_dense().as_slice(), &[0.0, 3.0, 3.0, 1.0]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let general = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n";
        assert!(matches!(read_symmetric(general.as_bytes(), "x"), Err(MmError::Unsupported(_))));
        let short = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n";
        assert!(matches!(read_symmetric(short.as_bytes(), "x"), Err(MmError::Parse { .. })));
        let out = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1\n";
        assert!(matches!(read_symmetric(out.as_bytes(), "x"), Err(MmError::Block(_))));
    }

    #[test]
    fn dense_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.25]);
        let mut buf = Vec::new();
        write_dense(&m, &mut buf).unwrap();
        assert_eq!(read_dense(buf.as_slice()).unwrap(), m);
    }
}
