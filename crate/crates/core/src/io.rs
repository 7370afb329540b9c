//! File formats for matrices, measurement series, and reports.
//!
//! Three formats cover the crate's needs:
//!
//! - a binary matrix container (magic `CPLXMAT1`, two little-endian u64
//!   dimensions, then row-major little-endian f64 real/imaginary pairs)
//!   for exact interchange of complex matrices,
//! - headerless CSV for the same matrices with 17 significant digits,
//!   which round-trips every finite f64,
//! - headed CSV for measurement series such as decay curves, one row per
//!   abscissa.
//!
//! JSON reports are written through serde with a trailing newline. All
//! writers are deterministic: identical data produces identical bytes, so
//! repeated runs of an experiment can be compared with a plain byte
//! comparison.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Leading bytes of the binary matrix container.
pub const MATRIX_MAGIC: &[u8; 8] = b"CPLXMAT1";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::FileFormat { path: path.display().to_string(), reason: reason.into() }
}

/// Writes a complex matrix in the binary container format.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &Array2<C64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let inner = (|| -> std::io::Result<()> {
        w.write_all(MATRIX_MAGIC)?;
        let (rows, cols) = matrix.dim();
        w.write_all(&(rows as u64).to_le_bytes())?;
        w.write_all(&(cols as u64).to_le_bytes())?;
        for z in matrix.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()
    })();
    inner.map_err(|e| io_err(path, e))
}

/// Reads a complex matrix from the binary container format. The file
/// must contain exactly one matrix and nothing after it.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<C64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MATRIX_MAGIC {
        return Err(format_err(path, "bad magic bytes"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let cols = u64::from_le_bytes(word) as usize;

    let count = rows
        .checked_mul(cols)
        .filter(|&n| n <= (1 << 28))
        .ok_or_else(|| format_err(path, "matrix dimensions overflow the sanity cap"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut word)
            .map_err(|_| format_err(path, "file ends before the matrix does"))?;
        let re = f64::from_le_bytes(word);
        r.read_exact(&mut word)
            .map_err(|_| format_err(path, "file ends before the matrix does"))?;
        let im = f64::from_le_bytes(word);
        data.push(C64::new(re, im));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(format_err(path, "trailing bytes after the matrix"));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Formats a float with 17 significant digits, enough to round-trip any
/// finite f64 through text.
fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a complex matrix as headerless CSV. Each matrix row becomes one
/// CSV row of alternating real and imaginary fields.
pub fn write_matrix_csv(path: impl AsRef<Path>, matrix: &Array2<C64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let inner = (|| -> std::io::Result<()> {
        for row in matrix.rows() {
            let fields: Vec<String> = row
                .iter()
                .flat_map(|z| [full_precision(z.re), full_precision(z.im)])
                .collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    })();
    inner.map_err(|e| io_err(path, e))
}

/// Reads a complex matrix from headerless CSV as written by
/// [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<C64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    format_err(path, format!("line {}: unparsable field `{f}`", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() % 2 != 0 {
            return Err(format_err(
                path,
                format!("line {}: odd field count, need real/imaginary pairs", lineno + 1),
            ));
        }
        let width = fields.len() / 2;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(format_err(
                    path,
                    format!("line {}: {width} columns, previous rows had {c}", lineno + 1),
                ));
            }
            _ => {}
        }
        for pair in fields.chunks_exact(2) {
            data.push(C64::new(pair[0], pair[1]));
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| format_err(path, "no rows"))?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| format_err(path, e.to_string()))
}

/// Writes a headed CSV of float rows. Every row must match the header
/// width. Values are written with full round-trip precision.
pub fn write_series_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    let path = path.as_ref();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidInput {
                reason: format!(
                    "series row {i} has {} fields, header has {}",
                    row.len(),
                    header.len()
                ),
            });
        }
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let inner = (|| -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let fields: Vec<String> = row.iter().map(|&x| full_precision(x)).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    })();
    inner.map_err(|e| io_err(path, e))
}

/// Reads a headed CSV of float rows: the inverse of [`write_series_csv`].
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| format_err(path, "empty file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    format_err(path, format!("line {}: unparsable field `{f}`", lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(format_err(
                path,
                format!("line {}: row width differs from header", lineno + 2),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Writes a decay curve: one `abscissa,measured,envelope` row per point.
pub fn write_decay_csv(path: impl AsRef<Path>, points: &[(f64, f64, f64)]) -> Result<()> {
    let rows: Vec<Vec<f64>> = points.iter().map(|&(a, m, e)| vec![a, m, e]).collect();
    write_series_csv(path, &["abscissa", "measured", "envelope"], &rows)
}

/// Writes a serializable report as pretty JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
