//! Plain-text coordinate cache for sparse matrices.
//!
//! Header line `rows cols nnz`, then one `row col value` triple per line
//! (0-based indices). Values are written with 17 significant digits, so a
//! write/read round trip reproduces every f64 bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use hir_core::sparse::SparseRowMatrix;

use crate::movielens::{FormatError, Result};

pub fn write_matrix(path: &Path, matrix: &SparseRowMatrix) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{} {} {}", matrix.rows(), matrix.cols(), matrix.nnz()).unwrap();
    for (i, j, v) in matrix.iter_entries() {
        writeln!(buf, "{i} {j} {v:.16e}").unwrap();
    }
    fs::write(path, buf).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<SparseRowMatrix> {
    let content = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let err = |line: usize, msg: String| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_ascii_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(1, format!("bad header: {e}")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(err(1, format!("header needs `rows cols nnz`, got {header:?}")));
    };

    let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); rows];
    let mut seen = 0usize;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut it = line.split_ascii_whitespace();
        let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next())
        else {
            return Err(err(lineno, format!("expected `row col value`, got {line:?}")));
        };
        let r: usize = r.parse().map_err(|e| err(lineno, format!("bad row: {e}")))?;
        let c: u32 = c.parse().map_err(|e| err(lineno, format!("bad col: {e}")))?;
        let v: f64 = v.parse().map_err(|e| err(lineno, format!("bad value: {e}")))?;
        if r >= rows {
            return Err(err(lineno, format!("row {r} out of range ({rows} rows)")));
        }
        entries[r].push((c, v));
        seen += 1;
    }
    if seen != nnz {
        return Err(err(1, format!("header promises {nnz} entries, file has {seen}")));
    }
    for row in &mut entries {
        row.sort_unstable_by_key(|&(c, _)| c);
    }
    Ok(SparseRowMatrix::from_rows(cols, entries)?)
}
