//! Delimiter-separated numeric sample files: one point per line, fields split
//! on commas, tabs, semicolons or runs of spaces. Blank lines and lines
//! starting with `#` are ignored.

use nalgebra::DMatrix;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ParseError {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.path.display(), self.message)
        } else {
            write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split([',', '\t', ';', ' '])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

/// Parses sample text into an n×d matrix. With `header`, the first
/// non-comment line is skipped.
pub fn parse_samples(text: &str, header: bool, path: &Path) -> Result<DMatrix<f64>, ParseError> {
    let err = |line: usize, message: String| ParseError {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut skip_header = header;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if skip_header {
            skip_header = false;
            continue;
        }
        let row = split_fields(line)
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| err(idx + 1, format!("`{field}` is not a number")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(err(
                    idx + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    let d = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn read_samples(path: &Path, header: bool) -> Result<DMatrix<f64>, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_samples(&text, header, path)
}
