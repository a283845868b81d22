//! Text tensor dump.
//!
//! One file holds any number of named tensors:
//!
//! ```text
//! tensordump 1
//! tensor <name> <rows> <cols>
//! v v v ...        (one line per row, space-separated decimal)
//! ```
//!
//! Values are written with Rust's shortest round-trip `f64` formatting, so a
//! write/read cycle reproduces every bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const MAGIC: &str = "tensordump 1";

pub fn write_tensors(path: &Path, tensors: &[(&str, &Matrix)]) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (name, m) in tensors {
        assert!(
            !name.contains(char::is_whitespace),
            "tensor names must not contain whitespace"
        );
        out.push_str(&format!("tensor {} {} {}\n", name, m.rows(), m.cols()));
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(Error::parse(path, 1, "missing tensordump header")),
    }
    let mut tensors = Vec::new();
    let mut pending: Option<(String, usize, usize, Vec<f64>)> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("tensor ") {
            if let Some((name, rows, cols, data)) = pending.take() {
                finish_tensor(path, lineno, &mut tensors, name, rows, cols, data)?;
            }
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::parse(path, lineno, "malformed tensor header"));
            }
            let rows = parts[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad row count"))?;
            let cols = parts[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad col count"))?;
            pending = Some((parts[0].to_string(), rows, cols, Vec::new()));
        } else if !line.trim().is_empty() {
            let slot = pending
                .as_mut()
                .ok_or_else(|| Error::parse(path, lineno, "data before any tensor header"))?;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad value '{tok}'")))?;
                slot.3.push(v);
            }
        }
    }
    if let Some((name, rows, cols, data)) = pending.take() {
        finish_tensor(path, 0, &mut tensors, name, rows, cols, data)?;
    }
    Ok(tensors)
}

fn finish_tensor(
    path: &Path,
    lineno: usize,
    tensors: &mut Vec<(String, Matrix)>,
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::parse(
            path,
            lineno,
            format!(
                "tensor {} expects {} values, found {}",
                name,
                rows * cols,
                data.len()
            ),
        ));
    }
    tensors.push((name, Matrix::from_vec(rows, cols, data)));
    Ok(())
}
