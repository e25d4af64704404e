//! File formats: observation CSVs, `.cop` histograms, PGM heatmaps and
//! labelled matrix CSVs.
//!
//! Every writer goes through [`write_atomic`], so a failed run leaves at most
//! a `.partial` file behind, never a truncated artifact under the final name.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::copula::{CopulaHistogram, ObservationTable};
use crate::error::{Error, Result};

/// Accepted deviation of a `.cop` file's total mass from one.
pub const COP_MASS_TOL: f64 = 1e-6;

/// Read a CSV whose first row names the variables and whose remaining rows
/// are finite numbers.
pub fn load_csv(path: &Path) -> Result<ObservationTable> {
    let text = read_input(path)?;
    parse_csv(&text, &path.display().to_string())
}

/// Unreadable inputs are reported like malformed ones, located at the path.
fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// [`load_csv`] on in-memory text; `source` prefixes error locations.
pub fn parse_csv(text: &str, source: &str) -> Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_err = |msg: String| Error::parse(format!("{source}:1"), msg);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(header_err("missing header row".into()));
    }
    let n = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("{source}:{line}"), csv_message(&e))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    format!("{source}:{line}"),
                    format!("column {} holds non-numeric value {cell:?}", names[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("{source}:{line}"),
                    format!("column {} holds non-finite value {cell:?}", names[j]),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(Error::parse(
            source.to_owned(),
            format!("need at least 2 data rows, found {rows}"),
        ));
    }
    let data =
        Array2::from_shape_vec((rows, n), values).expect("row lengths are checked by the reader");
    ObservationTable::new(names, data)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    }
}

/// Parse `.cop` text: `m` on the first line, then `m` rows of `m`
/// whitespace-separated masses. The grid is renormalized after validation.
pub fn parse_cop(text: &str, source: &str) -> Result<CopulaHistogram> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, head) = lines
        .next()
        .ok_or_else(|| Error::parse(source.to_owned(), "empty file"))?;
    let m: usize = head.parse().ok().filter(|&m| m > 0).ok_or_else(|| {
        Error::parse(
            format!("{source}:{first}"),
            format!("bad resolution {head:?}"),
        )
    })?;
    let mut mass = Array2::zeros((m, m));
    for p in 0..m {
        let (line, row) = lines.next().ok_or_else(|| {
            Error::parse(
                source.to_owned(),
                format!("expected {m} rows of masses, found {p}"),
            )
        })?;
        let loc = || format!("{source}:{line}");
        let cells: Vec<&str> = row.split_whitespace().collect();
        if cells.len() != m {
            return Err(Error::parse(
                loc(),
                format!("expected {m} masses, found {}", cells.len()),
            ));
        }
        for (q, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(loc(), format!("non-numeric mass {cell:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parse(loc(), format!("invalid mass {cell:?}")));
            }
            mass[[p, q]] = v;
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::parse(
            format!("{source}:{line}"),
            "trailing content after the grid",
        ));
    }
    let total: f64 = mass.sum();
    if (total - 1.0).abs() > COP_MASS_TOL {
        return Err(Error::parse(
            source.to_owned(),
            format!("total mass {total} is not 1"),
        ));
    }
    CopulaHistogram::normalized(mass)
}

pub fn read_cop(path: &Path) -> Result<CopulaHistogram> {
    let text = read_input(path)?;
    parse_cop(&text, &path.display().to_string())
}

/// `.cop` text with shortest round-trip decimal masses.
pub fn render_cop(c: &CopulaHistogram) -> String {
    let mut out = format!("{}\n", c.m());
    for row in c.mass().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_cop(c: &CopulaHistogram, path: &Path) -> Result<()> {
    write_atomic(path, render_cop(c).as_bytes())
}

/// Plain-text PGM of the masses: `u_i` runs left to right, `u_j` bottom to
/// top, zero mass is white and the heaviest cell black.
pub fn render_heatmap(c: &CopulaHistogram) -> String {
    let m = c.m();
    let mass = c.mass();
    let max = mass.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P2\n{m} {m}\n255\n");
    for row in 0..m {
        let q = m - 1 - row;
        let pixels: Vec<String> = (0..m)
            .map(|p| {
                let level = if max > 0.0 { mass[[p, q]] / max } else { 0.0 };
                let gray = (255.0 * (1.0 - level)).round() as u8;
                gray.to_string()
            })
            .collect();
        out.push_str(&pixels.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_heatmap(c: &CopulaHistogram, path: &Path) -> Result<()> {
    write_atomic(path, render_heatmap(c).as_bytes())
}

/// Square matrix as CSV with the names along the header row and first column.
pub fn render_matrix_csv(names: &[String], matrix: &Array2<f64>) -> Result<String> {
    if matrix.dim() != (names.len(), names.len()) {
        return Err(Error::InvalidData(format!(
            "{} names for a {:?} matrix",
            names.len(),
            matrix.dim()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once(String::new()).chain(names.iter().cloned());
    w.write_record(header).expect("writing to memory");
    for (name, row) in names.iter().zip(matrix.rows()) {
        let rec = std::iter::once(name.clone()).chain(row.iter().map(|v| format!("{v}")));
        w.write_record(rec).expect("writing to memory");
    }
    Ok(String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8"))
}

pub fn write_matrix_csv(names: &[String], matrix: &Array2<f64>, path: &Path) -> Result<()> {
    write_atomic(path, render_matrix_csv(names, matrix)?.as_bytes())
}

/// CSV from a header and rows of already formatted fields.
pub fn render_table_csv<R, I>(header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// Write to `<path>.partial`, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes).map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}
