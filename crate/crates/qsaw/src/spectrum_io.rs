//! CSV persistence for spectra and two-tone maps.
//!
//! # Spectrum files
//!
//! A spectrum file is UTF-8, LF-terminated, with one header line followed by
//! one `x,y` row per sample:
//!
//! ```csv
//! x_hz,y_dimensionless
//! 4.4580000000000000e9,1.2000000000000000e-2
//! ...
//! ```
//!
//! The header tokens (`hz`, `w`, `dimensionless`, `per_s`) carry the units,
//! so a file can never be re-loaded under the wrong interpretation. Values
//! are written with 17 significant digits, which round-trips every `f64`
//! bit-exactly. Rows out of order are sorted on load (with a provenance
//! note); duplicate x values are an error.
//!
//! # Two-tone maps
//!
//! Long format, one row per grid cell:
//!
//! ```csv
//! qubit_freq_hz,probe_freq_hz,response
//! ```
//!
//! The loader reconstructs the rectangular grid and rejects missing or
//! duplicate cells.

use std::fmt;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use qsaw_core::fit::TwoToneMap;
use qsaw_core::spectrum::{AxisUnit, Spectrum, SpectrumError, ValueUnit};

/// Errors from reading or writing data files.
#[derive(Debug)]
pub enum IoError {
    /// Underlying filesystem failure.
    Io { path: String, source: io::Error },
    /// First line is not a recognized header.
    BadHeader { found: String, expected: String },
    /// Header units disagree with what the caller needs.
    UnitMismatch { found: String, expected: String },
    /// A data row failed to parse (1-based line number).
    MalformedRow { line: usize, message: String },
    /// A value parsed but is NaN or infinite.
    NonFinite { line: usize },
    /// Two rows share the same x value.
    DuplicateX { line: usize, x: f64 },
    /// Header present but no data rows.
    EmptyData,
    /// Structural problem (too few samples, ragged grid, ...).
    Shape(String),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            IoError::BadHeader { found, expected } => {
                write!(f, "bad header `{found}` (expected `{expected}`)")
            }
            IoError::UnitMismatch { found, expected } => {
                write!(f, "unit mismatch: file has `{found}`, expected `{expected}`")
            }
            IoError::MalformedRow { line, message } => {
                write!(f, "malformed row at line {line}: {message}")
            }
            IoError::NonFinite { line } => write!(f, "non-finite value at line {line}"),
            IoError::DuplicateX { line, x } => {
                write!(f, "duplicate x value {x:e} at line {line}")
            }
            IoError::EmptyData => write!(f, "no data rows"),
            IoError::Shape(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for IoError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            IoError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

/// Write bytes to `path` atomically: write a sibling temp file, then rename.
/// A crash mid-write can never leave a truncated artifact behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| IoError::Shape(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    tmp.set_file_name(tmp_name);
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn header_for(axis: AxisUnit, value: ValueUnit) -> String {
    format!("x_{},y_{}", axis.token(), value.token())
}

fn parse_axis_token(tok: &str) -> Option<AxisUnit> {
    match tok {
        "hz" => Some(AxisUnit::Hertz),
        "w" => Some(AxisUnit::Watts),
        _ => None,
    }
}

fn parse_value_token(tok: &str) -> Option<ValueUnit> {
    match tok {
        "dimensionless" => Some(ValueUnit::Dimensionless),
        "hz" => Some(ValueUnit::Hertz),
        "per_s" => Some(ValueUnit::PerSecond),
        _ => None,
    }
}

/// Render a spectrum as CSV text (header + one row per sample).
pub fn format_spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * (s.len() + 1));
    out.push_str(&header_for(s.axis_unit, s.value_unit));
    out.push('\n');
    for (&x, &y) in s.x().iter().zip(s.y()) {
        let _ = writeln!(out, "{x:.16e},{y:.16e}");
    }
    out
}

/// Save a spectrum to a CSV file (atomic).
pub fn save_spectrum(path: &Path, s: &Spectrum) -> Result<(), IoError> {
    atomic_write(path, format_spectrum_csv(s).as_bytes())
}

fn parse_field(field: &str, line: usize) -> Result<f64, IoError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|e| IoError::MalformedRow { line, message: format!("`{field}`: {e}") })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IoError::NonFinite { line })
    }
}

/// Split one CSV line into exactly `n` numeric fields.
fn parse_row(line_text: &str, n: usize, line: usize) -> Result<Vec<f64>, IoError> {
    let fields: Vec<&str> = line_text.split(',').collect();
    if fields.len() != n {
        return Err(IoError::MalformedRow {
            line,
            message: format!("expected {n} comma-separated fields, found {}", fields.len()),
        });
    }
    fields.iter().map(|f| parse_field(f, line)).collect()
}

/// Read every non-empty line of a CSV file; returns (header, rows with their
/// 1-based line numbers).
fn read_csv_lines(path: &Path) -> Result<(String, Vec<(usize, String)>), IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut header: Option<String> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => header = Some(line.to_string()),
            Some(_) => rows.push((i + 1, line.to_string())),
        }
    }
    let header = header.ok_or(IoError::EmptyData)?;
    Ok((header, rows))
}

/// Shared spectrum-loading core; `expected = None` accepts any valid units.
fn load_spectrum_inner(
    path: &Path,
    expected: Option<(AxisUnit, ValueUnit)>,
) -> Result<Spectrum, IoError> {
    let (header, rows) = read_csv_lines(path)?;

    // name the concrete header whenever the caller pinned the units
    let bad_header = || IoError::BadHeader {
        found: header.clone(),
        expected: match expected {
            Some((a, v)) => header_for(a, v),
            None => String::from("x_<unit>,y_<unit>"),
        },
    };
    let (x_part, y_part) = header.split_once(',').ok_or_else(bad_header)?;
    let x_tok = x_part.strip_prefix("x_").ok_or_else(bad_header)?;
    let y_tok = y_part.strip_prefix("y_").ok_or_else(bad_header)?;
    let axis = parse_axis_token(x_tok).ok_or_else(bad_header)?;
    let value = parse_value_token(y_tok).ok_or_else(bad_header)?;
    if let Some((want_axis, want_value)) = expected {
        if axis != want_axis || value != want_value {
            return Err(IoError::UnitMismatch {
                found: header.clone(),
                expected: header_for(want_axis, want_value),
            });
        }
    }

    if rows.is_empty() {
        return Err(IoError::EmptyData);
    }
    let mut samples: Vec<(f64, f64, usize)> = Vec::with_capacity(rows.len());
    for (line, text) in &rows {
        let vals = parse_row(text, 2, *line)?;
        samples.push((vals[0], vals[1], *line));
    }

    let originally_sorted = samples.windows(2).all(|w| w[0].0 < w[1].0);
    if !originally_sorted {
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
        if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IoError::DuplicateX { line: w[1].2.max(w[0].2), x: w[0].0 });
        }
    }

    let mut provenance = path.display().to_string();
    if !originally_sorted {
        provenance.push_str(" (resorted)");
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Spectrum::new(x, y, axis, value, provenance).map_err(|e| match e {
        SpectrumError::Shape => {
            IoError::Shape(String::from("a spectrum needs at least two samples"))
        }
        other => IoError::Shape(format!("{other}")),
    })
}

/// Load a spectrum, requiring the given units in the header.
pub fn load_spectrum(
    path: &Path,
    axis: AxisUnit,
    value: ValueUnit,
) -> Result<Spectrum, IoError> {
    load_spectrum_inner(path, Some((axis, value)))
}

/// Load a spectrum with whatever (valid) units its header declares.
pub fn load_spectrum_any(path: &Path) -> Result<Spectrum, IoError> {
    load_spectrum_inner(path, None)
}

const MAP_HEADER: &str = "qubit_freq_hz,probe_freq_hz,response";

/// Render a two-tone map in long format (one row per grid cell).
pub fn format_two_tone_csv(map: &TwoToneMap) -> String {
    let mut out = String::new();
    out.push_str(MAP_HEADER);
    out.push('\n');
    for (col, &qf) in map.qubit_freq.iter().enumerate() {
        for (row, &pf) in map.probe_freq.iter().enumerate() {
            let _ = writeln!(out, "{qf:.16e},{pf:.16e},{:.16e}", map.response[col][row]);
        }
    }
    out
}

/// Save a two-tone map to a CSV file (atomic).
pub fn save_two_tone_map(path: &Path, map: &TwoToneMap) -> Result<(), IoError> {
    atomic_write(path, format_two_tone_csv(map).as_bytes())
}

/// Load a two-tone map, reconstructing the rectangular grid from long-format
/// rows. Cell coordinates must match exactly (they do for files written by
/// this crate, which round-trip `f64` bit-exactly).
pub fn load_two_tone_map(path: &Path) -> Result<TwoToneMap, IoError> {
    let (header, rows) = read_csv_lines(path)?;
    if header != MAP_HEADER {
        return Err(IoError::BadHeader { found: header, expected: String::from(MAP_HEADER) });
    }
    if rows.is_empty() {
        return Err(IoError::EmptyData);
    }
    let mut cells: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(rows.len());
    for (line, text) in &rows {
        let v = parse_row(text, 3, *line)?;
        cells.push((v[0], v[1], v[2], *line));
    }

    let mut qubit_freq: Vec<f64> = cells.iter().map(|c| c.0).collect();
    qubit_freq.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    qubit_freq.dedup();
    let mut probe_freq: Vec<f64> = cells.iter().map(|c| c.1).collect();
    probe_freq.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    probe_freq.dedup();

    let n_cols = qubit_freq.len();
    let n_rows = probe_freq.len();
    if cells.len() != n_cols * n_rows {
        return Err(IoError::Shape(format!(
            "two-tone grid is not rectangular: {} rows for a {n_cols}×{n_rows} grid",
            cells.len()
        )));
    }
    let mut response = vec![vec![f64::NAN; n_rows]; n_cols];
    let mut filled = vec![vec![false; n_rows]; n_cols];
    for (qf, pf, r, line) in cells {
        let col = qubit_freq.binary_search_by(|v| v.partial_cmp(&qf).unwrap()).unwrap();
        let row = probe_freq.binary_search_by(|v| v.partial_cmp(&pf).unwrap()).unwrap();
        if filled[col][row] {
            return Err(IoError::MalformedRow {
                line,
                message: format!("duplicate grid cell ({qf:e}, {pf:e})"),
            });
        }
        filled[col][row] = true;
        response[col][row] = r;
    }

    let map = TwoToneMap { qubit_freq, probe_freq, response };
    map.validate().map_err(|e| IoError::Shape(format!("invalid two-tone map: {e}")))?;
    Ok(map)
}

/// Render integer-indexed shift data (`n,shift_hz`), e.g. qubit frequency
/// shift per phonon number.
pub fn format_shift_table_csv(n: &[u32], shift_hz: &[f64]) -> String {
    let mut out = String::from("n,shift_hz\n");
    for (&k, &s) in n.iter().zip(shift_hz) {
        let _ = writeln!(out, "{k},{s:.16e}");
    }
    out
}

/// Render two hybridized-branch curves over a qubit-frequency sweep.
pub fn format_branch_table_csv(qubit_freq: &[f64], lower: &[f64], upper: &[f64]) -> String {
    let mut out = String::from("qubit_freq_hz,lower_hz,upper_hz\n");
    for ((&q, &lo), &up) in qubit_freq.iter().zip(lower).zip(upper) {
        let _ = writeln!(out, "{q:.16e},{lo:.16e},{up:.16e}");
    }
    out
}
