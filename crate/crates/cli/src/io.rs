//! Matrix files: comma-separated text and the `fbin` binary layout.
//!
//! `fbin` is the 5 magic bytes `FARM1`, the row and column counts as
//! little-endian `u64`, then `rows × cols` little-endian `f64` values in
//! row-major order. Files always hold observations in rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use farm_core::Matrix;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const FBIN_MAGIC: &[u8; 5] = b"FARM1";
const FBIN_HEADER: usize = 5 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Fbin,
}

impl Format {
    /// `.fbin` files are binary, everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("fbin") => Format::Fbin,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Fbin => "fbin",
        }
    }
}

pub fn encode_fbin(m: &Matrix) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(FBIN_HEADER + 8 * rows * cols);
    out.extend_from_slice(FBIN_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_fbin(bytes: &[u8]) -> Result<Matrix, CliError> {
    if bytes.len() < FBIN_HEADER || &bytes[..5] != FBIN_MAGIC {
        return Err(CliError::Format("missing FARM1 header".into()));
    }
    let count = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (count(5), count(13));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(FBIN_HEADER as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(CliError::Format(format!(
            "{rows}x{cols} fbin payload does not match file size {}",
            bytes.len()
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let body = &bytes[FBIN_HEADER..];
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(body[at..at + 8].try_into().expect("8 bytes"))
    }))
}

/// Parses CSV text; empty fields read as NaN.
pub fn decode_csv(text: &str, header: bool) -> Result<Matrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Format(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(CliError::Format(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                cols.unwrap_or(0)
            )));
        }
        for field in record.iter() {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field
                    .parse::<f64>()
                    .map_err(|_| CliError::Format(format!("row {}: cannot parse '{field}'", line + 1)))?
            };
            values.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

/// 17 significant digits, which round-trips every `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn encode_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &Path, header: bool) -> Result<Matrix, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    match Format::from_path(path) {
        Format::Fbin => decode_fbin(&bytes),
        Format::Csv => {
            let text = String::from_utf8(bytes).map_err(|_| CliError::Format(format!("{} is not UTF-8", path.display())))?;
            decode_csv(&text, header)
        }
    }
}

/// Reads a vector stored as one column or one row.
pub fn read_vector(path: &Path, header: bool) -> Result<Vec<f64>, CliError> {
    let m = read_matrix(path, header)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(CliError::Format(format!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn encode_matrix(m: &Matrix, format: Format) -> Vec<u8> {
    match format {
        Format::Fbin => encode_fbin(m),
        Format::Csv => encode_csv(m).into_bytes(),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    write_atomic(path, &encode_matrix(m, Format::from_path(path)))
}
