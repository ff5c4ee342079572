use std::fs;
use std::io::Write;

use serde::Serialize;

use crate::{Failure, Format, Globals};

/// `--format` wins, then the `--out` extension, then the command's default.
pub fn format(g: &Globals, default: Format) -> Format {
    if let Some(f) = g.format {
        return f;
    }
    match g
        .out
        .as_ref()
        .and_then(|p| p.extension())
        .and_then(|e| e.to_str())
    {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        _ => default,
    }
}

pub fn emit(g: &Globals, text: &str) -> Result<(), Failure> {
    match &g.out {
        Some(path) => fs::write(path, text).map_err(|e| ensel::Error::io(path, e).into()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| ensel::Error::io("<stdout>", e).into())
        }
    }
}

pub fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(ensel::Error::from)?;
    text.push('\n');
    Ok(text)
}

pub fn csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(ensel::Error::from)?;
    for row in rows {
        w.write_record(row).map_err(ensel::Error::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ensel::Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

/// Renders `value` as JSON, or `rows` as CSV or a table.
pub fn render<T: Serialize>(
    g: &Globals,
    default: Format,
    value: &T,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<String, Failure> {
    match format(g, default) {
        Format::Json => json(value),
        Format::Csv => csv(header, rows),
        Format::Table => Ok(table(header, rows)),
    }
}

pub fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

pub fn opt_fixed(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}
