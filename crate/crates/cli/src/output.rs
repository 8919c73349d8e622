//! CSV and manifest writers.

use std::io::{self, Write};
use std::path::Path;

use mimo_spatia::scenarios::ResultTable;
use serde::Serialize;

/// Shortest `%.17g`-style rendering: 17 significant digits, trailing zeros
/// dropped, scientific notation outside `1e-5 <= |x| < 1e17`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{x:.*}", (16 - exp) as usize);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `#` provenance lines, the header, then one line per row, LF-terminated.
pub fn write_csv<W: Write>(out: &mut W, table: &ResultTable, extra: &[(String, String)]) -> io::Result<()> {
    for (k, v) in table.provenance.iter().chain(extra) {
        for line in v.lines() {
            writeln!(out, "# {k}: {line}")?;
        }
    }
    let header: Vec<String> = table.header().iter().map(|h| csv_field(h)).collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in table.rows.iter().enumerate() {
        let mut fields = Vec::with_capacity(row.len() + 1);
        if table.label_column.is_some() {
            fields.push(csv_field(&table.labels[i]));
        }
        fields.extend(row.iter().map(|&x| format_number(x)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)
    }
}
