//! Tables as CSV with a JSON schema sidecar, plus hashing helpers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tabmix_core::table::{ColumnKind, Schema, Table, Value};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

pub fn schema_hash(schema: &Schema) -> String {
    sha256_hex(serde_json::to_string(schema).expect("schema serializes").as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `data/mathexpr.csv` -> `data/mathexpr.schema.json`.
pub fn schema_sidecar(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    let stem = stem.split('.').next().unwrap_or(stem);
    csv.with_file_name(format!("{stem}.schema.json"))
}

pub fn write_schema(path: &Path, schema: &Schema) -> Result<()> {
    write_json(path, schema)
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing schema {}", path.display()))
}

fn format_number(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        // shortest representation that parses back to the same bits
        format!("{x}")
    }
}

pub fn table_to_csv(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::NonNumeric).from_writer(Vec::new());
    w.write_record(table.schema().columns.iter().map(|c| c.name.as_str()))?;
    for i in 0..table.num_rows() {
        let row: Vec<String> = table
            .row(i)
            .into_iter()
            .map(|v| match v {
                Value::Num(x) => format_number(x),
                Value::Str(s) => s,
            })
            .collect();
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("flushing csv: {e}"))?)
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    write_file(path, &table_to_csv(table)?)
}

/// Read a CSV whose header matches `schema` exactly. Empty numerical cells
/// become NaN and empty categorical cells stay empty (see `Table::impute`).
pub fn read_csv(path: &Path, schema: &Schema) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    ensure!(header == expected, "{}: header {:?} does not match schema columns {:?}", path.display(), header, expected);
    let mut table = Table::new(schema.clone());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        let mut row = Vec::with_capacity(rec.len());
        for (cell, spec) in rec.iter().zip(&schema.columns) {
            row.push(match spec.kind {
                ColumnKind::Numerical if cell.trim().is_empty() => Value::Num(f64::NAN),
                ColumnKind::Numerical => match cell.trim().parse::<f64>() {
                    Ok(x) => Value::Num(x),
                    Err(_) => bail!("{}: row {}: `{cell}` in `{}` is not a number", path.display(), line + 1, spec.name),
                },
                _ => Value::Str(cell.to_string()),
            });
        }
        table.push_row(row).with_context(|| format!("{}: row {}", path.display(), line + 1))?;
    }
    Ok(table)
}
