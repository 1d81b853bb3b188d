use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use nmpc_core::io::{to_json, Table};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `table` to standard output with six decimals.
pub fn print_table(table: &Table) {
    println!("{}", table.headers.join(","));
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("{}", cells.join(","));
    }
}

fn table_json(table: &Table) -> Value {
    Value::Array(
        table
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = table
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, v)| (h.clone(), serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number)))
                    .collect();
                Value::Object(obj)
            })
            .collect(),
    )
}

/// Saves `table` as CSV, or as a JSON array of row objects.
pub fn save_table(table: &Table, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => table.save(path)?,
        Format::Json => write_text(path, &to_json(&table_json(table))?)?,
    }
    log::info!("wrote {} rows to {}", table.rows.len(), path.display());
    Ok(())
}

/// Saves `table` as CSV, or `value` as JSON.
pub fn save_either<T: Serialize>(table: &Table, value: &T, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => save_table(table, path, format),
        Format::Json => write_text(path, &to_json(value)?),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
