// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::RunError;

/// A CSV table; floats are written as `{:.16e}` (17 significant digits).
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub enum Cell {
    Int(u64),
    Float(f64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl Table {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => format!("{x:.16e}"),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Report {
    pub command: String,
    pub versions: Value,
    pub config: String,
    pub result: Value,
    pub files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes the tables, then `report.json` listing each table with its
/// checksum. Returns every written path.
pub fn emit(dir: &Path, mut report: Report, tables: &[Table]) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for t in tables {
        let body = t.render();
        let path = dir.join(t.name);
        write(&path, body.as_bytes())?;
        report.files.push(FileEntry {
            name: t.name.to_string(),
            bytes: body.len(),
            sha256: sha256_hex(body.as_bytes()),
        });
        written.push(path);
    }
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| RunError::Other(e.to_string()))?;
    json.push('\n');
    let path = dir.join("report.json");
    write(&path, json.as_bytes())?;
    written.push(path);
    Ok(written)
}
