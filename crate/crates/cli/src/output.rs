//! Result files: CSV tables with sidecar manifests and a run manifest.
//!
//! Nothing time- or host-dependent is written, so identical inputs give
//! byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

use crate::scenario::{schema, Resolved};

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    file: &'a str,
    scenario: &'a str,
    command: &'a str,
    columns: Vec<&'a str>,
    rows: usize,
    context: &'a Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    resolved: &'a Resolved,
    outputs: &'a [OutputRecord],
    summaries: &'a [String],
}

pub struct OutputDir {
    root: PathBuf,
    scenario: String,
    command: String,
    records: Vec<OutputRecord>,
    summaries: Vec<String>,
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

impl OutputDir {
    pub fn create(resolved: &Resolved) -> anyhow::Result<Self> {
        let root = resolved.output_dir.clone();
        fs::create_dir_all(&root)
            .map_err(|e| schema(format!("output directory {} is not writable: {e}", root.display())))?;
        Ok(Self {
            root,
            scenario: resolved.scenario.clone(),
            command: resolved.command.name().to_string(),
            records: Vec::new(),
            summaries: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` from `fill` and its `<name>.json` sidecar.
    pub fn csv<F>(&mut self, name: &str, context: Value, fill: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("formatting {name}"))?;
        let text = std::str::from_utf8(&buf).context("CSV is not UTF-8")?;
        let mut lines = text.lines();
        let columns: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let rows = lines.count();
        write(&self.path(name), &buf)?;
        let side = Sidecar {
            file: name,
            scenario: &self.scenario,
            command: &self.command,
            columns,
            rows,
            context: &context,
        };
        write(&self.path(&format!("{name}.json")), &pretty(&side)?)?;
        self.records.push(OutputRecord {
            file: name.to_string(),
            rows,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        write(&self.path(name), &pretty(value)?)?;
        self.records.push(OutputRecord {
            file: name.to_string(),
            rows: 0,
        });
        Ok(())
    }

    pub fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        self.summaries.push(line);
    }

    pub fn finish(self, resolved: &Resolved) -> anyhow::Result<Vec<String>> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            resolved,
            outputs: &self.records,
            summaries: &self.summaries,
        };
        write(&self.path("run_manifest.json"), &pretty(&manifest)?)?;
        Ok(self.summaries)
    }
}
