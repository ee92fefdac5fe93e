use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::config::{ResolvedConfig, RunConfig};
use super::metrics::Summary;
use super::runner::{execute, write_run};

pub const TABLE_FILE: &str = "sweep.csv";
pub const INDEX_FILE: &str = "sweep.json";

/// Dotted config path → values to try. Each value is tried with every other
/// parameter at its base setting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid(pub BTreeMap<String, Vec<Value>>);

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let grid: Grid =
            serde_json::from_str(text).map_err(|e| Error::config("grid", e.to_string()))?;
        if grid.0.is_empty() {
            return Err(Error::config("grid", "no parameters given"));
        }
        if let Some((k, _)) = grid.0.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::config(format!("grid.{k}"), "empty value list"));
        }
        Ok(grid)
    }

    pub fn cells(&self) -> Vec<(String, Value)> {
        self.0
            .iter()
            .flat_map(|(k, vs)| vs.iter().map(move |v| (k.clone(), v.clone())))
            .collect()
    }
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub final_loss: f64,
    pub sim_time_s: f64,
    pub sync_count: u64,
    pub diverged: bool,
}

impl SweepRow {
    fn new(param: &str, value: &Value, summary: &Summary) -> Self {
        Self {
            param: param.to_string(),
            value: display_value(value),
            final_loss: summary.final_loss,
            sim_time_s: summary.total_sim_time_s,
            sync_count: summary.sync_count,
            diverged: summary.diverged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub param: String,
    pub value: Value,
    pub dir: Option<PathBuf>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
}

impl SweepReport {
    /// Table rows for the cells that produced a summary, in grid order.
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .filter_map(|c| {
                c.summary
                    .as_ref()
                    .map(|s| SweepRow::new(&c.param, &c.value, s))
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn cell_dir_name(index: usize, param: &str, value: &Value) -> String {
    let raw = format!("{index:03}_{param}={}", display_value(value));
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._=-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Checks that `path` names a field of the (default-filled) config document.
fn check_path(doc: &Value, path: &str) -> Result<()> {
    let mut node = doc;
    for key in path.split('.') {
        match node {
            Value::Object(map) if map.contains_key(key) => node = &map[key],
            // An unset optional section: its fields are checked when the cell parses.
            Value::Null => return Ok(()),
            _ => {
                return Err(Error::config(
                    format!("grid.{path}"),
                    format!("`{key}` is not a config field"),
                ))
            }
        }
    }
    Ok(())
}

/// Sets `path` in `doc`, turning unset intermediate sections into objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = node
            .as_object_mut()
            .ok_or_else(|| {
                Error::config(format!("grid.{path}"), format!("`{key}` is not a section"))
            })?
            .entry(key.to_string())
            .or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    node.as_object_mut()
        .ok_or_else(|| Error::config(format!("grid.{path}"), "parent is not a section"))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn run_cell(base: &Value, param: &str, value: &Value, dir: Option<&Path>) -> Result<Summary> {
    let mut doc = base.clone();
    set_path(&mut doc, param, value.clone())?;
    let mut raw: RunConfig =
        serde_json::from_value(doc).map_err(|e| Error::config(param, e.to_string()))?;
    raw.output.dir = dir.map(Path::to_path_buf);
    let config: ResolvedConfig = raw.resolve()?;
    let result = execute(&config)?;
    if let Some(dir) = dir {
        write_run(dir, &config, &result)?;
    }
    Ok(result.summary)
}

/// Runs one cell per grid value, concurrently, and writes `sweep.csv` and
/// `sweep.json` into `out_dir` when given. A failing cell is recorded and
/// the rest still run.
pub fn sweep(base: &RunConfig, grid: &Grid, out_dir: Option<&Path>) -> Result<SweepReport> {
    let base_doc = serde_json::to_value(base)?;
    for key in grid.0.keys() {
        check_path(&base_doc, key)?;
    }
    let cells = grid.cells();
    let reports: Vec<CellReport> = cells
        .par_iter()
        .enumerate()
        .map(|(i, (param, value))| {
            let dir = out_dir.map(|d| d.join(cell_dir_name(i, param, value)));
            let outcome = run_cell(&base_doc, param, value, dir.as_deref());
            if let (Err(e), Some(dir)) = (&outcome, &dir) {
                // Best effort: the failure is also in the index.
                let _ = fs::create_dir_all(dir)
                    .and_then(|_| fs::write(dir.join("error.txt"), e.to_string()));
            }
            let (summary, error) = match outcome {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CellReport {
                param: param.clone(),
                value: value.clone(),
                dir,
                summary,
                error,
            }
        })
        .collect();
    let report = SweepReport { cells: reports };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_table(&report.rows(), &dir.join(TABLE_FILE))?;
        fs::write(
            dir.join(INDEX_FILE),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
    }
    Ok(report)
}

pub fn write_table(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "param",
            "value",
            "final_loss",
            "sim_time_s",
            "sync_count",
            "diverged",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
