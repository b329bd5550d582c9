//! Artifact writing: JSON documents and tables in CSV or JSON form.

use std::fs;
use std::path::{Path, PathBuf};

use extctrl_core::report::to_json_17;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Text(String),
    Num(f64),
    Count(usize),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Count(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Count(n) => n.to_string(),
            Cell::Missing => "NA".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Count(n) => Value::from(*n),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: Vec<&'static str>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// Where and how a command writes its artifacts.
pub struct Outputs {
    pub dir: PathBuf,
    pub format: Format,
    pub plan_hash: Option<String>,
}

impl Outputs {
    pub fn new(dir: &Path, format: Format) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(extctrl_core::Error::from)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            plan_hash: None,
        })
    }

    /// Writes `value` as `<stem>.json`, adding the schema version and plan hash.
    pub fn write_document<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut map = Map::new();
        map.insert("schema".into(), Value::from(1));
        if let Some(h) = &self.plan_hash {
            map.insert("plan_hash".into(), Value::String(h.clone()));
        }
        match serde_json::to_value(value).map_err(extctrl_core::Error::from)? {
            Value::Object(fields) => map.extend(fields),
            other => {
                map.insert("value".into(), other);
            }
        }
        let path = self.dir.join(format!("{stem}.json"));
        let text = to_json_17(&Value::Object(map)).map_err(extctrl_core::Error::from)?;
        fs::write(&path, text).map_err(extctrl_core::Error::from)?;
        Ok(path)
    }

    /// Writes a table as `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn write_table(&self, stem: &str, table: &Table) -> Result<PathBuf, Failure> {
        match self.format {
            Format::Csv => {
                let path = self.dir.join(format!("{stem}.csv"));
                let mut text = String::new();
                if let Some(h) = &self.plan_hash {
                    text.push_str(&format!("# plan_hash: {h}\n"));
                }
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&table.headers).map_err(extctrl_core::Error::from)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(Cell::csv)).map_err(extctrl_core::Error::from)?;
                }
                let body = w.into_inner().map_err(|e| extctrl_core::Error::from(e.into_error()))?;
                text.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
                fs::write(&path, text).map_err(extctrl_core::Error::from)?;
                Ok(path)
            }
            Format::Json => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|row| {
                        Value::Object(
                            table
                                .headers
                                .iter()
                                .zip(row)
                                .map(|(h, c)| (h.to_string(), c.json()))
                                .collect(),
                        )
                    })
                    .collect();
                self.write_document(stem, &serde_json::json!({ "rows": rows }))
            }
        }
    }
}
