//! File formats: numeric tables (CSV or JSON), node/feature tables for the
//! path pipeline, and atomic output writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMatrix;
use crate::paths::{Node, NodeTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses from the extension, defaulting to CSV.
    pub fn infer(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// A numeric table with optional row labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub labels: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    /// `"matrix"` or `"points"` when a JSON input says which it is.
    pub declared: Option<String>,
}

#[derive(Deserialize)]
struct JsonTable {
    labels: Option<Vec<String>>,
    matrix: Option<Vec<Vec<f64>>>,
    points: Option<Vec<Vec<f64>>>,
}

pub fn read_table(path: &Path, format: Option<Format>) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    match format.unwrap_or_else(|| Format::infer(path)) {
        Format::Csv => parse_csv_table(&text),
        Format::Json => parse_json_table(&text),
    }
}

pub fn parse_json_table(text: &str) -> Result<Table> {
    let raw: JsonTable = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let (rows, declared) = match (raw.matrix, raw.points) {
        (Some(m), None) => (m, "matrix"),
        (None, Some(p)) => (p, "points"),
        _ => return Err(Error::Parse("expected exactly one of \"matrix\" or \"points\"".into())),
    };
    if let Some(l) = &raw.labels {
        if l.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: l.len(),
            });
        }
    }
    Ok(Table {
        labels: raw.labels,
        rows,
        declared: Some(declared.into()),
    })
}

/// CSV with an optional header row and an optional leading label column.
/// The first row is a header if any field after the first is non-numeric,
/// or if only its first field is and the next row starts with a number.
pub fn parse_csv_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push(rec.iter().map(str::to_owned).collect::<Vec<String>>());
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let numeric = |s: &str| s.parse::<f64>().is_ok();
    let first = &records[0];
    let header = first.iter().skip(1).any(|s| !numeric(s))
        || (!numeric(&first[0]) && records.get(1).is_some_and(|r| numeric(&r[0])));
    if header {
        records.remove(0);
    }
    let labelled = records
        .first()
        .is_some_and(|r| r.first().is_some_and(|s| !numeric(s)));
    let mut labels = Vec::new();
    let mut rows = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let fields = if labelled {
            labels.push(rec[0].clone());
            &rec[1..]
        } else {
            &rec[..]
        };
        let row = fields
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: not a number: {s:?}", r + 1, c + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Table {
        labels: labelled.then_some(labels),
        rows,
        declared: None,
    })
}

/// 17 significant digits: enough to round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_csv(rows: &[Vec<f64>], labels: Option<&[String]>) -> String {
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(l) = labels {
            out.push_str(&csv_field(&l[i]));
            out.push(',');
        }
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn metric_csv(d: &MetricMatrix) -> String {
    matrix_csv(&d.to_rows(), d.labels())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Deserialize)]
struct NodeRecord {
    id: String,
    label: String,
    lon: f64,
    lat: f64,
}

/// Nodes CSV (`id,label,lon,lat` header) joined with a features file keyed
/// by id: CSV `id,f0,f1,…` or JSON `{"id": [..], ...}`.
pub fn read_node_table(nodes_path: &Path, features_path: &Path) -> Result<NodeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(nodes_path)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let records: Vec<NodeRecord> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    let features = read_features(features_path)?;
    let mut nodes = Vec::with_capacity(records.len());
    for r in records {
        let f = features
            .iter()
            .find(|(id, _)| *id == r.id)
            .map(|(_, f)| f.clone())
            .ok_or_else(|| Error::UnknownNode(format!("{} has no feature vector", r.id)))?;
        nodes.push(Node {
            id: r.id,
            label: r.label,
            lon: r.lon,
            lat: r.lat,
            features: f,
        });
    }
    NodeTable::new(nodes)
}

fn read_features(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    match Format::infer(path) {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            map.into_iter()
                .map(|(id, v)| {
                    let f: Vec<f64> = serde_json::from_value(v).map_err(|e| Error::Parse(format!("{id}: {e}")))?;
                    Ok((id, f))
                })
                .collect()
        }
        Format::Csv => {
            let table = parse_csv_table(&text)?;
            let labels = table
                .labels
                .ok_or_else(|| Error::Parse("features CSV needs an id column".into()))?;
            Ok(labels.into_iter().zip(table.rows).collect())
        }
    }
}

pub fn nodes_csv(table: &NodeTable) -> String {
    let mut out = String::from("id,label,lon,lat\n");
    for n in table.nodes() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&n.id),
            csv_field(&n.label),
            fmt_f64(n.lon),
            fmt_f64(n.lat)
        ));
    }
    out
}

pub fn features_csv(table: &NodeTable) -> String {
    let dim = table.nodes().first().map_or(0, |n| n.features.len());
    let mut out = String::from("id");
    for j in 0..dim {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for n in table.nodes() {
        out.push_str(&csv_field(&n.id));
        for &v in &n.features {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}
