use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{Dimension, GridDataset};
use crate::error::{Error, Result};

/// How a dimension's key column is interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    /// Free-form identifier; inputs come from the listed input columns, or
    /// are the 1-based level position when there are none.
    #[default]
    Label,
    /// Numeric key, used as its own input.
    Number,
    /// ISO-8601 date; input is days since the earliest date plus one.
    Date,
    /// Date part of an ISO-8601 timestamp.
    TimestampDate,
    /// Hour of an ISO-8601 timestamp; input is the hour plus one.
    TimestampHour,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelOrder {
    /// Identifiers sorted lexicographically, numbers and times ascending.
    #[default]
    Canonical,
    /// Order of first appearance in the file.
    Appearance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    pub column: String,
    #[serde(default)]
    pub kind: DimensionKind,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub order: LevelOrder,
}

impl DimensionSpec {
    pub fn new(name: &str, column: &str, kind: DimensionKind) -> Self {
        DimensionSpec { name: name.into(), column: column.into(), kind, inputs: Vec::new(), order: LevelOrder::Canonical }
    }

    pub fn with_inputs(mut self, cols: &[&str]) -> Self {
        self.inputs = cols.iter().map(|c| c.to_string()).collect();
        self
    }
}

fn default_fraction() -> f64 {
    0.3
}

fn default_run() -> usize {
    48
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub value: String,
    pub dimensions: Vec<DimensionSpec>,
    /// Dimension whose levels are dropped when too sparsely observed.
    #[serde(default)]
    pub unit_dimension: usize,
    #[serde(default = "default_fraction")]
    pub max_missing_fraction: f64,
    #[serde(default = "default_run")]
    pub max_missing_run: usize,
    /// Optional column marking a present value as originally missing.
    #[serde(default)]
    pub missing_flag: Option<String>,
}

impl IngestSpec {
    pub fn new(value: &str, dimensions: Vec<DimensionSpec>) -> Self {
        IngestSpec {
            value: value.into(),
            dimensions,
            unit_dimension: 0,
            max_missing_fraction: default_fraction(),
            max_missing_run: default_run(),
            missing_flag: None,
        }
    }

    /// Spec reading back a file written by [`serialize`], with no unit dropping.
    pub fn for_serialized_header(header: &[String]) -> Result<Self> {
        let n = header.len();
        if n < 3 || header[n - 1] != "missing" {
            return Err(Error::Ingest("header does not look like a serialized grid".into()));
        }
        let value = header[n - 2].clone();
        let mut dims: Vec<DimensionSpec> = Vec::new();
        for col in &header[..n - 2] {
            if let Some(last) = dims.last_mut() {
                if col.strip_prefix(&format!("{}_x", last.name)).is_some_and(|k| k.parse::<usize>().is_ok()) {
                    last.inputs.push(col.clone());
                    continue;
                }
            }
            dims.push(DimensionSpec {
                name: col.clone(),
                column: col.clone(),
                kind: DimensionKind::Label,
                inputs: Vec::new(),
                order: LevelOrder::Appearance,
            });
        }
        Ok(IngestSpec {
            value,
            dimensions: dims,
            unit_dimension: 0,
            max_missing_fraction: 1.0,
            max_missing_run: usize::MAX,
            missing_flag: Some("missing".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedUnit {
    pub label: String,
    pub missing_fraction: f64,
    pub longest_missing_run: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    /// Cells with no row in the file.
    pub materialized_missing: usize,
    pub dropped: Vec<DroppedUnit>,
}

/// Sort key of a level.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
enum Key {
    Text(String),
    Number(f64),
    Date(NaiveDate),
    Hour(u32),
}

struct Level {
    label: String,
    key: Key,
    inputs: Option<Vec<f64>>,
    first_seen: usize,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    let s = s.trim().trim_end_matches('Z');
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn level_key(kind: DimensionKind, raw: &str, row: usize, col: &str) -> Result<(String, Key)> {
    let bad = |what: &str| Error::Ingest(format!("row {row}: column {col} value `{raw}` is not {what}"));
    let raw_t = raw.trim();
    Ok(match kind {
        DimensionKind::Label => (raw_t.to_string(), Key::Text(raw_t.to_string())),
        DimensionKind::Number => {
            let v: f64 = raw_t.parse().map_err(|_| bad("a number"))?;
            (raw_t.to_string(), Key::Number(v))
        }
        DimensionKind::Date => {
            let d = parse_date(raw_t).ok_or_else(|| bad("an ISO date"))?;
            (d.to_string(), Key::Date(d))
        }
        DimensionKind::TimestampDate => {
            let t = parse_timestamp(raw_t).ok_or_else(|| bad("an ISO timestamp"))?;
            (t.date().to_string(), Key::Date(t.date()))
        }
        DimensionKind::TimestampHour => {
            let t = parse_timestamp(raw_t).ok_or_else(|| bad("an ISO timestamp"))?;
            (format!("{:02}", t.hour()), Key::Hour(t.hour()))
        }
    })
}

fn truthy(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "y")
}

pub fn ingest_path(path: impl AsRef<Path>, spec: &IngestSpec) -> Result<(GridDataset, IngestReport)> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.as_ref().display())))?;
    ingest_reader(f, spec)
}

/// Reads a long-format CSV with one row per grid cell.
pub fn ingest_reader<R: Read>(reader: R, spec: &IngestSpec) -> Result<(GridDataset, IngestReport)> {
    let d = spec.dimensions.len();
    if d == 0 {
        return Err(Error::Config("at least one dimension is required".into()));
    }
    if spec.unit_dimension >= d {
        return Err(Error::Config(format!("unit dimension {} does not exist", spec.unit_dimension + 1)));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::None).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Ingest(format!("column `{name}` not found in header")))
    };
    let value_col = col(&spec.value)?;
    let flag_col = spec.missing_flag.as_deref().map(col).transpose()?;
    let key_cols: Vec<usize> = spec.dimensions.iter().map(|ds| col(&ds.column)).collect::<Result<_>>()?;
    let input_cols: Vec<Vec<usize>> =
        spec.dimensions.iter().map(|ds| ds.inputs.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;

    let mut levels: Vec<Vec<Level>> = (0..d).map(|_| Vec::new()).collect();
    let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); d];
    let mut cells: HashMap<Vec<usize>, (f64, bool, usize)> = HashMap::new();
    let mut rows_read = 0;

    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        rows_read += 1;
        let mut key = Vec::with_capacity(d);
        for (l, ds) in spec.dimensions.iter().enumerate() {
            let raw = rec.get(key_cols[l]).unwrap_or("");
            let (label, k) = level_key(ds.kind, raw, row, &ds.column)?;
            let inputs = if input_cols[l].is_empty() {
                None
            } else {
                let mut v = Vec::with_capacity(input_cols[l].len());
                for &c in &input_cols[l] {
                    let s = rec.get(c).unwrap_or("").trim();
                    let x: f64 = s
                        .parse()
                        .map_err(|_| Error::Ingest(format!("row {row}: input column {} value `{s}` is not a number", header[c])))?;
                    v.push(x);
                }
                Some(v)
            };
            let idx = match lookup[l].get(&label) {
                Some(&i) => {
                    if levels[l][i].inputs != inputs {
                        return Err(Error::Ingest(format!(
                            "row {row}: {} level `{label}` has inputs {:?}, earlier rows gave {:?}",
                            ds.name, inputs, levels[l][i].inputs
                        )));
                    }
                    i
                }
                None => {
                    let i = levels[l].len();
                    levels[l].push(Level { label: label.clone(), key: k, inputs, first_seen: i });
                    lookup[l].insert(label, i);
                    i
                }
            };
            key.push(idx);
        }
        let raw_value = rec.get(value_col).unwrap_or("").trim();
        let (value, mut missing) = if raw_value.is_empty() {
            (f64::NAN, true)
        } else {
            let v: f64 = raw_value.parse().map_err(|_| Error::Ingest(format!("row {row}: value `{raw_value}` is not a number")))?;
            (v, !v.is_finite())
        };
        if let Some(fc) = flag_col {
            missing |= truthy(rec.get(fc).unwrap_or(""));
        }
        if let Some((_, _, first)) = cells.get(&key) {
            let labels: Vec<String> =
                key.iter().enumerate().map(|(l, &i)| format!("{}={}", spec.dimensions[l].name, levels[l][i].label)).collect();
            return Err(Error::Ingest(format!("duplicate key ({}) on rows {first} and {row}", labels.join(", "))));
        }
        cells.insert(key, (value, missing, row));
    }
    if rows_read == 0 {
        return Err(Error::Ingest("the file has no data rows".into()));
    }

    // Final level order per dimension.
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(d);
    for (l, ds) in spec.dimensions.iter().enumerate() {
        let mut ord: Vec<usize> = (0..levels[l].len()).collect();
        if ds.order == LevelOrder::Canonical {
            ord.sort_by(|&a, &b| levels[l][a].key.partial_cmp(&levels[l][b].key).unwrap_or(std::cmp::Ordering::Equal));
        } else {
            ord.sort_by_key(|&a| levels[l][a].first_seen);
        }
        orders.push(ord);
    }
    let dims: Vec<Dimension> = spec
        .dimensions
        .iter()
        .enumerate()
        .map(|(l, ds)| {
            let ord = &orders[l];
            let min_date = levels[l].iter().filter_map(|lv| if let Key::Date(dt) = lv.key { Some(dt) } else { None }).min();
            let inputs = ord
                .iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let lv = &levels[l][i];
                    if let Some(v) = &lv.inputs {
                        return v.clone();
                    }
                    match (&lv.key, ds.kind) {
                        (Key::Number(x), _) => vec![*x],
                        (Key::Date(dt), _) => vec![(*dt - min_date.expect("dates present")).num_days() as f64 + 1.0],
                        (Key::Hour(h), _) => vec![*h as f64 + 1.0],
                        (Key::Text(_), _) => vec![pos as f64 + 1.0],
                    }
                })
                .collect();
            Dimension { name: ds.name.clone(), labels: ord.iter().map(|&i| levels[l][i].label.clone()).collect(), inputs }
        })
        .collect();

    // Position of original level index within the final order.
    let rank: Vec<Vec<usize>> = orders
        .iter()
        .map(|ord| {
            let mut r = vec![0; ord.len()];
            for (pos, &i) in ord.iter().enumerate() {
                r[i] = pos;
            }
            r
        })
        .collect();
    let sizes: Vec<usize> = dims.iter().map(|d| d.len()).collect();
    let n: usize = sizes.iter().product();
    let mut y = vec![f64::NAN; n];
    let mut missing = vec![true; n];
    for (key, (v, m, _)) in &cells {
        let flat = key.iter().enumerate().fold(0, |acc, (l, &i)| acc * sizes[l] + rank[l][i]);
        y[flat] = *v;
        missing[flat] = *m;
    }
    let materialized_missing = n - cells.len();
    let ds = GridDataset::new(dims, spec.value.clone(), y, missing)?;
    let (ds, dropped) = drop_sparse_units(ds, spec)?;
    for du in &dropped {
        tracing::warn!(
            unit = %du.label,
            missing_fraction = du.missing_fraction,
            longest_run = du.longest_missing_run,
            "dropping sparsely observed unit"
        );
    }
    Ok((ds, IngestReport { rows_read, materialized_missing, dropped }))
}

fn drop_sparse_units(ds: GridDataset, spec: &IngestSpec) -> Result<(GridDataset, Vec<DroppedUnit>)> {
    let k = spec.unit_dimension;
    let sizes = ds.sizes();
    let outer: usize = sizes[..k].iter().product();
    let inner: usize = sizes[k + 1..].iter().product();
    let nk = sizes[k];
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for u in 0..nk {
        let mut count = 0usize;
        let mut longest = 0usize;
        for o in 0..outer {
            let base = (o * nk + u) * inner;
            let mut run = 0usize;
            for i in base..base + inner {
                if ds.missing[i] {
                    count += 1;
                    run += 1;
                    longest = longest.max(run);
                } else {
                    run = 0;
                }
            }
        }
        let frac = count as f64 / (outer * inner) as f64;
        if frac > spec.max_missing_fraction || longest > spec.max_missing_run {
            dropped.push(DroppedUnit { label: ds.dims[k].labels[u].clone(), missing_fraction: frac, longest_missing_run: longest });
        } else {
            keep.push(u);
        }
    }
    if dropped.is_empty() {
        return Ok((ds, dropped));
    }
    if keep.is_empty() {
        return Err(Error::Ingest(format!("every level of {} exceeds the missing-data limits", ds.dims[k].name)));
    }
    let mut dims = ds.dims.clone();
    dims[k].labels = keep.iter().map(|&u| ds.dims[k].labels[u].clone()).collect();
    dims[k].inputs = keep.iter().map(|&u| ds.dims[k].inputs[u].clone()).collect();
    let mut y = Vec::with_capacity(outer * keep.len() * inner);
    let mut missing = Vec::with_capacity(y.capacity());
    for o in 0..outer {
        for &u in &keep {
            let base = (o * nk + u) * inner;
            y.extend_from_slice(&ds.y[base..base + inner]);
            missing.extend_from_slice(&ds.missing[base..base + inner]);
        }
    }
    Ok((GridDataset::new(dims, ds.value_name, y, missing)?, dropped))
}

/// Writes the grid in long format: per dimension its label and input
/// columns `<name>_x<k>`, then the value (empty when absent) and the
/// `missing` flag.
pub fn serialize<W: Write>(ds: &GridDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = Vec::new();
    for dim in &ds.dims {
        header.push(dim.name.clone());
        for c in 0..dim.input_dim() {
            header.push(format!("{}_x{}", dim.name, c + 1));
        }
    }
    header.push(ds.value_name.clone());
    header.push("missing".into());
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        rec.clear();
        for (dim, &k) in ds.dims.iter().zip(&ds.unravel(i)) {
            rec.push(dim.labels[k].clone());
            rec.extend(dim.inputs[k].iter().map(|v| v.to_string()));
        }
        rec.push(if ds.y[i].is_finite() { ds.y[i].to_string() } else { String::new() });
        rec.push(if ds.missing[i] { "1".into() } else { "0".into() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file produced by [`serialize`].
pub fn read_serialized<R: Read>(reader: R) -> Result<GridDataset> {
    let mut buf = Vec::new();
    let mut reader = reader;
    reader.read_to_end(&mut buf)?;
    let header: Vec<String> = csv::Reader::from_reader(buf.as_slice()).headers()?.iter().map(|s| s.to_string()).collect();
    let spec = IngestSpec::for_serialized_header(&header)?;
    Ok(ingest_reader(buf.as_slice(), &spec)?.0)
}
