use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hagp_client::api::{PredictResponse, QueryPoint};
use serde_json::Value;

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

/// File-name safe form of a model name.
pub fn safe_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Column positions of `<dim>_x1`, `<dim>_x2`, ... in `header`.
fn coordinate_columns(header: &csv::StringRecord, dim: &str) -> Vec<usize> {
    let mut cols = Vec::new();
    while let Some(p) = header.iter().position(|h| h == format!("{dim}_x{}", cols.len() + 1)) {
        cols.push(p);
    }
    cols
}

/// Reads query points with one `<dim>_x<k>` column per coordinate.
pub fn read_points(path: &Path, dims: &[String]) -> Result<Vec<QueryPoint>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let layout: Vec<Vec<usize>> = dims.iter().map(|d| coordinate_columns(&header, d)).collect();
    if let Some((d, _)) = dims.iter().zip(&layout).find(|(_, cols)| cols.is_empty()) {
        bail!("{} has no column {d}_x1", path.display());
    }
    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut p = Vec::with_capacity(dims.len());
        for cols in &layout {
            let coords = cols
                .iter()
                .map(|&c| {
                    let cell = rec.get(c).unwrap_or("").trim();
                    cell.parse::<f64>().with_context(|| format!("row {}: `{cell}` in column {} is not a number", row + 2, &header[c]))
                })
                .collect::<Result<Vec<f64>>>()?;
            p.push(coords);
        }
        points.push(p);
    }
    Ok(points)
}

pub fn write_predictions(path: &Path, dims: &[String], pred: &PredictResponse) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header: Vec<String> = Vec::new();
    if pred.labels.is_some() {
        header.extend(dims.iter().cloned());
    }
    if let Some(first) = pred.points.first() {
        for (d, x) in dims.iter().zip(first) {
            header.extend((1..=x.len()).map(|k| format!("{d}_x{k}")));
        }
    }
    header.extend(["mean".to_string(), "variance".to_string()]);
    w.write_record(&header)?;
    for (i, p) in pred.points.iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(labels) = &pred.labels {
            rec.extend(labels[i].iter().cloned());
        }
        rec.extend(p.iter().flatten().map(|v| v.to_string()));
        rec.push(pred.means[i].to_string());
        rec.push(pred.variances[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
