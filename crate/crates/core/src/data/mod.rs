//! Grid datasets: ingestion from long-format CSV, serialisation, cleaning.

mod clean;
mod ingest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

pub use clean::{adjust_dst, impute, DstReport, ImputeConfig, ImputeReport};
pub use ingest::{
    ingest_path, ingest_reader, read_serialized, serialize, DimensionKind, DimensionSpec, DroppedUnit, IngestReport, IngestSpec, LevelOrder,
};

/// One grid dimension: display labels and numeric inputs per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub labels: Vec<String>,
    pub inputs: Vec<Point>,
}

impl Dimension {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn level_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Number of coordinates per input.
    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |p| p.len())
    }
}

/// A response on the Cartesian product of the dimensions' levels, laid out
/// last-dimension-fastest. Missing responses are `NaN`; `missing` records
/// which cells were originally missing, including ones filled later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDataset {
    pub dims: Vec<Dimension>,
    pub value_name: String,
    #[serde(with = "nan_as_null")]
    pub y: Vec<f64>,
    pub missing: Vec<bool>,
}

impl GridDataset {
    pub fn new(dims: Vec<Dimension>, value_name: impl Into<String>, y: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        let n: usize = dims.iter().map(|d| d.len()).product();
        if y.len() != n || missing.len() != n {
            return Err(Error::Shape(format!(
                "grid has {n} cells but {} responses and {} mask entries were given",
                y.len(),
                missing.len()
            )));
        }
        for d in &dims {
            if d.inputs.len() != d.labels.len() {
                return Err(Error::Shape(format!("dimension {} has mismatched labels and inputs", d.name)));
            }
            if d.is_empty() {
                return Err(Error::Shape(format!("dimension {} has no levels", d.name)));
            }
        }
        Ok(GridDataset { dims, value_name: value_name.into(), y, missing })
    }

    /// A fully observed dataset with scalar inputs `1..=n_l` and generated labels.
    pub fn from_values(names: &[&str], sizes: &[usize], y: Vec<f64>) -> Result<Self> {
        let dims = names
            .iter()
            .zip(sizes)
            .map(|(name, &n)| Dimension {
                name: name.to_string(),
                labels: (1..=n).map(|i| i.to_string()).collect(),
                inputs: (1..=n).map(|i| vec![i as f64]).collect(),
            })
            .collect();
        let missing = y.iter().map(|v| !v.is_finite()).collect();
        Self::new(dims, "value", y, missing)
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.len()).collect()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn levels(&self) -> Vec<Vec<Point>> {
        self.dims.iter().map(|d| d.inputs.clone()).collect()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.sizes()).fold(0, |acc, (&i, n)| acc * n + i)
    }

    pub fn unravel(&self, mut i: usize) -> Vec<usize> {
        let sizes = self.sizes();
        let mut idx = vec![0; sizes.len()];
        for l in (0..sizes.len()).rev() {
            idx[l] = i % sizes[l];
            i /= sizes[l];
        }
        idx
    }

    pub fn is_complete(&self) -> bool {
        self.y.iter().all(|v| v.is_finite())
    }

    pub fn missing_count(&self) -> usize {
        self.y.iter().filter(|v| !v.is_finite()).count()
    }

    /// Flat indices of each unit's series, in layout order. A unit is one
    /// level of `unit_dim` combined with one level of every dimension
    /// before it; the series runs over the dimensions after it.
    pub fn unit_series(&self, unit_dim: usize) -> Result<Vec<Vec<usize>>> {
        if unit_dim >= self.d() {
            return Err(Error::Config(format!("unit dimension {} does not exist", unit_dim + 1)));
        }
        let sizes = self.sizes();
        let len: usize = sizes[unit_dim + 1..].iter().product();
        let units: usize = sizes[..=unit_dim].iter().product();
        Ok((0..units).map(|u| (u * len..(u + 1) * len).collect()).collect())
    }

    /// Finite response values; errors if any cell is missing.
    pub fn complete_y(&self) -> Result<&[f64]> {
        match self.y.iter().position(|v| !v.is_finite()) {
            None => Ok(&self.y),
            Some(i) => Err(Error::Config(format!("cell {} has no value; impute the dataset first", self.describe_cell(i)))),
        }
    }

    pub fn describe_cell(&self, i: usize) -> String {
        let idx = self.unravel(i);
        let parts: Vec<String> = self.dims.iter().zip(&idx).map(|(d, &k)| format!("{}={}", d.name, d.labels[k])).collect();
        parts.join(",")
    }

    /// Rescales each dimension's inputs to `[0, 1]` per coordinate where
    /// requested, returning the applied transforms.
    pub fn apply_min_max(&mut self, dims: &[usize]) -> Result<Vec<Option<MinMax>>> {
        let mut record = vec![None; self.d()];
        for &l in dims {
            let dim = self.dims.get_mut(l).ok_or_else(|| Error::Config(format!("dimension {} does not exist", l + 1)))?;
            let k = dim.input_dim();
            let mut mm = MinMax { min: vec![f64::INFINITY; k], max: vec![f64::NEG_INFINITY; k] };
            for p in &dim.inputs {
                for (c, &v) in p.iter().enumerate() {
                    mm.min[c] = mm.min[c].min(v);
                    mm.max[c] = mm.max[c].max(v);
                }
            }
            for p in dim.inputs.iter_mut() {
                *p = mm.apply(p);
            }
            record[l] = Some(mm);
        }
        Ok(record)
    }
}

/// Per-coordinate min-max transform of one dimension's inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn apply(&self, p: &[f64]) -> Point {
        p.iter()
            .enumerate()
            .map(|(c, v)| {
                let span = self.max[c] - self.min[c];
                if span > 0.0 {
                    (v - self.min[c]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Serialises `NaN` as JSON `null` and back.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}
