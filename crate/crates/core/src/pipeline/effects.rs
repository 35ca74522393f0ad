use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::write_csv;
use crate::anova::Term;
use crate::data::GridDataset;
use crate::error::{Error, Result};
use crate::gp::{term_posterior_mean, term_set_variance, FittedModel, QueryPoint};

/// A sum of terms, optionally sliced at fixed levels: `3+1:3@station=KC1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectRequest {
    pub terms: Vec<Term>,
    /// `(dimension name, level label)` pairs.
    pub slices: Vec<(String, String)>,
}

impl FromStr for EffectRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Request { request: s.to_string(), reason: reason.to_string() };
        let (terms_part, slice_part) = match s.split_once('@') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let mut terms = Vec::new();
        for t in terms_part.split('+') {
            let term: Term = t.parse().map_err(|e: Error| bad(&e.to_string()))?;
            if terms.contains(&term) {
                return Err(bad(&format!("term {term} is listed twice")));
            }
            terms.push(term);
        }
        let mut slices = Vec::new();
        if let Some(sp) = slice_part {
            for pair in sp.split(',') {
                let (k, v) = pair.split_once('=').ok_or_else(|| bad("slices look like name=level"))?;
                let (k, v) = (k.trim(), v.trim());
                if k.is_empty() || v.is_empty() {
                    return Err(bad("slices look like name=level"));
                }
                slices.push((k.to_string(), v.to_string()));
            }
        }
        Ok(EffectRequest { terms, slices })
    }
}

impl std::fmt::Display for EffectRequest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", t.join("+"))?;
        if !self.slices.is_empty() {
            let s: Vec<String> = self.slices.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "@{}", s.join(","))?;
        }
        Ok(())
    }
}

/// Long-format effect table: one row per combination of the involved
/// dimensions' levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub request: String,
    /// Names of the involved dimensions, in dimension order.
    pub columns: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub mean: Vec<f64>,
    pub variance: Option<Vec<f64>>,
}

impl EffectTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut header = self.columns.clone();
        header.push("mean".into());
        if self.variance.is_some() {
            header.push("variance".into());
        }
        let rows: Vec<Vec<String>> = (0..self.mean.len())
            .map(|i| {
                let mut r = self.labels[i].clone();
                r.push(self.mean[i].to_string());
                if let Some(v) = &self.variance {
                    r.push(v[i].to_string());
                }
                r
            })
            .collect();
        write_csv(writer, &header, &rows)
    }

    /// File-name friendly form of the request.
    pub fn file_stem(&self) -> String {
        let s: String = self
            .request
            .chars()
            .map(|c| match c {
                '+' => '_',
                ':' => 'x',
                '@' => '-',
                '=' => '-',
                ',' => '-',
                c if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' => c,
                _ => '_',
            })
            .collect();
        format!("effect_{s}")
    }
}

/// Evaluates the summed posterior mean (and optionally its variance) of the
/// requested terms over the training levels of every involved dimension.
pub fn export_effects(fm: &FittedModel, ds: &GridDataset, req: &EffectRequest, with_variance: bool) -> Result<EffectTable> {
    let d = ds.d();
    let bad = |reason: String| Error::Request { request: req.to_string(), reason };
    for t in &req.terms {
        if !fm.terms().contains(t) && !t.is_constant() {
            return Err(Error::UnknownTerm(t.to_string()));
        }
    }
    let involved: BTreeSet<usize> = req.terms.iter().flat_map(|t| t.dims().iter().copied()).collect();
    // Level indices per dimension over which the table runs.
    let mut levels: Vec<Vec<usize>> =
        (0..d).map(|l| if involved.contains(&l) { (0..ds.dims[l].len()).collect() } else { vec![0] }).collect();
    for (name, label) in &req.slices {
        let l = ds.dim_index(name).ok_or_else(|| bad(format!("no dimension named {name}")))?;
        if !involved.contains(&l) {
            return Err(bad(format!("dimension {name} is not involved in the requested terms")));
        }
        let k = ds.dims[l].level_of(label).ok_or_else(|| bad(format!("{name} has no level {label}")))?;
        levels[l] = vec![k];
    }
    let dims: Vec<usize> = involved.iter().copied().collect();
    let query: Vec<Vec<Vec<f64>>> = (0..d).map(|l| levels[l].iter().map(|&k| ds.dims[l].inputs[k].clone()).collect()).collect();

    let shape: Vec<usize> = dims.iter().map(|&l| levels[l].len()).collect();
    let m: usize = shape.iter().product();
    let mut mean = vec![0.0; m];
    let mut combos: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..m {
        combos.push(idx.clone());
        for p in (0..dims.len()).rev() {
            idx[p] += 1;
            if idx[p] < shape[p] {
                break;
            }
            idx[p] = 0;
        }
    }
    for t in &req.terms {
        let tm = term_posterior_mean(fm, t, &query)?;
        for (row, c) in combos.iter().enumerate() {
            let mut k = 0;
            for (q, &l) in t.dims().iter().enumerate() {
                let p = dims.iter().position(|&x| x == l).expect("involved");
                k = k * tm.shape[q] + c[p];
            }
            mean[row] += tm.values[k];
        }
    }
    let variance = if with_variance {
        let points: Vec<QueryPoint> = combos
            .iter()
            .map(|c| {
                (0..d)
                    .map(|l| match dims.iter().position(|&x| x == l) {
                        Some(p) => query[l][c[p]].clone(),
                        None => query[l][0].clone(),
                    })
                    .collect()
            })
            .collect();
        Some(term_set_variance(fm, &req.terms, &points)?.values)
    } else {
        None
    };
    let labels =
        combos.iter().map(|c| dims.iter().enumerate().map(|(p, &l)| ds.dims[l].labels[levels[l][c[p]]].clone()).collect()).collect();
    Ok(EffectTable { request: req.to_string(), columns: dims.iter().map(|&l| ds.dims[l].name.clone()).collect(), labels, mean, variance })
}
