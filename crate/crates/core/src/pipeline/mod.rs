//! End-to-end operations on grid datasets: model comparison, effect
//! tables and benchmarks.

mod bench;
mod compare;
mod effects;

pub use bench::{bench, parse_shape, synthetic_problem, write_bench_csv, BenchConfig, BenchRow, SyntheticProblem};
pub use compare::{compare, write_comparison_csv, Comparison, ComparisonRow};
pub use effects::{export_effects, EffectRequest, EffectTable};

use serde::{Deserialize, Serialize};

use crate::config::{Cleaning, RunConfig};
use crate::data::{adjust_dst, impute, ingest_path, DstReport, GridDataset, ImputeReport, IngestReport, MinMax};
use crate::error::Result;

/// A dataset after every cleaning step a run configuration asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub dataset: GridDataset,
    pub ingest: IngestReport,
    pub dst: Option<DstReport>,
    pub impute: Option<ImputeReport>,
    pub scaling: Vec<Option<MinMax>>,
}

/// Ingests the configured input, then applies min-max scaling, the
/// daylight-saving shift and imputation, in that order, where configured.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (ds, ingest) = ingest_path(&cfg.input, &cfg.ingest)?;
    prepare_dataset(&cfg.cleaning(), ds, ingest)
}

pub fn prepare_dataset(cfg: &Cleaning, mut ds: GridDataset, ingest: IngestReport) -> Result<Prepared> {
    let scaling = ds.apply_min_max(&cfg.scaled_dims(&ds)?)?;
    let dst = match &cfg.dst {
        Some(d) => {
            let (out, rep) = adjust_dst(&ds, d.timestamp()?)?;
            ds = out;
            Some(rep)
        }
        None => None,
    };
    let impute_rep = match &cfg.impute {
        Some(ic) => {
            let (out, rep) = impute(&ds, ic)?;
            ds = out;
            Some(rep)
        }
        None => None,
    };
    Ok(Prepared { dataset: ds, ingest, dst, impute: impute_rep, scaling })
}

/// Writes rows of string cells as CSV.
pub(crate) fn write_csv<W: std::io::Write>(writer: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
