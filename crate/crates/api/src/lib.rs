//! JSON bodies exchanged with the hagp service.
//!
//! | method | path                          | body                | response            |
//! |--------|-------------------------------|---------------------|---------------------|
//! | GET    | `/health`                     |                     | [`Health`]          |
//! | POST   | `/v1/datasets`                | [`CreateDataset`]   | [`DatasetInfo`]     |
//! | GET    | `/v1/datasets/{id}`           |                     | [`DatasetInfo`]     |
//! | GET    | `/v1/datasets/{id}/csv`       |                     | serialized grid CSV |
//! | POST   | `/v1/datasets/{id}/clean`     | [`Cleaning`]        | [`DatasetInfo`]     |
//! | POST   | `/v1/models/fit`              | [`FitRequest`]      | [`ModelInfo`]       |
//! | POST   | `/v1/models/import`           | [`ImportRequest`]   | [`ModelInfo`]       |
//! | GET    | `/v1/models/{id}`             |                     | [`ModelInfo`]       |
//! | POST   | `/v1/models/{id}/effects`     | [`EffectsRequest`]  | [`EffectsResponse`] |
//! | POST   | `/v1/models/{id}/predict`     | [`PredictRequest`]  | [`PredictResponse`] |
//! | POST   | `/v1/compare`                 | [`CompareRequest`]  | [`CompareResponse`] |
//! | POST   | `/v1/grid-search`             | [`GridSearchRequest`] | [`GridSearchResult`] |
//! | POST   | `/v1/bench`                   | [`BenchConfig`]     | [`BenchResponse`]   |
//!
//! Errors come back as [`ApiError`] with a 4xx or 5xx status.

use serde::{Deserialize, Serialize};

pub use hagp_core::config::{Cleaning, DstConfig, ModelEntry, ScalingConfig};
pub use hagp_core::data::{DstReport, ImputeConfig, ImputeReport, IngestReport, IngestSpec, MinMax};
pub use hagp_core::gp::{GridQuery, GridSearchResult, ModelExport, QueryPoint};
pub use hagp_core::pipeline::{BenchConfig, BenchRow, ComparisonRow, EffectTable};
pub use hagp_core::{FitConfig, KernelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    /// Short machine-readable category, e.g. `not_found` or `invalid_request`.
    pub kind: String,
}

/// Upload of a long-format panel CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateDataset {
    pub csv: String,
    /// Column mapping; when absent the CSV must be a serialized grid.
    #[serde(default)]
    pub ingest: Option<IngestSpec>,
    #[serde(default)]
    pub cleaning: Cleaning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub value_name: String,
    pub dimensions: Vec<String>,
    pub shape: Vec<usize>,
    pub n: usize,
    /// Cells currently without a value.
    pub missing: usize,
    /// Cells originally without a value, including filled ones.
    pub originally_missing: usize,
    #[serde(default)]
    pub ingest: Option<IngestReport>,
    #[serde(default)]
    pub dst: Option<DstReport>,
    #[serde(default)]
    pub impute: Option<ImputeReport>,
    /// Per dimension, the min-max map applied to its inputs.
    #[serde(default)]
    pub scaling: Vec<Option<MinMax>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub dataset: String,
    /// One per dimension; the default kernel everywhere when empty.
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    pub model: ModelEntry,
    #[serde(default)]
    pub fit: FitConfig,
    /// Includes the weight vector in the returned exports.
    #[serde(default)]
    pub include_w: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub name: String,
    pub dataset: String,
    pub export: ModelExport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportRequest {
    pub dataset: String,
    #[serde(default)]
    pub name: Option<String>,
    pub export: ModelExport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub dataset: String,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub fit: FitConfig,
    /// Includes the weight vector in the returned exports.
    #[serde(default)]
    pub include_w: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub rows: Vec<ComparisonRow>,
    /// Registered models, aligned with `rows`; `None` where the fit failed.
    pub models: Vec<Option<ModelInfo>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectsRequest {
    /// Requests such as `3`, `1:3` or `3+1:3@station=KC1`.
    pub requests: Vec<String>,
    #[serde(default)]
    pub variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectsResponse {
    pub tables: Vec<EffectTable>,
}

/// Query for the full posterior: explicit points, a grid, or (neither) the
/// training grid. Explicit inputs are in the units of the uploaded data;
/// the dataset's min-max maps are applied by the service.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(default)]
    pub points: Option<Vec<QueryPoint>>,
    #[serde(default)]
    pub grid: Option<GridQuery>,
    /// Adds the noise variance to every predictive variance.
    #[serde(default)]
    pub include_noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    /// Evaluated inputs, after min-max scaling.
    pub points: Vec<QueryPoint>,
    /// Level labels per point when the query was the training grid.
    #[serde(default)]
    pub labels: Option<Vec<Vec<String>>>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Variances raised from a negative rounding result to zero.
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchRequest {
    pub dataset: String,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    pub model: ModelEntry,
    /// Name of the dimension whose Hurst coefficient is searched.
    pub dimension: String,
    pub candidates: Vec<f64>,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResponse {
    pub rows: Vec<BenchRow>,
}
