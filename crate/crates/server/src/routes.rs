use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::header::CONTENT_TYPE;
use axum::response::IntoResponse;
use axum::Json;
use hagp_api::{
    BenchConfig, BenchResponse, Cleaning, CompareRequest, CompareResponse, CreateDataset, DatasetInfo, EffectsRequest, EffectsResponse,
    FitRequest, GridSearchRequest, GridSearchResult, Health, ImportRequest, ModelInfo, PredictRequest, PredictResponse,
};
use hagp_core::config::default_kernel_specs;
use hagp_core::data::{ingest_reader, read_serialized, serialize, GridDataset, MinMax};
use hagp_core::gp::{fit, grid_points, grid_search_shape, predict, predict_points, QueryPoint};
use hagp_core::pipeline::{bench, compare, export_effects, prepare_dataset, EffectRequest, Prepared};
use hagp_core::{FittedModel, HyperParams, KernelSpec, ModelState, Point};

use crate::error::{ServiceError, ServiceResult};
use crate::state::{AppState, StoredDataset, StoredModel};

type Body<T> = Result<Json<T>, JsonRejection>;

async fn blocking<T, F>(f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ServiceResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await?
}

pub async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

fn stored_dataset(id: String, p: Prepared, ingested: bool) -> StoredDataset {
    let ds = p.dataset;
    let info = DatasetInfo {
        id,
        value_name: ds.value_name.clone(),
        dimensions: ds.dims.iter().map(|d| d.name.clone()).collect(),
        shape: ds.sizes(),
        n: ds.n(),
        missing: ds.missing_count(),
        originally_missing: ds.missing.iter().filter(|&&m| m).count(),
        ingest: ingested.then_some(p.ingest),
        dst: p.dst,
        impute: p.impute,
        scaling: p.scaling,
    };
    StoredDataset { info, data: ds }
}

pub async fn create_dataset(State(st): State<AppState>, body: Body<CreateDataset>) -> ServiceResult<Json<DatasetInfo>> {
    let Json(req) = body?;
    let id = st.dataset_id();
    let stored = blocking(move || {
        let (ds, report) = match &req.ingest {
            Some(spec) => {
                let (ds, r) = ingest_reader(req.csv.as_bytes(), spec)?;
                (ds, Some(r))
            }
            None => (read_serialized(req.csv.as_bytes())?, None),
        };
        let ingested = report.is_some();
        let prepared = prepare_dataset(&req.cleaning, ds, report.unwrap_or_default())?;
        Ok(stored_dataset(id, prepared, ingested))
    })
    .await?;
    tracing::info!(id = %stored.info.id, shape = ?stored.info.shape, "dataset created");
    Ok(Json(st.insert_dataset(stored).info.clone()))
}

pub async fn get_dataset(State(st): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<DatasetInfo>> {
    Ok(Json(st.dataset(&id)?.info.clone()))
}

pub async fn dataset_csv(State(st): State<AppState>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    let ds = st.dataset(&id)?;
    let text = blocking(move || {
        let mut buf = Vec::new();
        serialize(&ds.data, &mut buf)?;
        String::from_utf8(buf).map_err(|e| ServiceError::Internal(e.to_string()))
    })
    .await?;
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], text))
}

/// Applies further cleaning to a stored dataset, registering the result
/// under a new id.
pub async fn clean_dataset(State(st): State<AppState>, Path(id): Path<String>, body: Body<Cleaning>) -> ServiceResult<Json<DatasetInfo>> {
    let Json(cleaning) = body?;
    let parent = st.dataset(&id)?;
    for dim in cleaning.scaled_dims(&parent.data)? {
        if parent.info.scaling.get(dim).is_some_and(|s| s.is_some()) {
            return Err(ServiceError::bad_request(format!("dimension {} of dataset {id} is already scaled", parent.info.dimensions[dim])));
        }
    }
    let new_id = st.dataset_id();
    let stored = blocking(move || {
        let p = prepare_dataset(&cleaning, parent.data.clone(), Default::default())?;
        let scaling = p.scaling.iter().zip(&parent.info.scaling).map(|(new, old)| new.clone().or_else(|| old.clone())).collect();
        let mut stored = stored_dataset(new_id, Prepared { scaling, ..p }, false);
        stored.info.ingest = parent.info.ingest.clone();
        stored.info.dst = stored.info.dst.take().or_else(|| parent.info.dst.clone());
        stored.info.impute = stored.info.impute.take().or_else(|| parent.info.impute.clone());
        Ok(stored)
    })
    .await?;
    Ok(Json(st.insert_dataset(stored).info.clone()))
}

fn kernel_specs(kernels: Vec<KernelSpec>, d: usize) -> ServiceResult<Vec<KernelSpec>> {
    if kernels.is_empty() {
        return Ok(default_kernel_specs(d));
    }
    if kernels.len() != d {
        return Err(ServiceError::bad_request(format!("{} kernels given for {d} dimensions", kernels.len())));
    }
    for k in &kernels {
        k.validate()?;
    }
    Ok(kernels)
}

fn register(st: &AppState, name: String, ds: Arc<StoredDataset>, fitted: FittedModel, include_w: bool) -> ModelInfo {
    let mut export = fitted.export(include_w);
    if ds.info.scaling.iter().any(|s| s.is_some()) {
        export.scaling = Some(ds.info.scaling.clone());
    }
    let info = ModelInfo { id: st.model_id(), name, dataset: ds.info.id.clone(), export };
    st.insert_model(StoredModel { info, fitted, dataset: ds }).info.clone()
}

pub async fn fit_model(State(st): State<AppState>, body: Body<FitRequest>) -> ServiceResult<Json<ModelInfo>> {
    let Json(req) = body?;
    let ds = st.dataset(&req.dataset)?;
    let d = ds.data.d();
    let (name, terms) = req.model.resolve(0, d)?;
    let specs = kernel_specs(req.kernels, d)?;
    let data = ds.clone();
    let fitted = blocking(move || {
        let y = data.data.complete_y()?;
        let ms = ModelState::from_grid(&data.data, specs, terms, HyperParams::ones(d))?;
        Ok(fit(&ms, y, &req.fit)?)
    })
    .await?;
    tracing::info!(model = %name, logml = fitted.logml, "model fitted");
    Ok(Json(register(&st, name, ds, fitted, req.include_w)))
}

pub async fn import_model(State(st): State<AppState>, body: Body<ImportRequest>) -> ServiceResult<Json<ModelInfo>> {
    let Json(req) = body?;
    let ds = st.dataset(&req.dataset)?;
    let data = ds.clone();
    let export = req.export.clone();
    let fitted = blocking(move || {
        let y = data.data.complete_y()?;
        Ok(FittedModel::from_export(&export, data.data.levels(), y)?)
    })
    .await?;
    let name = req.name.unwrap_or_else(|| "imported".into());
    Ok(Json(register(&st, name, ds, fitted, req.export.w.is_some())))
}

pub async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<ModelInfo>> {
    Ok(Json(st.model(&id)?.info.clone()))
}

pub async fn effects(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Body<EffectsRequest>,
) -> ServiceResult<Json<EffectsResponse>> {
    let Json(req) = body?;
    let m = st.model(&id)?;
    let requests: Vec<EffectRequest> = req.requests.iter().map(|r| r.parse()).collect::<Result<_, _>>()?;
    let tables = blocking(move || {
        requests.iter().map(|r| export_effects(&m.fitted, &m.dataset.data, r, req.variance).map_err(ServiceError::from)).collect()
    })
    .await?;
    Ok(Json(EffectsResponse { tables }))
}

fn scale(scaling: &[Option<MinMax>], l: usize, p: &[f64]) -> Point {
    match scaling.get(l) {
        Some(Some(mm)) => mm.apply(p),
        _ => p.to_vec(),
    }
}

fn check_point(ds: &GridDataset, p: &[Point], what: &str) -> ServiceResult<()> {
    if p.len() != ds.d() {
        return Err(ServiceError::bad_request(format!("{what} has {} inputs, the model has {} dimensions", p.len(), ds.d())));
    }
    for (dim, x) in ds.dims.iter().zip(p) {
        if x.len() != dim.input_dim() {
            return Err(ServiceError::bad_request(format!(
                "{what}: dimension {} takes {} coordinates, got {}",
                dim.name,
                dim.input_dim(),
                x.len()
            )));
        }
    }
    Ok(())
}

fn training_labels(ds: &GridDataset) -> Vec<Vec<String>> {
    (0..ds.n()).map(|i| ds.dims.iter().zip(ds.unravel(i)).map(|(d, k)| d.labels[k].clone()).collect()).collect()
}

pub async fn predict_model(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Body<PredictRequest>,
) -> ServiceResult<Json<PredictResponse>> {
    let Json(req) = body?;
    let m = st.model(&id)?;
    let ds = &m.dataset.data;
    let scaling = m.dataset.info.scaling.clone();
    let noise = req.include_noise;
    let resp = match (req.points, req.grid) {
        (Some(_), Some(_)) => return Err(ServiceError::bad_request("give either points or a grid, not both")),
        (Some(points), None) => {
            for (i, p) in points.iter().enumerate() {
                check_point(ds, p, &format!("point {}", i + 1))?;
            }
            let pts: Vec<QueryPoint> = points.iter().map(|p| p.iter().enumerate().map(|(l, x)| scale(&scaling, l, x)).collect()).collect();
            blocking(move || {
                let pp = predict_points(&m.fitted, &pts, noise)?;
                Ok(PredictResponse { points: pts, labels: None, means: pp.means, variances: pp.variances, clamped: pp.clamped })
            })
            .await?
        }
        (None, Some(grid)) => {
            if grid.len() != ds.d() {
                return Err(ServiceError::bad_request(format!("grid has {} dimensions, the model has {}", grid.len(), ds.d())));
            }
            let grid: Vec<Vec<Point>> = grid.iter().enumerate().map(|(l, lv)| lv.iter().map(|x| scale(&scaling, l, x)).collect()).collect();
            for p in grid_points(&grid).iter().take(1) {
                check_point(ds, p, "grid")?;
            }
            blocking(move || {
                let pr = predict(&m.fitted, &grid, noise)?;
                Ok(PredictResponse {
                    points: grid_points(&grid),
                    labels: None,
                    means: pr.means,
                    variances: pr.variances,
                    clamped: pr.clamped,
                })
            })
            .await?
        }
        (None, None) => {
            blocking(move || {
                let ds = &m.dataset.data;
                let grid = ds.levels();
                let pr = predict(&m.fitted, &grid, noise)?;
                Ok(PredictResponse {
                    points: grid_points(&grid),
                    labels: Some(training_labels(ds)),
                    means: pr.means,
                    variances: pr.variances,
                    clamped: pr.clamped,
                })
            })
            .await?
        }
    };
    Ok(Json(resp))
}

pub async fn compare_models(State(st): State<AppState>, body: Body<CompareRequest>) -> ServiceResult<Json<CompareResponse>> {
    let Json(req) = body?;
    if req.models.is_empty() {
        return Err(ServiceError::bad_request("the model list is empty"));
    }
    let ds = st.dataset(&req.dataset)?;
    let d = ds.data.d();
    let models = req.models.iter().enumerate().map(|(k, m)| m.resolve(k, d)).collect::<Result<Vec<_>, _>>()?;
    let specs = kernel_specs(req.kernels, d)?;
    let data = ds.clone();
    let fit_cfg = req.fit;
    let comparison = blocking(move || Ok(compare(&data.data, &specs, &models, &fit_cfg)?)).await?;
    let registered = comparison
        .models
        .into_iter()
        .zip(&comparison.rows)
        .map(|(fm, row)| fm.map(|fm| register(&st, row.model.clone(), ds.clone(), fm, req.include_w)))
        .collect();
    Ok(Json(CompareResponse { rows: comparison.rows, models: registered }))
}

pub async fn grid_search(State(st): State<AppState>, body: Body<GridSearchRequest>) -> ServiceResult<Json<GridSearchResult>> {
    let Json(req) = body?;
    let ds = st.dataset(&req.dataset)?;
    let d = ds.data.d();
    let dim =
        ds.data.dim_index(&req.dimension).ok_or_else(|| ServiceError::bad_request(format!("no dimension named `{}`", req.dimension)))?;
    let (_, terms) = req.model.resolve(0, d)?;
    let specs = kernel_specs(req.kernels, d)?;
    let result = blocking(move || {
        let y = ds.data.complete_y()?;
        let ms = ModelState::from_grid(&ds.data, specs, terms, HyperParams::ones(d))?;
        Ok(grid_search_shape(&ms, y, dim, &req.candidates, &req.fit)?)
    })
    .await?;
    Ok(Json(result))
}

pub async fn run_bench(body: Body<BenchConfig>) -> ServiceResult<Json<BenchResponse>> {
    let Json(cfg) = body?;
    let rows = blocking(move || Ok(bench(&cfg))).await?;
    Ok(Json(BenchResponse { rows }))
}
