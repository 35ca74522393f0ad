use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hagp_client::api::{
    BenchConfig, Cleaning, CompareRequest, CreateDataset, DatasetInfo, EffectsRequest, FitRequest, ImportRequest, ModelEntry, ModelExport,
    ModelInfo, PredictRequest, ScalingConfig,
};
use hagp_client::Client;
use hagp_core::config::RunConfig;
use hagp_core::pipeline::{parse_shape, write_bench_csv, write_comparison_csv};
use tokio::task::JoinHandle;

use crate::files::{create_file, read_json, read_points, safe_name, write_json, write_predictions};
use crate::{DataArgs, Global, ModelSource};

/// A client plus, when no `--server` was given, the in-process service it
/// talks to.
struct Session {
    client: Client,
    local: Option<JoinHandle<std::io::Result<()>>>,
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(h) = self.local.take() {
            h.abort();
        }
    }
}

async fn connect(g: &Global) -> Result<Session> {
    match &g.server {
        Some(url) => {
            if g.threads.is_some() {
                tracing::warn!("--threads only applies to the in-process service");
            }
            let client = Client::new(url)?;
            client.health().await.with_context(|| format!("no hagp service answers at {url}"))?;
            Ok(Session { client, local: None })
        }
        None => {
            let (addr, handle) = hagp_server::spawn("127.0.0.1:0").await.context("cannot start the in-process service")?;
            tracing::debug!(%addr, "in-process service started");
            Ok(Session { client: Client::new(&format!("http://{addr}"))?, local: Some(handle) })
        }
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let path = g.config.as_ref().context("this command needs --config")?;
    let mut cfg = RunConfig::load(path).with_context(|| format!("cannot load {}", path.display()))?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(engine) = g.engine {
        cfg.engine = engine;
    }
    if let Some(out) = &g.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn output_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

async fn upload(client: &Client, cfg: &RunConfig, data: &DataArgs, cleaning: Cleaning) -> Result<DatasetInfo> {
    let req = match &data.grid {
        Some(grid) => {
            let csv = fs::read_to_string(grid).with_context(|| format!("cannot read {}", grid.display()))?;
            CreateDataset { csv, ingest: None, cleaning: Cleaning { scaling: cleaning.scaling, dst: None, impute: None } }
        }
        None => {
            let csv = fs::read_to_string(&cfg.input).with_context(|| format!("cannot read {}", cfg.input.display()))?;
            let header: Vec<String> = csv::Reader::from_reader(csv.as_bytes()).headers()?.iter().map(String::from).collect();
            cfg.check_columns(&header)?;
            CreateDataset { csv, ingest: Some(cfg.ingest.clone()), cleaning }
        }
    };
    Ok(client.create_dataset(&req).await?)
}

fn report_dataset(ds: &DatasetInfo) {
    let shape: Vec<String> = ds.shape.iter().map(|s| s.to_string()).collect();
    println!("dataset {}: {} = {} cells, {} missing ({} originally)", ds.id, shape.join("x"), ds.n, ds.missing, ds.originally_missing);
    if let Some(rep) = &ds.ingest {
        for d in &rep.dropped {
            println!("  dropped {} ({:.1}% missing, longest gap {})", d.label, 100.0 * d.missing_fraction, d.longest_missing_run);
        }
    }
}

pub async fn ingest(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    let s = connect(g).await?;
    let ds = upload(&s.client, &cfg, &DataArgs::default(), Cleaning::default()).await?;
    let out = output_dir(&cfg.output)?;
    fs::write(out.join("grid.csv"), s.client.dataset_csv(&ds.id).await?)?;
    write_json(&out.join("ingest_report.json"), &ds)?;
    report_dataset(&ds);
    println!("wrote {}", out.join("grid.csv").display());
    Ok(())
}

pub async fn impute(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    let s = connect(g).await?;
    let cleaning =
        Cleaning { scaling: ScalingConfig::default(), dst: cfg.dst.clone(), impute: Some(cfg.impute.clone().unwrap_or_default()) };
    let ds = upload(&s.client, &cfg, &DataArgs::default(), cleaning).await?;
    let out = output_dir(&cfg.output)?;
    fs::write(out.join("grid_clean.csv"), s.client.dataset_csv(&ds.id).await?)?;
    write_json(&out.join("clean_report.json"), &ds)?;
    report_dataset(&ds);
    if let Some(dst) = &ds.dst {
        println!("daylight-saving shift applied: {}", dst.applied);
    }
    if let Some(imp) = &ds.impute {
        println!("imputed {} values", imp.imputed);
    }
    println!("wrote {}", out.join("grid_clean.csv").display());
    Ok(())
}

/// The configured model called `name`, or the first one.
fn select_model(cfg: &RunConfig, name: Option<&str>) -> Result<ModelEntry> {
    let resolved = cfg.resolved_models()?;
    let k = match name {
        Some(n) => resolved.iter().position(|(m, _)| m == n).with_context(|| {
            let names: Vec<&str> = resolved.iter().map(|(m, _)| m.as_str()).collect();
            format!("no model `{n}` in the configuration (have {})", names.join(", "))
        })?,
        None => 0,
    };
    Ok(ModelEntry { name: Some(resolved[k].0.clone()), ..cfg.models[k].clone() })
}

async fn fit_entry(client: &Client, cfg: &RunConfig, ds: &DatasetInfo, model: ModelEntry, include_w: bool) -> Result<ModelInfo> {
    let req = FitRequest { dataset: ds.id.clone(), kernels: cfg.kernel_specs(), model, fit: cfg.fit_config(), include_w };
    Ok(client.fit(&req).await?)
}

fn write_model(out: &Path, info: &ModelInfo) -> Result<PathBuf> {
    let path = out.join("models").join(format!("{}.json", safe_name(&info.name)));
    fs::create_dir_all(path.parent().expect("models directory"))?;
    write_json(&path, &info.export)?;
    Ok(path)
}

fn report_model(info: &ModelInfo) {
    let hp = &info.export.hyperparameters;
    let alpha: Vec<String> = hp.alpha.iter().map(|a| format!("{a:.6}")).collect();
    println!(
        "{}: logml {:.6}, alpha0 {:.6}, alpha [{}], sigma {:.6}, {} iterations{}",
        info.name,
        info.export.logml,
        hp.alpha0,
        alpha.join(", "),
        hp.sigma,
        info.export.fit_report.iterations,
        if info.export.fit_report.converged { "" } else { " (not converged)" }
    );
}

pub async fn fit(g: &Global, data: &DataArgs, model: Option<&str>, with_w: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let s = connect(g).await?;
    let ds = upload(&s.client, &cfg, data, cfg.cleaning()).await?;
    let info = fit_entry(&s.client, &cfg, &ds, select_model(&cfg, model)?, with_w).await?;
    let path = write_model(&output_dir(&cfg.output)?, &info)?;
    report_model(&info);
    println!("wrote {}", path.display());
    Ok(())
}

pub async fn compare(g: &Global, data: &DataArgs, with_w: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let s = connect(g).await?;
    let ds = upload(&s.client, &cfg, data, cfg.cleaning()).await?;
    let req = CompareRequest {
        dataset: ds.id.clone(),
        kernels: cfg.kernel_specs(),
        models: cfg.models.clone(),
        fit: cfg.fit_config(),
        include_w: with_w,
    };
    let resp = s.client.compare(&req).await?;
    let out = output_dir(&cfg.output)?;
    for info in resp.models.iter().flatten() {
        write_model(&out, info)?;
    }
    let table = out.join("comparison.csv");
    write_comparison_csv(&resp.rows, ds.shape.len(), create_file(&table)?)?;
    println!("{:<16} {:>18} {:>18}", "model", "logml", "delta");
    for r in &resp.rows {
        match (r.logml, r.delta_logml) {
            (Some(v), Some(dl)) => println!("{:<16} {v:>18.4} {dl:>18.4}", r.model),
            (Some(v), None) => println!("{:<16} {v:>18.4} {:>18}", r.model, ""),
            _ => println!("{:<16} failed: {}", r.model, r.error.as_deref().unwrap_or("unknown error")),
        }
    }
    println!("wrote {}", table.display());
    Ok(())
}

async fn obtain_model(
    client: &Client,
    cfg: &RunConfig,
    ds: &DatasetInfo,
    source: &ModelSource,
    default_name: Option<&str>,
) -> Result<ModelInfo> {
    match &source.model_file {
        Some(path) => {
            let export: ModelExport =
                serde_json::from_value(read_json(path)?).with_context(|| format!("{} is not a model export", path.display()))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            Ok(client.import_model(&ImportRequest { dataset: ds.id.clone(), name, export }).await?)
        }
        None => {
            let entry = select_model(cfg, source.model.as_deref().or(default_name))?;
            fit_entry(client, cfg, ds, entry, false).await
        }
    }
}

pub async fn effects(g: &Global, data: &DataArgs, source: &ModelSource, requests: Vec<String>, variance: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let requests = if requests.is_empty() { cfg.effects.requests.clone() } else { requests };
    if requests.is_empty() {
        bail!("no effect requests: pass --request or list them under [effects] in the configuration");
    }
    let s = connect(g).await?;
    let ds = upload(&s.client, &cfg, data, cfg.cleaning()).await?;
    let model = obtain_model(&s.client, &cfg, &ds, source, cfg.effects.model.as_deref()).await?;
    let req = EffectsRequest { requests, variance: variance || cfg.effects.variance };
    let resp = s.client.effects(&model.id, &req).await?;
    let dir = output_dir(&cfg.output.join("effects"))?;
    for t in &resp.tables {
        let path = dir.join(format!("{}.csv", t.file_stem()));
        t.write_csv(create_file(&path)?)?;
        println!("{}: {} rows -> {}", t.request, t.mean.len(), path.display());
    }
    Ok(())
}

pub async fn predict(g: &Global, data: &DataArgs, source: &ModelSource, points: Option<&Path>, include_noise: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let s = connect(g).await?;
    let ds = upload(&s.client, &cfg, data, cfg.cleaning()).await?;
    let model = obtain_model(&s.client, &cfg, &ds, source, None).await?;
    let points = points.map(|p| read_points(p, &ds.dimensions)).transpose()?;
    let resp = s.client.predict(&model.id, &PredictRequest { points, grid: None, include_noise }).await?;
    let path = output_dir(&cfg.output)?.join("predictions.csv");
    write_predictions(&path, &ds.dimensions, &resp)?;
    if resp.clamped > 0 {
        println!("{} negative variances from rounding were set to zero", resp.clamped);
    }
    println!("{}: {} predictions -> {}", model.name, resp.means.len(), path.display());
    Ok(())
}

pub async fn bench(g: &Global, sizes: &str, preset: &str, dense: bool) -> Result<()> {
    let cfg = g.config.as_ref().map(|_| load_config(g)).transpose()?;
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let out = g.out.clone().or(cfg.map(|c| c.output)).unwrap_or_else(|| PathBuf::from("out"));
    let sizes = sizes.split(',').map(|s| parse_shape(s.trim())).collect::<Result<Vec<_>, _>>()?;
    let s = connect(g).await?;
    let resp = s.client.bench(&BenchConfig { sizes, preset: preset.into(), seed, dense }).await?;
    let path = output_dir(&out)?.join("bench.csv");
    write_bench_csv(&resp.rows, create_file(&path)?)?;
    for r in &resp.rows {
        let shape: Vec<String> = r.shape.iter().map(|v| v.to_string()).collect();
        let speedup = r.speedup().map(|x| format!("{x:.1}x")).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} n={:<8} structured {:.4}s dense {} speedup {speedup} {}",
            shape.join("x"),
            r.n,
            r.structured_logml_s,
            r.dense_logml_s.map(|t| format!("{t:.4}s")).unwrap_or_else(|| "-".into()),
            r.note.as_deref().unwrap_or("")
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub async fn serve(addr: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
    println!("hagp service listening on http://{}", listener.local_addr()?);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    hagp_server::serve(listener, shutdown).await?;
    Ok(())
}
