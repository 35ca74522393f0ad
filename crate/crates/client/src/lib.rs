//! Thin async client for the hagp service.
//!
//! ```no_run
//! # async fn run() -> Result<(), hagp_client::ClientError> {
//! let client = hagp_client::Client::new("http://127.0.0.1:8080")?;
//! let health = client.health().await?;
//! assert_eq!(health.status, "ok");
//! # Ok(())
//! # }
//! ```

use std::time::Duration;

use reqwest::{Method, RequestBuilder, StatusCode, Url};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use hagp_api as api;
use hagp_api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service URL `{0}`")]
    Url(String),

    #[error("service returned {status} ({kind}): {message}")]
    Api { status: StatusCode, kind: String, message: String },

    #[error(transparent)]
    Http(#[from] reqwest::Error),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Http(e) => e.status(),
            ClientError::Url(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: &str) -> Result<Self> {
        let http = reqwest::Client::builder().build()?;
        Self::with_http(base, http)
    }

    /// Client whose requests give up after `timeout`.
    pub fn with_timeout(base: &str, timeout: Duration) -> Result<Self> {
        let http = reqwest::Client::builder().timeout(timeout).build()?;
        Self::with_http(base, http)
    }

    pub fn with_http(base: &str, http: reqwest::Client) -> Result<Self> {
        let mut base = Url::parse(base).map_err(|_| ClientError::Url(base.to_string()))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Url(base.to_string()));
        }
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        Ok(Client { base, http })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> Result<RequestBuilder> {
        let url = self.base.join(path.trim_start_matches('/')).map_err(|_| ClientError::Url(path.to_string()))?;
        Ok(self.http.request(method, url))
    }

    async fn send(req: RequestBuilder) -> Result<reqwest::Response> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let (kind, message) = match serde_json::from_str::<ApiError>(&text) {
            Ok(e) => (e.kind, e.error),
            Err(_) => ("unknown".to_string(), text),
        };
        Err(ClientError::Api { status, kind, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(Self::send(self.request(Method::GET, path)?).await?.json().await?)
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(Self::send(self.request(Method::POST, path)?.json(body)).await?.json().await?)
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("health").await
    }

    pub async fn create_dataset(&self, req: &CreateDataset) -> Result<DatasetInfo> {
        self.post("v1/datasets", req).await
    }

    pub async fn dataset(&self, id: &str) -> Result<DatasetInfo> {
        self.get(&format!("v1/datasets/{id}")).await
    }

    /// The dataset in the serialized grid CSV layout.
    pub async fn dataset_csv(&self, id: &str) -> Result<String> {
        Ok(Self::send(self.request(Method::GET, &format!("v1/datasets/{id}/csv"))?).await?.text().await?)
    }

    pub async fn clean_dataset(&self, id: &str, cleaning: &Cleaning) -> Result<DatasetInfo> {
        self.post(&format!("v1/datasets/{id}/clean"), cleaning).await
    }

    pub async fn fit(&self, req: &FitRequest) -> Result<ModelInfo> {
        self.post("v1/models/fit", req).await
    }

    pub async fn import_model(&self, req: &ImportRequest) -> Result<ModelInfo> {
        self.post("v1/models/import", req).await
    }

    pub async fn model(&self, id: &str) -> Result<ModelInfo> {
        self.get(&format!("v1/models/{id}")).await
    }

    pub async fn effects(&self, id: &str, req: &EffectsRequest) -> Result<EffectsResponse> {
        self.post(&format!("v1/models/{id}/effects"), req).await
    }

    pub async fn predict(&self, id: &str, req: &PredictRequest) -> Result<PredictResponse> {
        self.post(&format!("v1/models/{id}/predict"), req).await
    }

    pub async fn compare(&self, req: &CompareRequest) -> Result<CompareResponse> {
        self.post("v1/compare", req).await
    }

    pub async fn grid_search(&self, req: &GridSearchRequest) -> Result<GridSearchResult> {
        self.post("v1/grid-search", req).await
    }

    pub async fn bench(&self, cfg: &BenchConfig) -> Result<BenchResponse> {
        self.post("v1/bench", cfg).await
    }
}
