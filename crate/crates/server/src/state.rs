use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use hagp_api::{DatasetInfo, ModelInfo};
use hagp_core::data::GridDataset;
use hagp_core::FittedModel;

use crate::error::{ServiceError, ServiceResult};

pub struct StoredDataset {
    pub info: DatasetInfo,
    pub data: GridDataset,
}

pub struct StoredModel {
    pub info: ModelInfo,
    pub fitted: FittedModel,
    pub dataset: Arc<StoredDataset>,
}

/// In-memory registry of uploaded datasets and fitted models.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Registry>,
}

#[derive(Default)]
struct Registry {
    datasets: RwLock<HashMap<String, Arc<StoredDataset>>>,
    models: RwLock<HashMap<String, Arc<StoredModel>>>,
    next_dataset: AtomicU64,
    next_model: AtomicU64,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dataset_id(&self) -> String {
        format!("ds-{}", self.inner.next_dataset.fetch_add(1, Ordering::Relaxed) + 1)
    }

    pub fn model_id(&self) -> String {
        format!("m-{}", self.inner.next_model.fetch_add(1, Ordering::Relaxed) + 1)
    }

    pub fn insert_dataset(&self, ds: StoredDataset) -> Arc<StoredDataset> {
        let ds = Arc::new(ds);
        self.inner.datasets.write().expect("dataset registry poisoned").insert(ds.info.id.clone(), ds.clone());
        ds
    }

    pub fn insert_model(&self, m: StoredModel) -> Arc<StoredModel> {
        let m = Arc::new(m);
        self.inner.models.write().expect("model registry poisoned").insert(m.info.id.clone(), m.clone());
        m
    }

    pub fn dataset(&self, id: &str) -> ServiceResult<Arc<StoredDataset>> {
        self.inner
            .datasets
            .read()
            .expect("dataset registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no dataset `{id}`")))
    }

    pub fn model(&self, id: &str) -> ServiceResult<Arc<StoredModel>> {
        self.inner
            .models
            .read()
            .expect("model registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no model `{id}`")))
    }
}
