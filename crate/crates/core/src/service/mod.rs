//! The explanation service: a loaded model plus its inference rows, a
//! prediction table, and cached rendered explanations.
//!
//! [`ExplainService`] is transport-agnostic; [`http`] puts it behind an HTTP
//! API and the FFI crate wraps it directly.

pub mod cache;
pub mod http;

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{feature_matrix, read_csv_file, split, Dataset, FeatureMatrix, FeatureVector};
use crate::explanation::{ExplanationMethod, Family};
use crate::forest::{load_file, Forest};
use crate::lime::{explain_lime, lime_variant, LimeConfig};
use crate::render::{render, AccessibleExplanation};
use crate::shap::{explain_shap, sample_background, shap_variant, ShapConfig};

pub use cache::{CacheKey, CacheStats, ExplanationCache};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("service not ready: {0}")]
    NotReady(String),
    #[error("no prediction row with id {0}")]
    RowNotFound(String),
    #[error("{0}")]
    UnknownMethod(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable code used in error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotReady(_) => "service_not_ready",
            Self::RowNotFound(_) => "row_not_found",
            Self::UnknownMethod(_) => "unknown_method",
            Self::Internal(_) => "internal_error",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Self::NotReady(_) => 503,
            Self::RowNotFound(_) => 404,
            Self::UnknownMethod(_) => 400,
            Self::Internal(_) => 500,
        }
    }
}

/// The scenario the deployment is framed in, served as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub impact: String,
    pub function: String,
    pub transparency: String,
    pub reasoning: String,
    pub persona_name: String,
    pub description: String,
}

impl Default for ScenarioMeta {
    fn default() -> Self {
        Self {
            impact: "Third-Party AI".into(),
            function: "Descriptive AI".into(),
            transparency: "Black-Box AI".into(),
            reasoning: "Deductive Reasoning".into(),
            persona_name: "Caroline".into(),
            description: "Urban traffic management: a traffic manager who uses a screen reader \
                          reviews predicted vehicle flow per loop detector and asks why the \
                          model predicted it before acting on any recommendation."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row_id: usize,
    pub pred_flow: f64,
    pub city: String,
    pub detector: String,
    pub speed: f64,
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub ready: bool,
    pub model_loaded: bool,
    pub rows: usize,
    pub cache: CacheStats,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExplainerConfig {
    pub lime: LimeConfig,
    pub shap: ShapConfig,
}

/// Everything needed to answer requests, immutable once built.
#[derive(Debug)]
pub struct ModelContext {
    pub forest: Arc<Forest>,
    pub inference: Dataset,
    pub features: FeatureMatrix,
    pub predictions: Vec<f64>,
    pub background: FeatureMatrix,
}

impl ModelContext {
    pub fn new(forest: Arc<Forest>, inference: Dataset, background_pool: &FeatureMatrix, shap: &ShapConfig) -> Self {
        let features = feature_matrix(&inference);
        let predictions = forest.predict_batch(&features);
        Self {
            forest,
            inference,
            features,
            predictions,
            background: sample_background(background_pool, shap),
        }
    }

    /// Splits `data` the way the model's training run did (when the artifact
    /// records it) and uses the training side as the SHAP background pool.
    pub fn from_dataset(forest: Arc<Forest>, data: &Dataset, shap: &ShapConfig) -> Result<Self, ServiceError> {
        match forest.split {
            Some(spec) => {
                let (train, inference) = split(data, spec.train_fraction, spec.seed)
                    .map_err(|e| ServiceError::NotReady(e.to_string()))?;
                let pool = feature_matrix(&train);
                Ok(Self::new(forest, inference, &pool, shap))
            }
            None => {
                let pool = feature_matrix(data);
                Ok(Self::new(forest, data.clone(), &pool, shap))
            }
        }
    }

    pub fn prediction_table(&self) -> Vec<PredictionRow> {
        self.inference
            .records
            .iter()
            .zip(&self.predictions)
            .enumerate()
            .map(|(row_id, (r, &pred_flow))| PredictionRow {
                row_id,
                pred_flow,
                city: r.city.clone(),
                detector: r.detid.clone(),
                speed: r.speed,
                occupancy: r.occ,
            })
            .collect()
    }

    pub fn features_of(&self, row_id: usize) -> Result<FeatureVector, ServiceError> {
        self.features
            .rows
            .get(row_id)
            .copied()
            .ok_or_else(|| ServiceError::RowNotFound(row_id.to_string()))
    }
}

/// Runs the matching explainer and renders the result.
pub fn compute_explanation(
    forest: &Forest,
    background: &FeatureMatrix,
    x: &FeatureVector,
    method: ExplanationMethod,
    cfg: &ExplainerConfig,
) -> Result<AccessibleExplanation, ServiceError> {
    let internal = |e: &dyn std::fmt::Display| ServiceError::Internal(e.to_string());
    let explanation = match method.family() {
        Family::Lime => {
            let e = explain_lime(forest, x, &forest.training_stats, &cfg.lime).map_err(|e| internal(&e))?;
            lime_variant(&e, method.variant())
        }
        Family::Shap => {
            let e = explain_shap(forest, x, background, &cfg.shap).map_err(|e| internal(&e))?;
            shap_variant(&e, method.variant())
        }
    };
    render(&explanation, method).map_err(|e| internal(&e))
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    pub data_path: PathBuf,
    pub explainers: ExplainerConfig,
}

impl ServiceConfig {
    pub fn new(model_path: impl Into<PathBuf>, data_path: impl Into<PathBuf>) -> Self {
        Self {
            model_path: model_path.into(),
            data_path: data_path.into(),
            explainers: ExplainerConfig::default(),
        }
    }
}

#[derive(Default)]
struct State {
    forest: Option<Arc<Forest>>,
    context: Option<Arc<ModelContext>>,
    last_error: Option<String>,
}

pub struct ExplainService {
    config: ServiceConfig,
    state: RwLock<State>,
    cache: ExplanationCache,
    scenario: ScenarioMeta,
}

impl ExplainService {
    /// A service with nothing loaded yet; every data endpoint reports
    /// not-ready until [`refresh`](Self::refresh) succeeds.
    pub fn unloaded(config: ServiceConfig) -> Self {
        Self {
            config,
            state: RwLock::new(State::default()),
            cache: ExplanationCache::new(),
            scenario: ScenarioMeta::default(),
        }
    }

    /// Loads model and data from the configured paths. Load failures leave the
    /// service running but not ready.
    pub fn open(config: ServiceConfig) -> Self {
        let svc = Self::unloaded(config);
        let _ = svc.refresh();
        svc
    }

    pub fn from_context(context: ModelContext, explainers: ExplainerConfig) -> Self {
        let svc = Self::unloaded(ServiceConfig {
            model_path: PathBuf::new(),
            data_path: PathBuf::new(),
            explainers,
        });
        {
            let mut st = svc.state.write().unwrap_or_else(|e| e.into_inner());
            st.forest = Some(Arc::clone(&context.forest));
            st.context = Some(Arc::new(context));
        }
        svc
    }

    /// Loads the model if it is not loaded yet, then re-reads the data file.
    pub fn refresh(&self) -> Result<(), ServiceError> {
        let loaded = self.read_state().forest.clone();
        let forest = match loaded {
            Some(f) => f,
            None => match load_file(&self.config.model_path) {
                Ok(f) => {
                    let f = Arc::new(f);
                    self.write_state().forest = Some(Arc::clone(&f));
                    f
                }
                Err(e) => return Err(self.fail(format!("model {}: {e}", self.config.model_path.display()))),
            },
        };
        let data = read_csv_file(&self.config.data_path)
            .map_err(|e| self.fail(format!("data {}: {e}", self.config.data_path.display())))?;
        let context = ModelContext::from_dataset(forest, &data, &self.config.explainers.shap)
            .map_err(|e| self.fail(e.to_string()))?;
        let mut st = self.write_state();
        st.context = Some(Arc::new(context));
        st.last_error = None;
        Ok(())
    }

    fn fail(&self, msg: String) -> ServiceError {
        self.write_state().last_error = Some(msg.clone());
        ServiceError::NotReady(msg)
    }

    fn read_state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn context(&self) -> Result<Arc<ModelContext>, ServiceError> {
        let st = self.read_state();
        st.context.clone().ok_or_else(|| {
            ServiceError::NotReady(
                st.last_error
                    .clone()
                    .unwrap_or_else(|| "model and data not loaded".to_string()),
            )
        })
    }

    pub fn get_predictions(&self) -> Result<Vec<PredictionRow>, ServiceError> {
        Ok(self.context()?.prediction_table())
    }

    /// Serialized [`AccessibleExplanation`] for a row, from cache when the same
    /// method and feature values were explained before.
    pub fn get_explanation(&self, row_id: usize, method: ExplanationMethod) -> Result<Arc<str>, ServiceError> {
        let ctx = self.context()?;
        let x = ctx.features_of(row_id)?;
        let key = CacheKey::new(method, &x);
        let cfg = self.config.explainers;
        self.cache
            .get_or_compute(key, || {
                compute_explanation(&ctx.forest, &ctx.background, &x, method, &cfg).map(|e| e.to_json())
            })
            .map(|(payload, _)| payload)
    }

    /// Same as [`get_explanation`](Self::get_explanation) with the method given
    /// by its wire name.
    pub fn get_explanation_named(&self, row_id: usize, method: &str) -> Result<Arc<str>, ServiceError> {
        let method = method
            .parse::<ExplanationMethod>()
            .map_err(|e| ServiceError::UnknownMethod(e.to_string()))?;
        self.get_explanation(row_id, method)
    }

    pub fn get_scenario(&self) -> &ScenarioMeta {
        &self.scenario
    }

    pub fn health(&self) -> Health {
        let st = self.read_state();
        Health {
            ready: st.context.is_some(),
            model_loaded: st.forest.is_some(),
            rows: st.context.as_ref().map_or(0, |c| c.inference.len()),
            cache: self.cache.stats(),
        }
    }

    pub fn cache(&self) -> &ExplanationCache {
        &self.cache
    }

    pub fn model_path(&self) -> &Path {
        &self.config.model_path
    }
}
