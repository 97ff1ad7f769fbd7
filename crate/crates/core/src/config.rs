//! Runtime configuration: data paths, backend selection, sampling overrides.
//!
//! TOML on disk; `PEROMAS_BACKEND_URL` and `PEROMAS_API_KEY` override the
//! file so secrets stay out of configs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ingest_dataset_path, IonTable};
use crate::gateway::{ChatBackend, HttpBackend, MockBackend};
use crate::tools::{Corpus, ToolContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Deterministic,
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct BackendConfig {
    #[serde(default)]
    pub mode: BackendMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_path: Option<String>,
    /// Sequential mock script, used when mode = "mock".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mock_script: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ion_table_path: Option<PathBuf>,
    #[serde(default = "default_memory_dir")]
    pub memory_dir: PathBuf,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_prune_threshold")]
    pub prune_threshold: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_candidates_per_iteration")]
    pub candidates_per_iteration: usize,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Gate termination on y_hat - sigma instead of y_hat.
    #[serde(default)]
    pub risk_adjusted: bool,
}

fn default_memory_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seed() -> u64 {
    42
}

fn default_prune_threshold() -> usize {
    20
}

fn default_max_iterations() -> u32 {
    5
}

fn default_candidates_per_iteration() -> usize {
    6
}

fn default_knn_k() -> usize {
    5
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dataset_path: None,
            corpus_path: None,
            ion_table_path: None,
            memory_dir: default_memory_dir(),
            backend: BackendConfig::default(),
            seed: default_seed(),
            prune_threshold: default_prune_threshold(),
            max_iterations: default_max_iterations(),
            candidates_per_iteration: default_candidates_per_iteration(),
            knn_k: default_knn_k(),
            risk_adjusted: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file `{0}`: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("backend mode is http but no url configured (set backend.url or $PEROMAS_BACKEND_URL)")]
    MissingUrl,
    #[error("failed to load {what}: {detail}")]
    Data { what: &'static str, detail: String },
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.into(), e))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    /// `--config` flag first, then ./peromas.toml, then built-in defaults.
    pub fn resolve(flag: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(path) = flag {
            return Self::load(path);
        }
        let local = Path::new("peromas.toml");
        if local.exists() {
            return Self::load(local);
        }
        let mut config = Config::default();
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var("PEROMAS_BACKEND_URL") {
            if !url.is_empty() {
                self.backend.url = Some(url);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for path in [&self.dataset_path, &self.corpus_path, &self.ion_table_path]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(ConfigError::MissingPath(path.clone()));
            }
        }
        if self.backend.mode == BackendMode::Http && self.backend.url.is_none() {
            return Err(ConfigError::MissingUrl);
        }
        Ok(())
    }

    /// Loads the ion table, dataset, and corpus this config points at,
    /// falling back to the bundled data for absent paths.
    pub fn build_tool_context(&self) -> Result<ToolContext, ConfigError> {
        let ion_table = match &self.ion_table_path {
            Some(path) => Arc::new(
                IonTable::load(path)
                    .map_err(|e| ConfigError::Data { what: "ion table", detail: e.to_string() })?,
            ),
            None => Arc::new(IonTable::bundled().clone()),
        };
        let dataset = match &self.dataset_path {
            Some(path) => ingest_dataset_path(path, &ion_table)
                .map_err(|e| ConfigError::Data { what: "dataset", detail: e.to_string() })?
                .records,
            None => crate::domain::bundled_dataset(&ion_table).records,
        };
        let corpus = match &self.corpus_path {
            Some(path) => Corpus::load(path)
                .map_err(|e| ConfigError::Data { what: "corpus", detail: e.to_string() })?,
            None => Corpus::bundled(),
        };
        let mut ctx = ToolContext::new(ion_table, dataset, corpus);
        ctx.knn_k = self.knn_k;
        Ok(ctx)
    }

    /// Chat backend per the configured mode; None in deterministic mode.
    pub fn build_backend(&self) -> Result<Option<Arc<dyn ChatBackend>>, ConfigError> {
        match self.backend.mode {
            BackendMode::Deterministic => Ok(None),
            BackendMode::Mock => {
                Ok(Some(Arc::new(MockBackend::sequential(self.backend.mock_script.clone()))))
            }
            BackendMode::Http => {
                let url = self.backend.url.clone().ok_or(ConfigError::MissingUrl)?;
                let mut backend = HttpBackend::new(
                    url,
                    self.backend.model.clone().unwrap_or_else(|| "default".into()),
                );
                if let Ok(key) = std::env::var("PEROMAS_API_KEY") {
                    if !key.is_empty() {
                        backend = backend.with_api_key(key);
                    }
                }
                if let Some(path) = &self.backend.response_path {
                    backend = backend.with_response_path(path.clone());
                }
                Ok(Some(Arc::new(backend)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_working_context() {
        let config = Config::default();
        config.validate().unwrap();
        let ctx = config.build_tool_context().unwrap();
        assert!(ctx.dataset.len() >= 60);
        assert!(ctx.corpus.len() >= 10);
        assert!(config.build_backend().unwrap().is_none());
    }

    #[test]
    fn http_mode_requires_a_url() {
        let mut config = Config::default();
        config.backend.mode = BackendMode::Http;
        assert!(matches!(config.validate(), Err(ConfigError::MissingUrl)));
    }

    #[test]
    fn missing_paths_are_named() {
        let mut config = Config::default();
        config.ion_table_path = Some(PathBuf::from("/nonexistent/ions.csv"));
        match config.validate() {
            Err(ConfigError::MissingPath(p)) => {
                assert_eq!(p, PathBuf::from("/nonexistent/ions.csv"))
            }
            other => panic!("expected MissingPath, got {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            seed = 7
            prune_threshold = 10
            [backend]
            mode = "mock"
            mock_script = ["a", "b"]
        "#;
        let config: Config = toml::from_str(text).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.prune_threshold, 10);
        assert_eq!(config.backend.mode, BackendMode::Mock);
        assert_eq!(config.max_iterations, 5);
    }
}
