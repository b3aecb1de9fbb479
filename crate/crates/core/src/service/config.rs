//! Service configuration from a flat `key = value` file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::providers::{HttpModel, HttpSearch, ModelClient, Providers, StubModel, StubSearch};
use crate::workflow::Settings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    bind: Option<String>,
    store_dir: Option<PathBuf>,
    bearer_token: Option<String>,
    row_cap: Option<usize>,
    default_limit: Option<usize>,
    deadline_ms: Option<u64>,
    provider_deadline_ms: Option<u64>,
    trend_r2: Option<f64>,
    anomaly_z: Option<f64>,
    correlation_r: Option<f64>,
    min_correlation_n: Option<usize>,
    k_per_query: Option<usize>,
    fixtures: Option<PathBuf>,
    model_endpoint: Option<String>,
    model_key: Option<String>,
    search_endpoint: Option<String>,
    search_key: Option<String>,
}

/// Where providers come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ProviderSource {
    /// Model and search disabled; everything runs on rules and templates.
    #[default]
    Disabled,
    /// Stub fixtures from a directory.
    Fixtures(PathBuf),
    /// HTTP endpoints.
    Live {
        model_endpoint: Option<String>,
        model_key: Option<String>,
        search_endpoint: Option<String>,
        search_key: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    pub store_dir: PathBuf,
    pub bearer_token: Option<String>,
    pub settings: Settings,
    pub provider_deadline_ms: Option<u64>,
    pub providers: ProviderSource,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            store_dir: PathBuf::from("sessions"),
            bearer_token: None,
            settings: Settings::default(),
            provider_deadline_ms: None,
            providers: ProviderSource::Disabled,
        }
    }
}

impl ServiceConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut c = ServiceConfig::default();
        if let Some(v) = raw.bind {
            c.bind = v;
        }
        if let Some(v) = raw.store_dir {
            c.store_dir = v;
        }
        c.bearer_token = raw.bearer_token.filter(|t| !t.is_empty());
        let s = &mut c.settings;
        s.row_cap = raw.row_cap.unwrap_or(s.row_cap);
        s.default_limit = raw.default_limit.unwrap_or(s.default_limit);
        s.deadline_ms = raw.deadline_ms.unwrap_or(s.deadline_ms);
        s.thresholds.trend_r2 = raw.trend_r2.unwrap_or(s.thresholds.trend_r2);
        s.thresholds.anomaly_z = raw.anomaly_z.unwrap_or(s.thresholds.anomaly_z);
        s.thresholds.correlation_r = raw.correlation_r.unwrap_or(s.thresholds.correlation_r);
        s.thresholds.min_correlation_n = raw.min_correlation_n.unwrap_or(s.thresholds.min_correlation_n);
        s.k_per_query = raw.k_per_query.unwrap_or(s.k_per_query);
        c.provider_deadline_ms = raw.provider_deadline_ms;
        c.providers = if let Some(dir) = raw.fixtures {
            ProviderSource::Fixtures(dir)
        } else if raw.model_endpoint.is_some() || raw.search_endpoint.is_some() {
            ProviderSource::Live {
                model_endpoint: raw.model_endpoint,
                model_key: raw.model_key,
                search_endpoint: raw.search_endpoint,
                search_key: raw.search_key,
            }
        } else {
            ProviderSource::Disabled
        };
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_str(&text)
    }

    /// Providers for this config. Without a provider entry in the file the
    /// `MODEL_*` / `SEARCH_*` environment variables are consulted.
    pub fn build_providers(&self) -> Providers {
        let mut p = match &self.providers {
            ProviderSource::Disabled => Providers::from_env(),
            ProviderSource::Fixtures(dir) => Providers::disabled()
                .with_model(Arc::new(StubModel::from_dir(dir)))
                .with_search(Arc::new(StubSearch::from_dir(dir))),
            ProviderSource::Live { model_endpoint, model_key, search_endpoint, search_key } => {
                let mut p = Providers::disabled();
                if let Some(url) = model_endpoint {
                    p = p.with_model(Arc::new(HttpModel::new(url, model_key.clone())));
                }
                if let Some(url) = search_endpoint {
                    p = p.with_search(Arc::new(HttpSearch::new(url, search_key.clone())));
                }
                p
            }
        };
        if let (Some(ms), Some(m)) = (self.provider_deadline_ms, p.model.take()) {
            p.model = Some(ModelClient { deadline: std::time::Duration::from_millis(ms), ..m });
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_defaults() {
        let c = ServiceConfig::from_str("row_cap = 500\nanomaly_z = 3.0\nbind = \"0.0.0.0:9000\"\n").unwrap();
        assert_eq!(c.settings.row_cap, 500);
        assert_eq!(c.settings.thresholds.anomaly_z, 3.0);
        assert_eq!(c.settings.thresholds.trend_r2, 0.5);
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.providers, ProviderSource::Disabled);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::from_str("rowcap = 5").is_err());
    }
}
