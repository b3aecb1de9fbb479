//! Live HTTP+JSON adapters.
//!
//! Model: `POST <endpoint>` with `{task_tag, context, output_schema}`; the
//! reply body is the structured value, or an object wrapping it under
//! `output`. Search: `GET <endpoint>?q=<query>&k=<k>` returning an array of
//! `{title, url, snippet}` (or `{items: [...]}`). Keys go in a bearer header.

use std::time::Duration;

use serde_json::Value as Json;

use super::{ModelAdapter, ProviderError, SearchAdapter, SearchResultItem, StructuredPrompt, DEFAULT_PROVIDER_DEADLINE};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).build().new_agent()
}

fn map_err(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::AdapterUnavailable(other.to_string()),
    }
}

pub struct HttpModel {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpModel").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpModel {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self { endpoint: endpoint.into(), key, agent: agent(DEFAULT_PROVIDER_DEADLINE) }
    }
}

impl ModelAdapter for HttpModel {
    fn complete(&self, prompt: &StructuredPrompt) -> Result<Json, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(prompt).map_err(map_err)?;
        let body: Json = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::SchemaViolation(format!("reply is not JSON: {e}")))?;
        Ok(match body {
            Json::Object(mut obj) if obj.len() == 1 && obj.contains_key("output") => {
                obj.remove("output").unwrap_or(Json::Null)
            }
            other => other,
        })
    }
}

pub struct HttpSearch {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpSearch").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self { endpoint: endpoint.into(), key, agent: agent(DEFAULT_PROVIDER_DEADLINE) }
    }
}

impl SearchAdapter for HttpSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResultItem>, ProviderError> {
        let mut req = self.agent.get(&self.endpoint).query("q", query).query("k", k.to_string());
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.call().map_err(map_err)?;
        let body: Json = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::AdapterUnavailable(format!("search reply is not JSON: {e}")))?;
        let items = match &body {
            Json::Array(a) => a.clone(),
            Json::Object(o) => o.get("items").and_then(Json::as_array).cloned().unwrap_or_default(),
            _ => vec![],
        };
        let field = |v: &Json, name: &str| v.get(name).and_then(Json::as_str).unwrap_or_default().to_string();
        Ok(items
            .iter()
            .take(k)
            .map(|v| SearchResultItem {
                query: query.to_string(),
                title: field(v, "title"),
                url: field(v, "url"),
                snippet: field(v, "snippet"),
            })
            .collect())
    }
}
