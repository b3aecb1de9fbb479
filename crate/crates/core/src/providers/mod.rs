//! Model and search adapters.
//!
//! Every model call goes through a [`StructuredPrompt`] whose output schema
//! is checked on return; malformed replies are re-requested with the
//! violation appended to the context. Both adapters have fixture-backed
//! stubs so the whole system runs offline.

mod http;
mod stub;

use std::fmt;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub use http::{HttpModel, HttpSearch};
pub use stub::{model_fixture_key, normalize_query, search_fixture_key, ScriptedModel, StubModel, StubSearch};

pub const DEFAULT_MAX_RETRIES: usize = 2;
pub const DEFAULT_PROVIDER_DEADLINE: Duration = Duration::from_secs(30);
pub const MAX_SNIPPET_CHARS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    IntentRefine,
    SqlGenerate,
    InsightNarrate,
    ExplainSynthesize,
    CustomizeParse,
}

impl TaskTag {
    pub const ALL: [TaskTag; 5] = [
        TaskTag::IntentRefine,
        TaskTag::SqlGenerate,
        TaskTag::InsightNarrate,
        TaskTag::ExplainSynthesize,
        TaskTag::CustomizeParse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::IntentRefine => "intent_refine",
            TaskTag::SqlGenerate => "sql_generate",
            TaskTag::InsightNarrate => "insight_narrate",
            TaskTag::ExplainSynthesize => "explain_synthesize",
            TaskTag::CustomizeParse => "customize_parse",
        }
    }

    pub fn parse(tag: &str) -> Option<TaskTag> {
        TaskTag::ALL.into_iter().find(|t| t.as_str() == tag)
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    String,
    Number,
    Boolean,
    Array,
    Object,
}

impl FieldKind {
    fn accepts(self, value: &Json) -> bool {
        match self {
            FieldKind::String => value.is_string(),
            FieldKind::Number => value.is_number(),
            FieldKind::Boolean => value.is_boolean(),
            FieldKind::Array => value.is_array(),
            FieldKind::Object => value.is_object(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            FieldKind::String => "string",
            FieldKind::Number => "number",
            FieldKind::Boolean => "boolean",
            FieldKind::Array => "array",
            FieldKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

impl SchemaField {
    pub fn required(name: &str, kind: FieldKind) -> Self {
        Self { name: name.to_string(), kind, required: true }
    }

    pub fn optional(name: &str, kind: FieldKind) -> Self {
        Self { name: name.to_string(), kind, required: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub task_tag: TaskTag,
    pub context: String,
    pub output_schema: Vec<SchemaField>,
}

impl StructuredPrompt {
    pub fn new(task_tag: TaskTag, context: impl Into<String>, output_schema: Vec<SchemaField>) -> Result<Self, ProviderError> {
        if output_schema.is_empty() {
            return Err(ProviderError::BadRequest("output schema is empty".into()));
        }
        Ok(Self { task_tag, context: context.into(), output_schema })
    }

    /// Describes the first way `value` fails the output schema.
    pub fn violation(&self, value: &Json) -> Option<String> {
        let Some(obj) = value.as_object() else {
            return Some("reply must be a JSON object".into());
        };
        for field in &self.output_schema {
            match obj.get(&field.name) {
                None | Some(Json::Null) if field.required => {
                    return Some(format!("missing required field `{}`", field.name));
                }
                Some(v) if !v.is_null() && !field.kind.accepts(v) => {
                    return Some(format!("field `{}` must be a {}", field.name, field.kind.name()));
                }
                _ => {}
            }
        }
        None
    }

    fn with_violation(&self, violation: &str) -> StructuredPrompt {
        StructuredPrompt {
            task_tag: self.task_tag,
            context: format!("{}\n\nprevious reply was rejected: {violation}", self.context),
            output_schema: self.output_schema.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResultItem {
    pub query: String,
    pub title: String,
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("reply violates schema: {0}")]
    SchemaViolation(String),
    #[error("adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl ProviderError {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Timeout => "Timeout",
            ProviderError::SchemaViolation(_) => "SchemaViolation",
            ProviderError::AdapterUnavailable(_) => "AdapterUnavailable",
            ProviderError::BadRequest(_) => "BadRequest",
        }
    }
}

pub trait ModelAdapter: Send + Sync {
    fn complete(&self, prompt: &StructuredPrompt) -> Result<Json, ProviderError>;
}

pub trait SearchAdapter: Send + Sync {
    /// Up to `k` items in adapter order.
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResultItem>, ProviderError>;
}

/// A schema-conforming reply and how many adapter calls it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub value: Json,
    pub attempts: usize,
}

impl Completion {
    pub fn retries(&self) -> usize {
        self.attempts.saturating_sub(1)
    }
}

/// Calls `adapter` until the reply fits the schema, at most
/// `1 + max_retries` times. Non-schema errors end the loop at once.
pub fn invoke_with_repair(
    prompt: &StructuredPrompt,
    adapter: &dyn ModelAdapter,
    max_retries: usize,
) -> Result<Completion, ProviderError> {
    repair_loop(prompt, max_retries, |p| adapter.complete(p))
}

fn repair_loop(
    prompt: &StructuredPrompt,
    max_retries: usize,
    mut call: impl FnMut(&StructuredPrompt) -> Result<Json, ProviderError>,
) -> Result<Completion, ProviderError> {
    let mut current = prompt.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let violation = match call(&current) {
            Ok(value) => match prompt.violation(&value) {
                None => return Ok(Completion { value, attempts }),
                Some(v) => v,
            },
            Err(ProviderError::SchemaViolation(v)) => v,
            Err(other) => return Err(other),
        };
        if attempts > max_retries {
            return Err(ProviderError::SchemaViolation(violation));
        }
        current = prompt.with_violation(&violation);
    }
}

fn call_with_deadline(
    adapter: &Arc<dyn ModelAdapter>,
    prompt: &StructuredPrompt,
    deadline: Duration,
) -> Result<Json, ProviderError> {
    let (tx, rx) = mpsc::channel();
    let adapter = Arc::clone(adapter);
    let prompt = prompt.clone();
    // A hung adapter keeps its thread; the caller moves on at the deadline.
    std::thread::spawn(move || {
        let _ = tx.send(adapter.complete(&prompt));
    });
    match rx.recv_timeout(deadline) {
        Ok(r) => r,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(ProviderError::Timeout),
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            Err(ProviderError::AdapterUnavailable("adapter panicked".into()))
        }
    }
}

/// One structured completion with a per-call deadline and the repair loop.
pub fn complete_structured(
    prompt: &StructuredPrompt,
    adapter: &Arc<dyn ModelAdapter>,
    deadline: Duration,
    max_retries: usize,
) -> Result<Completion, ProviderError> {
    repair_loop(prompt, max_retries, |p| call_with_deadline(adapter, p, deadline))
}

/// Model slot shared by every agent.
#[derive(Clone)]
pub struct ModelClient {
    pub adapter: Arc<dyn ModelAdapter>,
    pub deadline: Duration,
    pub max_retries: usize,
}

impl fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClient")
            .field("deadline", &self.deadline)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

impl ModelClient {
    pub fn new(adapter: Arc<dyn ModelAdapter>) -> Self {
        Self { adapter, deadline: DEFAULT_PROVIDER_DEADLINE, max_retries: DEFAULT_MAX_RETRIES }
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn with_max_retries(mut self, max_retries: usize) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn complete(&self, prompt: &StructuredPrompt) -> Result<Completion, ProviderError> {
        complete_structured(prompt, &self.adapter, self.deadline, self.max_retries)
    }
}

/// Runs one search with `1 ≤ k ≤ 10`; items with an invalid url are dropped
/// and snippets are cut to 1,000 characters.
pub fn search(adapter: &dyn SearchAdapter, query: &str, k: usize) -> Result<Vec<SearchResultItem>, ProviderError> {
    if !(1..=10).contains(&k) {
        return Err(ProviderError::BadRequest(format!("k must be between 1 and 10, got {k}")));
    }
    let items = adapter.search(query, k)?;
    Ok(items
        .into_iter()
        .filter(|i| url::Url::parse(&i.url).is_ok())
        .map(|mut i| {
            if i.snippet.chars().count() > MAX_SNIPPET_CHARS {
                i.snippet = i.snippet.chars().take(MAX_SNIPPET_CHARS).collect();
            }
            i
        })
        .take(k)
        .collect())
}

/// The two external dependencies; `None` means disabled.
#[derive(Clone, Default)]
pub struct Providers {
    pub model: Option<ModelClient>,
    pub search: Option<Arc<dyn SearchAdapter>>,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("model", &self.model.is_some())
            .field("search", &self.search.is_some())
            .finish()
    }
}

impl Providers {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn with_model(mut self, adapter: Arc<dyn ModelAdapter>) -> Self {
        self.model = Some(ModelClient::new(adapter));
        self
    }

    pub fn with_search(mut self, adapter: Arc<dyn SearchAdapter>) -> Self {
        self.search = Some(adapter);
        self
    }

    /// Stub model and search both served from one fixture directory.
    pub fn stub(fixture_dir: impl Into<std::path::PathBuf>) -> Self {
        let dir = fixture_dir.into();
        Self::disabled()
            .with_model(Arc::new(StubModel::from_dir(&dir)))
            .with_search(Arc::new(StubSearch::from_dir(&dir)))
    }

    /// Live adapters from `MODEL_ENDPOINT`/`MODEL_KEY` and
    /// `SEARCH_ENDPOINT`/`SEARCH_KEY`; unset endpoints leave the slot empty.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let mut p = Self::disabled();
        if let Some(endpoint) = var("MODEL_ENDPOINT") {
            p = p.with_model(Arc::new(HttpModel::new(endpoint, var("MODEL_KEY"))));
        }
        if let Some(endpoint) = var("SEARCH_ENDPOINT") {
            p = p.with_search(Arc::new(HttpSearch::new(endpoint, var("SEARCH_KEY"))));
        }
        p
    }

    pub fn model(&self) -> Option<&ModelClient> {
        self.model.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn prompt() -> StructuredPrompt {
        StructuredPrompt::new(
            TaskTag::SqlGenerate,
            "ctx",
            vec![SchemaField::required("sql", FieldKind::String), SchemaField::optional("n", FieldKind::Number)],
        )
        .unwrap()
    }

    #[test]
    fn empty_schema_is_rejected() {
        assert!(StructuredPrompt::new(TaskTag::SqlGenerate, "x", vec![]).is_err());
    }

    #[test]
    fn violations_are_described() {
        let p = prompt();
        assert_eq!(p.violation(&json!({"sql": "SELECT 1"})), None);
        assert!(p.violation(&json!([1])).is_some());
        assert!(p.violation(&json!({"n": 1})).unwrap().contains("sql"));
        assert!(p.violation(&json!({"sql": "x", "n": "one"})).unwrap().contains("number"));
    }

    #[test]
    fn first_valid_reply_needs_no_retry() {
        let m = ScriptedModel::new(vec![Ok(json!({"sql": "SELECT 1"}))]);
        let c = invoke_with_repair(&prompt(), &m, 2).unwrap();
        assert_eq!(c.attempts, 1);
        assert_eq!(c.retries(), 0);
    }

    #[test]
    fn two_malformed_then_valid() {
        let m = ScriptedModel::new(vec![Ok(json!({})), Ok(json!({"sql": 3})), Ok(json!({"sql": "SELECT 1"}))]);
        let c = invoke_with_repair(&prompt(), &m, 2).unwrap();
        assert_eq!(c.retries(), 2);
        assert_eq!(c.value, json!({"sql": "SELECT 1"}));
        // the repair prompt carries the violation
        let seen = m.prompts();
        assert!(seen[1].context.contains("missing required field `sql`"));
    }

    #[test]
    fn always_malformed_exhausts_after_three_attempts() {
        let m = ScriptedModel::new(vec![Ok(json!({}))]);
        let r = invoke_with_repair(&prompt(), &m, 2);
        assert!(matches!(r, Err(ProviderError::SchemaViolation(_))));
        assert_eq!(m.calls(), 3);
    }

    #[test]
    fn zero_retries_fails_immediately() {
        let m = ScriptedModel::new(vec![Ok(json!({})), Ok(json!({"sql": "ok"}))]);
        assert!(matches!(invoke_with_repair(&prompt(), &m, 0), Err(ProviderError::SchemaViolation(_))));
        assert_eq!(m.calls(), 1);
    }

    struct Slow;
    impl ModelAdapter for Slow {
        fn complete(&self, _: &StructuredPrompt) -> Result<Json, ProviderError> {
            std::thread::sleep(Duration::from_millis(500));
            Ok(json!({"sql": "late"}))
        }
    }

    #[test]
    fn deadline_produces_timeout() {
        let client = ModelClient::new(Arc::new(Slow)).with_deadline(Duration::from_millis(20));
        assert_eq!(client.complete(&prompt()), Err(ProviderError::Timeout));
    }

    #[test]
    fn search_bounds_k() {
        let s = StubSearch::default();
        assert!(matches!(search(&s, "x", 0), Err(ProviderError::BadRequest(_))));
        assert!(matches!(search(&s, "x", 11), Err(ProviderError::BadRequest(_))));
        assert_eq!(search(&s, "x", 3), Ok(vec![]));
    }
}
