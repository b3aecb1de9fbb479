//! Fixture-backed adapters for offline runs.
//!
//! Model fixtures are `<dir>/<sha256(task_tag \0 context)>.json` holding the
//! reply verbatim. Search fixtures are `<dir>/<sha256(normalized query)>.json`
//! holding either an array of `{title, url, snippet}` or an object with an
//! `items` array.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::Value as Json;

use super::{ModelAdapter, ProviderError, SearchAdapter, SearchResultItem, StructuredPrompt, TaskTag};
use crate::canonical::sha256_hex;

pub fn model_fixture_key(task_tag: TaskTag, context: &str) -> String {
    sha256_hex(format!("{}\0{}", task_tag.as_str(), context))
}

/// Lowercase with runs of whitespace collapsed.
pub fn normalize_query(query: &str) -> String {
    query.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

pub fn search_fixture_key(query: &str) -> String {
    sha256_hex(normalize_query(query))
}

#[derive(Debug, Default)]
pub struct StubModel {
    dir: Option<PathBuf>,
    inline: HashMap<String, Json>,
}

impl StubModel {
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        Self { dir: Some(dir.as_ref().to_path_buf()), inline: HashMap::new() }
    }

    pub fn with_fixture(mut self, task_tag: TaskTag, context: &str, value: Json) -> Self {
        self.inline.insert(model_fixture_key(task_tag, context), value);
        self
    }

    /// Writes a fixture file so a directory-backed stub will serve `value`.
    pub fn write_fixture(dir: impl AsRef<Path>, task_tag: TaskTag, context: &str, value: &Json) -> std::io::Result<PathBuf> {
        let path = dir.as_ref().join(format!("{}.json", model_fixture_key(task_tag, context)));
        std::fs::write(&path, serde_json::to_vec_pretty(value)?)?;
        Ok(path)
    }
}

impl ModelAdapter for StubModel {
    fn complete(&self, prompt: &StructuredPrompt) -> Result<Json, ProviderError> {
        let key = model_fixture_key(prompt.task_tag, &prompt.context);
        if let Some(v) = self.inline.get(&key) {
            return Ok(v.clone());
        }
        let missing = || ProviderError::AdapterUnavailable(format!("no {} fixture {key}", prompt.task_tag));
        let dir = self.dir.as_ref().ok_or_else(missing)?;
        let text = std::fs::read_to_string(dir.join(format!("{key}.json"))).map_err(|_| missing())?;
        serde_json::from_str(&text).map_err(|e| ProviderError::SchemaViolation(format!("fixture {key}: {e}")))
    }
}

#[derive(Deserialize)]
struct FixtureItem {
    title: String,
    url: String,
    #[serde(default)]
    snippet: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SearchFixture {
    Items(Vec<FixtureItem>),
    Wrapped { items: Vec<FixtureItem> },
}

#[derive(Debug, Default)]
pub struct StubSearch {
    dir: Option<PathBuf>,
    inline: HashMap<String, Vec<SearchResultItem>>,
    down: BTreeSet<String>,
}

impl StubSearch {
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        Self { dir: Some(dir.as_ref().to_path_buf()), ..Self::default() }
    }

    /// In-memory fixture: `(title, url, snippet)` triples.
    pub fn with_items(mut self, query: &str, items: &[(&str, &str, &str)]) -> Self {
        let items = items
            .iter()
            .map(|(title, url, snippet)| SearchResultItem {
                query: query.to_string(),
                title: title.to_string(),
                url: url.to_string(),
                snippet: snippet.to_string(),
            })
            .collect();
        self.inline.insert(normalize_query(query), items);
        self
    }

    /// Makes the adapter fail for this query.
    pub fn with_outage(mut self, query: &str) -> Self {
        self.down.insert(normalize_query(query));
        self
    }

    pub fn write_fixture(dir: impl AsRef<Path>, query: &str, items: &[(&str, &str, &str)]) -> std::io::Result<PathBuf> {
        let doc: Vec<Json> = items
            .iter()
            .map(|(t, u, s)| serde_json::json!({"title": t, "url": u, "snippet": s}))
            .collect();
        let path = dir.as_ref().join(format!("{}.json", search_fixture_key(query)));
        std::fs::write(&path, serde_json::to_vec_pretty(&doc)?)?;
        Ok(path)
    }
}

impl SearchAdapter for StubSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResultItem>, ProviderError> {
        let norm = normalize_query(query);
        if self.down.contains(&norm) {
            return Err(ProviderError::AdapterUnavailable(format!("search backend down for `{norm}`")));
        }
        if let Some(items) = self.inline.get(&norm) {
            return Ok(items.iter().take(k).cloned().collect());
        }
        let Some(dir) = &self.dir else { return Ok(vec![]) };
        let Ok(text) = std::fs::read_to_string(dir.join(format!("{}.json", search_fixture_key(query)))) else {
            return Ok(vec![]);
        };
        let fixture: SearchFixture = serde_json::from_str(&text)
            .map_err(|e| ProviderError::AdapterUnavailable(format!("bad search fixture: {e}")))?;
        let items = match fixture {
            SearchFixture::Items(i) | SearchFixture::Wrapped { items: i } => i,
        };
        Ok(items
            .into_iter()
            .take(k)
            .map(|i| SearchResultItem { query: query.to_string(), title: i.title, url: i.url, snippet: i.snippet })
            .collect())
    }
}

/// Replays a fixed reply sequence; the last reply repeats once the script
/// runs out. Records every prompt it sees.
#[derive(Debug)]
pub struct ScriptedModel {
    replies: Vec<Result<Json, ProviderError>>,
    seen: Mutex<Vec<StructuredPrompt>>,
}

impl ScriptedModel {
    pub fn new(replies: Vec<Result<Json, ProviderError>>) -> Self {
        assert!(!replies.is_empty(), "a script needs at least one reply");
        Self { replies, seen: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().map(|s| s.len()).unwrap_or(0)
    }

    pub fn prompts(&self) -> Vec<StructuredPrompt> {
        self.seen.lock().map(|s| s.clone()).unwrap_or_default()
    }
}

impl ModelAdapter for ScriptedModel {
    fn complete(&self, prompt: &StructuredPrompt) -> Result<Json, ProviderError> {
        let mut seen = self.seen.lock().map_err(|_| ProviderError::AdapterUnavailable("poisoned".into()))?;
        let i = seen.len().min(self.replies.len() - 1);
        seen.push(prompt.clone());
        self.replies[i].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{search, FieldKind, SchemaField};
    use serde_json::json;

    #[test]
    fn model_fixture_is_served_verbatim_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let value = json!({"sql": "SELECT month, SUM(amount) FROM sales GROUP BY month"});
        StubModel::write_fixture(dir.path(), TaskTag::SqlGenerate, "ctx", &value).unwrap();
        let stub = StubModel::from_dir(dir.path());
        let prompt =
            StructuredPrompt::new(TaskTag::SqlGenerate, "ctx", vec![SchemaField::required("sql", FieldKind::String)])
                .unwrap();
        assert_eq!(stub.complete(&prompt).unwrap(), value);
        assert_eq!(stub.complete(&prompt).unwrap(), value);
        let other = StructuredPrompt { task_tag: TaskTag::IntentRefine, ..prompt };
        assert!(matches!(stub.complete(&other), Err(ProviderError::AdapterUnavailable(_))));
    }

    #[test]
    fn search_fixture_order_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let items = [
            ("A", "https://a.example/1", "first"),
            ("B", "https://b.example/2", "second"),
            ("C", "https://c.example/3", "third"),
        ];
        StubSearch::write_fixture(dir.path(), "q2 retail sales decline", &items).unwrap();
        let stub = StubSearch::from_dir(dir.path());
        let all = search(&stub, "Q2  retail sales decline", 10).unwrap();
        assert_eq!(all.iter().map(|i| i.title.as_str()).collect::<Vec<_>>(), ["A", "B", "C"]);
        let one = search(&stub, "q2 retail sales decline", 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].title, "A");
        assert!(search(&stub, "no such query", 3).unwrap().is_empty());
    }

    #[test]
    fn outage_is_an_error_not_an_empty_list() {
        let stub = StubSearch::default().with_outage("x");
        assert!(matches!(stub.search("X", 3), Err(ProviderError::AdapterUnavailable(_))));
    }
}
