#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use nlviz::demo::{create_sales_db, SaleRow};
use nlviz::providers::{ProviderError, Providers, SearchAdapter, SearchResultItem};
use nlviz::sql::ConnectionConfig;
use nlviz::workflow::{run_turn, ConversationState, Runtime, UserMessage, WorkflowGraph};
use nlviz::ResponseBundle;

pub const SESSION: &str = "fixture";

pub fn fixed_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 15, 12, 0, 0).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub db: PathBuf,
    pub rows: Vec<SaleRow>,
}

impl Fixture {
    pub fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("sales.db");
        let rows = create_sales_db(&db).unwrap();
        Fixture { dir, db, rows }
    }

    pub fn config(&self) -> ConnectionConfig {
        ConnectionConfig::embedded(self.db.display().to_string())
    }

    /// A state already connected to the fixture database.
    pub fn connected(&self, runtime: &Runtime) -> ConversationState {
        let msg = message("connect to the sales database").with_connection(self.config());
        let (state, bundle) = run_turn(ConversationState::new(SESSION), &msg, &WorkflowGraph::standard(), runtime);
        assert!(bundle.errors.is_empty(), "connect failed: {:?}", bundle.errors);
        state
    }
}

pub fn message(text: &str) -> UserMessage {
    UserMessage::new(SESSION, text).at(fixed_time())
}

pub fn turn(state: ConversationState, text: &str, runtime: &Runtime) -> (ConversationState, ResponseBundle) {
    run_turn(state, &message(text), &WorkflowGraph::standard(), runtime)
}

/// Fixture search: every query gets the same three items, with urls
/// derived from the query text.
#[derive(Debug, Default)]
pub struct EchoSearch;

impl SearchAdapter for EchoSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResultItem>, ProviderError> {
        let slug: String = query.split_whitespace().collect::<Vec<_>>().join("-").to_lowercase();
        Ok((1..=3)
            .take(k)
            .map(|i| SearchResultItem {
                query: query.to_string(),
                title: format!("Report {i} on {query}"),
                url: format!("https://news.example.org/{slug}/{i}"),
                snippet: format!("Coverage {i} of {query}."),
            })
            .collect())
    }
}

/// Search returning nothing for every query.
#[derive(Debug, Default)]
pub struct EmptySearch;

impl SearchAdapter for EmptySearch {
    fn search(&self, _query: &str, _k: usize) -> Result<Vec<SearchResultItem>, ProviderError> {
        Ok(vec![])
    }
}

pub fn stub_runtime() -> Runtime {
    Runtime::new(Providers::disabled().with_search(Arc::new(EchoSearch)))
}
