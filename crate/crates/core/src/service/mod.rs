//! Session service: persistent conversations over the workflow.

mod config;
mod http;
mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, TryLockError};

use chrono::Utc;

pub use config::{ConfigError, ProviderSource, ServiceConfig};
pub use http::{router, serve};
pub use store::{FileStore, SessionRecord};

use crate::sql::{retrieve_metadata, ConnectionConfig, SchemaSummary, SqlError};
use crate::viz::ChartSpec;
use crate::workflow::{run_turn, ConversationState, PublicState, ResponseBundle, Runtime, UserMessage, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("a turn is already running for session {0}")]
    TurnInProgress(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("write access requested")]
    WriteAccessRequested,
    #[error("unknown chart {0}")]
    UnknownChart(String),
    #[error("unsupported export format {0}")]
    UnsupportedFormat(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::TurnInProgress(_) => "TurnInProgress",
            ServiceError::StorageFailure(_) => "StorageFailure",
            ServiceError::ConnectionFailed(_) => "ConnectionFailed",
            ServiceError::WriteAccessRequested => "WriteAccessRequested",
            ServiceError::UnknownChart(_) => "UnknownChart",
            ServiceError::UnsupportedFormat(_) => "UnsupportedFormat",
        }
    }
}

impl From<SqlError> for ServiceError {
    fn from(e: SqlError) -> Self {
        match e {
            SqlError::WriteAccessRequested => ServiceError::WriteAccessRequested,
            other => ServiceError::ConnectionFailed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<Self, ServiceError> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(ServiceError::UnsupportedFormat(s.to_string())),
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Json => "application/json",
            ExportFormat::Csv => "text/csv",
        }
    }
}

/// JSON export: the chart spec as stored.
pub fn chart_json(chart: &ChartSpec) -> Vec<u8> {
    serde_json::to_vec(chart).expect("chart specs serialize")
}

/// CSV export: a header of column names, then one record per data row.
pub fn chart_csv(chart: &ChartSpec) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = chart.data.iter().map(|c| c.name.as_str()).collect();
    w.write_record(&header).expect("in-memory write");
    for i in 0..chart.row_count() {
        let row: Vec<String> = chart.data.iter().map(|c| c.values.get(i).map(|v| v.to_string()).unwrap_or_default()).collect();
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub struct SessionService {
    store: FileStore,
    graph: WorkflowGraph,
    runtime: Runtime,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for SessionService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionService").field("store", &self.store).finish()
    }
}

impl SessionService {
    pub fn new(store: FileStore, runtime: Runtime) -> Self {
        Self { store, graph: WorkflowGraph::standard(), runtime, locks: Mutex::new(HashMap::new()) }
    }

    pub fn with_graph(mut self, graph: WorkflowGraph) -> Self {
        self.graph = graph;
        self
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let store = FileStore::open(&config.store_dir)?;
        Ok(Self::new(store, Runtime::new(config.build_providers()).with_settings(config.settings.clone())))
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Runs `f` holding the session's turn lock; a busy session is rejected
    /// rather than queued.
    fn exclusive<T>(&self, id: &str, f: impl FnOnce() -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        if !self.store.exists(id) {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let lock = self.lock_for(id);
        let _guard = match lock.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(ServiceError::TurnInProgress(id.to_string())),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        f()
    }

    pub fn create_session(&self) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().to_string();
        let record = SessionRecord::new(&id, Utc::now(), &ConversationState::new(&id))?;
        self.store.save(&record)?;
        Ok(id)
    }

    pub fn post_message(&self, session_id: &str, text: &str) -> Result<ResponseBundle, ServiceError> {
        self.post(UserMessage::new(session_id, text))
    }

    /// Runs one turn and persists the new state. The state is saved only
    /// after the turn completes, so a crash mid-turn leaves the previous
    /// revision in place.
    pub fn post(&self, message: UserMessage) -> Result<ResponseBundle, ServiceError> {
        let id = message.session_id.clone();
        self.exclusive(&id, || {
            let record = self.store.load(&id)?;
            let (after, bundle) = run_turn(record.state()?, &message, &self.graph, &self.runtime);
            self.store.save(&record.advance(&after)?)?;
            Ok(bundle)
        })
    }

    pub fn register_connection(&self, session_id: &str, config: ConnectionConfig) -> Result<SchemaSummary, ServiceError> {
        self.exclusive(session_id, || {
            if !config.read_only {
                return Err(ServiceError::WriteAccessRequested);
            }
            let record = self.store.load(session_id)?;
            let mut state = record.state()?;
            let snapshot = retrieve_metadata(&self.runtime.connector, &config)?;
            let summary = snapshot.summary();
            state.active_connection = Some(config);
            state.schema_cache = Some(snapshot);
            state.last_table = None;
            self.store.save(&record.advance(&state)?)?;
            Ok(summary)
        })
    }

    pub fn get_state(&self, session_id: &str) -> Result<PublicState, ServiceError> {
        Ok(self.store.load(session_id)?.state()?.public_view())
    }

    /// Full internal state, connection included. Not exposed over HTTP.
    pub fn load_state(&self, session_id: &str) -> Result<ConversationState, ServiceError> {
        self.store.load(session_id)?.state()
    }

    pub fn export_chart(&self, session_id: &str, chart_id: &str, format: ExportFormat) -> Result<Vec<u8>, ServiceError> {
        let state = self.store.load(session_id)?.state()?;
        let chart = state.chart(chart_id).ok_or_else(|| ServiceError::UnknownChart(chart_id.to_string()))?;
        Ok(match format {
            ExportFormat::Json => chart_json(chart),
            ExportFormat::Csv => chart_csv(chart),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn service() -> (tempfile::TempDir, SessionService) {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path().join("sessions")).unwrap();
        (dir, SessionService::new(store, Runtime::default()))
    }

    #[test]
    fn unknown_session_and_format() {
        let (_d, svc) = service();
        assert_eq!(svc.post_message("missing", "hi"), Err(ServiceError::UnknownSession("missing".into())));
        assert_eq!(ExportFormat::parse("xlsx"), Err(ServiceError::UnsupportedFormat("xlsx".into())));
        let id = svc.create_session().unwrap();
        assert_eq!(
            svc.export_chart(&id, "nope", ExportFormat::Json),
            Err(ServiceError::UnknownChart("nope".into()))
        );
    }

    #[test]
    fn busy_session_rejects_second_turn() {
        let (_d, svc) = service();
        let id = svc.create_session().unwrap();
        let lock = svc.lock_for(&id);
        let _held = lock.lock().unwrap();
        assert_eq!(svc.post_message(&id, "hi"), Err(ServiceError::TurnInProgress(id.clone())));
    }

    #[test]
    fn write_access_is_refused() {
        let (d, svc) = service();
        let id = svc.create_session().unwrap();
        let mut cfg = ConnectionConfig::embedded(d.path().join("x.db").display().to_string());
        cfg.read_only = false;
        assert_eq!(svc.register_connection(&id, cfg), Err(ServiceError::WriteAccessRequested));
    }
}
