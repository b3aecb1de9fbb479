//! The turn engine: a fixed graph of agents, intent-driven routing,
//! replayable traces and response assembly.

mod agents;
mod graph;
mod response;
mod route;
mod turn;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::InsightReport;
use crate::canonical::{from_canonical_str, to_canonical_string};
use crate::customize::ValidatedPatch;
use crate::explain::{EvidenceSet, Explanation, SearchPlan};
use crate::sql::{redact_text, ConnectionConfig, Generator, SchemaSnapshot, SchemaSummary};
use crate::table::ResultTable;
use crate::viz::{ChartSpec, Visualization};

pub use agents::{
    default_registry, AnalysisAgent, Customizer, ExplanationAgent, ResponseGenerator, SqlAgent, SystemNode,
    VisualizationAgent,
};
pub use graph::{compile_workflow, NodeContext, NodeHandler, Runtime, Settings, WorkflowGraph};
pub use response::{generate_response, FALLBACK_MESSAGE};
pub use route::{dependencies, route};
pub use turn::{replay_trace, run_turn, trace_from_ndjson, trace_to_ndjson, CLASSIFIER_NODE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeName {
    System,
    SqlAgent,
    VisualizationAgent,
    AnalysisAgent,
    ExplanationAgent,
    Customizer,
    ResponseGenerator,
}

impl NodeName {
    /// Precedence order.
    pub const ALL: [NodeName; 7] = [
        NodeName::System,
        NodeName::SqlAgent,
        NodeName::VisualizationAgent,
        NodeName::AnalysisAgent,
        NodeName::ExplanationAgent,
        NodeName::Customizer,
        NodeName::ResponseGenerator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeName::System => "System",
            NodeName::SqlAgent => "SqlAgent",
            NodeName::VisualizationAgent => "VisualizationAgent",
            NodeName::AnalysisAgent => "AnalysisAgent",
            NodeName::ExplanationAgent => "ExplanationAgent",
            NodeName::Customizer => "Customizer",
            NodeName::ResponseGenerator => "ResponseGenerator",
        }
    }

    pub fn parse(name: &str) -> Option<NodeName> {
        NodeName::ALL.into_iter().find(|n| n.name() == name)
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserMessage {
    pub session_id: String,
    pub text: String,
    pub received_at: DateTime<Utc>,
    /// Connection to register, for System turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<ConnectionConfig>,
}

impl UserMessage {
    pub fn new(session_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { session_id: session_id.into(), text: text.into(), received_at: Utc::now(), connection: None }
    }

    pub fn at(mut self, received_at: DateTime<Utc>) -> Self {
        self.received_at = received_at;
        self
    }

    pub fn with_connection(mut self, config: ConnectionConfig) -> Self {
        self.connection = Some(config);
        self
    }

    /// Copy with DSN credentials masked, as kept in history.
    pub fn redacted(&self) -> UserMessage {
        UserMessage {
            session_id: self.session_id.clone(),
            text: redact_text(&self.text),
            received_at: self.received_at,
            connection: self.connection.as_ref().map(ConnectionConfig::redacted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorNotice {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBundle {
    pub message: String,
    pub charts: Vec<ChartSpec>,
    pub insight: Option<InsightReport>,
    pub explanation: Option<Explanation>,
    pub errors: Vec<ErrorNotice>,
}

impl ResponseBundle {
    pub fn error_codes(&self) -> Vec<&str> {
        self.errors.iter().map(|e| e.code.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub message: UserMessage,
    pub response: ResponseBundle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStatus {
    Ok,
    Error(String),
}

impl fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStatus::Ok => f.write_str("ok"),
            TraceStatus::Error(code) => write!(f, "error({code})"),
        }
    }
}

impl Serialize for TraceStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TraceStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text == "ok" {
            return Ok(TraceStatus::Ok);
        }
        text.strip_prefix("error(")
            .and_then(|r| r.strip_suffix(')'))
            .map(|code| TraceStatus::Error(code.to_string()))
            .ok_or_else(|| serde::de::Error::custom(format!("bad trace status {text}")))
    }
}

/// One executed (or skipped) step. `node` is a graph node name, or
/// [`CLASSIFIER_NODE`] when the model refinement of intents failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub node: String,
    pub input_digest: String,
    pub output_digest: String,
    pub duration_ms: u64,
    pub status: TraceStatus,
}

impl TraceEvent {
    /// Same node, digests and status; duration is ignored.
    pub fn same_step(&self, other: &TraceEvent) -> bool {
        self.node == other.node
            && self.input_digest == other.input_digest
            && self.output_digest == other.output_digest
            && self.status == other.status
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub session_id: String,
    pub history: Vec<HistoryEntry>,
    pub active_connection: Option<ConnectionConfig>,
    pub schema_cache: Option<SchemaSnapshot>,
    pub last_table: Option<ResultTable>,
    /// Most recently produced or updated chart last.
    pub charts: Vec<ChartSpec>,
    pub insights: Vec<InsightReport>,
    /// Events of the latest turn.
    pub trace: Vec<TraceEvent>,
}

impl ConversationState {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            history: Vec::new(),
            active_connection: None,
            schema_cache: None,
            last_table: None,
            charts: Vec::new(),
            insights: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn with_connection(mut self, config: ConnectionConfig) -> Self {
        self.active_connection = Some(config);
        self
    }

    pub fn to_canonical(&self) -> Result<String, serde_json::Error> {
        to_canonical_string(self)
    }

    pub fn from_canonical(text: &str) -> Result<Self, serde_json::Error> {
        from_canonical_str(text)
    }

    pub fn chart(&self, chart_id: &str) -> Option<&ChartSpec> {
        self.charts.iter().find(|c| c.chart_id == chart_id)
    }

    /// Checks chart id uniqueness.
    pub fn check(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for c in &self.charts {
            if !ids.insert(c.chart_id.as_str()) {
                return Err(format!("duplicate chart id {}", c.chart_id));
            }
        }
        Ok(())
    }

    /// What a client may see: no credentials, no raw tables.
    pub fn public_view(&self) -> PublicState {
        PublicState {
            session_id: self.session_id.clone(),
            history: self.history.clone(),
            connection: self.active_connection.as_ref().map(ConnectionConfig::redacted),
            schema: self.schema_cache.as_ref().map(SchemaSnapshot::summary),
            charts: self.charts.clone(),
            insights: self.insights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicState {
    pub session_id: String,
    pub history: Vec<HistoryEntry>,
    pub connection: Option<ConnectionConfig>,
    pub schema: Option<SchemaSummary>,
    pub charts: Vec<ChartSpec>,
    pub insights: Vec<InsightReport>,
}

/// Ordered node list for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub steps: Vec<NodeName>,
}

impl ExecutionPlan {
    pub fn contains(&self, node: NodeName) -> bool {
        self.steps.contains(&node)
    }

    /// ResponseGenerator last and once, no repeats, precedence order.
    pub fn check(&self) -> Result<(), String> {
        if self.steps.last() != Some(&NodeName::ResponseGenerator) {
            return Err("ResponseGenerator must be last".into());
        }
        if self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err("steps repeat or break precedence".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemAction {
    Connect,
    Disconnect,
    Export,
    Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub action: SystemAction,
    pub message: String,
    pub schema: Option<SchemaSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlOutput {
    pub sql: String,
    pub generator: Generator,
    pub rationale: String,
    pub warnings: Vec<String>,
    pub injected_limit: Option<usize>,
    pub columns: Vec<String>,
    pub rows: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationOutput {
    pub plan: SearchPlan,
    pub evidence: EvidenceSet,
    pub explanation: Explanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomizerOutput {
    pub chart: ChartSpec,
    pub patch: ValidatedPatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", content = "output")]
pub enum NodeOutput {
    System(SystemOutput),
    SqlAgent(SqlOutput),
    VisualizationAgent(Visualization),
    AnalysisAgent(InsightReport),
    ExplanationAgent(ExplanationOutput),
    Customizer(CustomizerOutput),
    ResponseGenerator(ResponseBundle),
}

/// What the steps of a turn produced so far, keyed by node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutputs {
    pub outputs: BTreeMap<NodeName, NodeOutput>,
    pub errors: Vec<ErrorNotice>,
}

impl StepOutputs {
    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty() && self.errors.is_empty()
    }
}

/// A node failure; the code is surfaced in the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct NodeError {
    pub code: String,
    pub message: String,
}

impl NodeError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into() }
    }
}

macro_rules! node_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for NodeError {
            fn from(e: $t) -> Self {
                NodeError::new(e.code(), e.to_string())
            }
        }
    )*};
}

node_error_from!(
    crate::sql::SqlError,
    crate::viz::VizError,
    crate::analysis::AnalysisError,
    crate::explain::ExplainError,
    crate::customize::CustomizeError
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkflowError {
    #[error("node {0} has no handler")]
    MissingNode(String),
    #[error("recorded trace diverges at {0}")]
    DigestMismatch(String),
}

impl WorkflowError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::MissingNode(_) => "MissingNode",
            WorkflowError::DigestMismatch(_) => "DigestMismatch",
        }
    }
}
