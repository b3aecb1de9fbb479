use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ConversationState, NodeError, NodeName, NodeOutput, StepOutputs, UserMessage, WorkflowError};
use crate::analysis::Thresholds;
use crate::canonical::digest;
use crate::explain::DEFAULT_K_PER_QUERY;
use crate::intent::{IntentSet, Lexicon};
use crate::providers::Providers;
use crate::sql::{Connector, DEFAULT_DEADLINE_MS, DEFAULT_LIMIT};
use crate::viz::RankMatrix;

/// Limits and detector settings for a turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub row_cap: usize,
    pub default_limit: usize,
    pub deadline_ms: u64,
    pub thresholds: Thresholds,
    pub k_per_query: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            row_cap: DEFAULT_LIMIT,
            default_limit: DEFAULT_LIMIT,
            deadline_ms: DEFAULT_DEADLINE_MS,
            thresholds: Thresholds::default(),
            k_per_query: DEFAULT_K_PER_QUERY,
        }
    }
}

/// Everything a turn needs besides state and message.
#[derive(Clone, Default)]
pub struct Runtime {
    pub providers: Providers,
    pub connector: Arc<Connector>,
    pub settings: Settings,
    pub lexicon: Lexicon,
    pub matrix: RankMatrix,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("model", &self.providers.model.is_some())
            .field("search", &self.providers.search.is_some())
            .field("settings", &self.settings)
            .finish()
    }
}

impl Runtime {
    pub fn new(providers: Providers) -> Self {
        Self { providers, ..Self::default() }
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }
}

/// What a node sees. Changes to `state` are kept only if the node
/// succeeds.
pub struct NodeContext<'a> {
    pub state: &'a mut ConversationState,
    pub message: &'a UserMessage,
    pub intents: &'a IntentSet,
    pub outputs: &'a StepOutputs,
    pub runtime: &'a Runtime,
}

pub trait NodeHandler: Send + Sync {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError>;
}

impl<F> NodeHandler for F
where
    F: Fn(&mut NodeContext<'_>) -> Result<NodeOutput, NodeError> + Send + Sync,
{
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        self(cx)
    }
}

/// The compiled node topology; immutable once built.
#[derive(Clone)]
pub struct WorkflowGraph {
    handlers: BTreeMap<NodeName, Arc<dyn NodeHandler>>,
}

impl std::fmt::Debug for WorkflowGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkflowGraph").field("nodes", &self.nodes()).finish()
    }
}

impl WorkflowGraph {
    /// The graph with the built-in agents.
    pub fn standard() -> WorkflowGraph {
        compile_workflow(super::default_registry()).expect("default registry is complete")
    }

    pub fn nodes(&self) -> Vec<NodeName> {
        self.handlers.keys().copied().collect()
    }

    pub fn handler(&self, node: NodeName) -> &Arc<dyn NodeHandler> {
        &self.handlers[&node]
    }

    /// Precedence edges plus data edges (consumer ← producer).
    pub fn edges(&self) -> Vec<(NodeName, NodeName)> {
        let full = super::ExecutionPlan { steps: NodeName::ALL.to_vec() };
        let mut out: Vec<(NodeName, NodeName)> = NodeName::ALL.windows(2).map(|w| (w[0], w[1])).collect();
        for n in NodeName::ALL {
            for d in super::dependencies(n, &full) {
                out.push((d, n));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn topology_digest(&self) -> String {
        digest(&(self.nodes(), self.edges()))
    }
}

/// Builds the graph; every node must have a handler.
pub fn compile_workflow(mut registry: BTreeMap<NodeName, Arc<dyn NodeHandler>>) -> Result<WorkflowGraph, WorkflowError> {
    let mut handlers = BTreeMap::new();
    for node in NodeName::ALL {
        let h = registry.remove(&node).ok_or_else(|| WorkflowError::MissingNode(node.name().to_string()))?;
        handlers.insert(node, h);
    }
    Ok(WorkflowGraph { handlers })
}
