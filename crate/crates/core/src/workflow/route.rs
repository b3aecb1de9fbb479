use std::collections::BTreeSet;

use super::{ConversationState, ExecutionPlan, NodeName};
use crate::intent::{Intent, IntentSet};

/// Plan for a set of intents, in fixed precedence order.
///
/// Visualization needs fresh data. Insight reuses the last table unless
/// new data is being fetched this turn. Explanation without a prior
/// insight, or over freshly fetched data, brings its own analysis.
pub fn route(intents: &IntentSet, state: &ConversationState) -> ExecutionPlan {
    let mut nodes = BTreeSet::new();
    if !intents.is_other() {
        let new_data = intents.contains(Intent::Visualization);
        if intents.contains(Intent::System) {
            nodes.insert(NodeName::System);
        }
        if new_data {
            nodes.insert(NodeName::SqlAgent);
            nodes.insert(NodeName::VisualizationAgent);
        }
        if intents.contains(Intent::Insight) {
            nodes.insert(NodeName::AnalysisAgent);
            if new_data || state.last_table.is_none() {
                nodes.insert(NodeName::SqlAgent);
            }
        }
        if intents.contains(Intent::Explanation) {
            nodes.insert(NodeName::ExplanationAgent);
            if state.insights.is_empty() {
                nodes.insert(NodeName::SqlAgent);
                nodes.insert(NodeName::AnalysisAgent);
            } else if nodes.contains(&NodeName::SqlAgent) {
                nodes.insert(NodeName::AnalysisAgent);
            }
        }
        if intents.contains(Intent::Customization) {
            nodes.insert(NodeName::Customizer);
        }
    }
    nodes.insert(NodeName::ResponseGenerator);
    ExecutionPlan { steps: nodes.into_iter().collect() }
}

/// Earlier plan steps whose output `node` consumes.
pub fn dependencies(node: NodeName, plan: &ExecutionPlan) -> Vec<NodeName> {
    let wanted: &[NodeName] = match node {
        NodeName::SqlAgent => &[NodeName::System],
        NodeName::VisualizationAgent | NodeName::AnalysisAgent => &[NodeName::SqlAgent],
        NodeName::ExplanationAgent => &[NodeName::SqlAgent, NodeName::AnalysisAgent],
        NodeName::Customizer => &[NodeName::VisualizationAgent],
        NodeName::System | NodeName::ResponseGenerator => &[],
    };
    wanted.iter().copied().filter(|n| plan.contains(*n)).collect()
}
