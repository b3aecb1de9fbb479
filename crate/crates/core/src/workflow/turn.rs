use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use super::graph::{NodeContext, Runtime, WorkflowGraph};
use super::{
    dependencies, generate_response, route, ConversationState, ErrorNotice, HistoryEntry, NodeError, NodeName,
    NodeOutput, ResponseBundle, StepOutputs, TraceEvent, TraceStatus, UserMessage, WorkflowError,
};
use crate::canonical::digest;
use crate::intent::{classify, Intent, IntentEntry, IntentSet, IntentSource, RuleContext};

/// Trace node name used when the model refinement of intents fails.
pub const CLASSIFIER_NODE: &str = "Classifier";

const SKIPPED: &str = "Skipped";

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "node panicked".to_string())
}

fn rule_context(state: &ConversationState) -> RuleContext {
    let mut dataset_columns: Vec<String> = state
        .schema_cache
        .iter()
        .flat_map(|s| s.tables.iter().flat_map(|t| t.columns.iter().map(|c| c.name.clone())))
        .collect();
    if let Some(t) = &state.last_table {
        dataset_columns.extend(t.columns.iter().map(|c| c.name.clone()));
    }
    dataset_columns.sort();
    dataset_columns.dedup();
    RuleContext {
        has_chart: !state.charts.is_empty(),
        has_insight: !state.insights.is_empty(),
        chart_fields: state.charts.last().map(|c| c.encoded_fields()).unwrap_or_default(),
        dataset_columns,
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn run_node(
    graph: &WorkflowGraph,
    node: NodeName,
    state: &ConversationState,
    message: &UserMessage,
    intents: &IntentSet,
    outputs: &StepOutputs,
    runtime: &Runtime,
) -> (ConversationState, Result<NodeOutput, NodeError>) {
    let mut scratch = state.clone();
    let handler = graph.handler(node);
    let result = catch_unwind(AssertUnwindSafe(|| {
        let mut cx = NodeContext { state: &mut scratch, message, intents, outputs, runtime };
        handler.run(&mut cx)
    }))
    .unwrap_or_else(|p| Err(NodeError::new("NodePanicked", format!("{node}: {}", panic_text(p)))));
    (scratch, result)
}

fn execute(
    state: ConversationState,
    message: &UserMessage,
    graph: &WorkflowGraph,
    runtime: &Runtime,
) -> (ConversationState, ResponseBundle) {
    let mut work = state;
    work.trace.clear();
    let mut trace: Vec<TraceEvent> = Vec::new();
    let mut outputs = StepOutputs::default();

    let text = message.text.trim();
    let intents = if message.session_id != work.session_id {
        outputs.errors.push(ErrorNotice {
            code: "SessionMismatch".into(),
            message: "the message belongs to another session".into(),
        });
        IntentSet::other()
    } else if text.is_empty() {
        IntentSet::other()
    } else {
        let start = Instant::now();
        let c = classify(text, &runtime.lexicon, &rule_context(&work), runtime.providers.model());
        if let Some(err) = c.fallback {
            trace.push(TraceEvent {
                node: CLASSIFIER_NODE.to_string(),
                input_digest: digest(text),
                output_digest: digest(&c.intents),
                duration_ms: elapsed_ms(start),
                status: TraceStatus::Error(err.code().to_string()),
            });
        }
        c.intents
    };
    // A connection payload always goes through the system node.
    let intents = if message.connection.is_some() && message.session_id == work.session_id {
        let system = IntentEntry { intent: Intent::System, confidence: 1.0, source: IntentSource::Rule };
        IntentSet::from_entries(intents.entries().iter().cloned().chain([system]))
    } else {
        intents
    };
    let plan = route(&intents, &work);

    let mut failed: BTreeSet<NodeName> = BTreeSet::new();
    for &node in plan.steps.iter().filter(|n| **n != NodeName::ResponseGenerator) {
        let start = Instant::now();
        let input_digest = digest(&(node, message, &work, &outputs));
        if dependencies(node, &plan).iter().any(|d| failed.contains(d)) {
            failed.insert(node);
            trace.push(TraceEvent {
                node: node.name().to_string(),
                input_digest,
                output_digest: digest(SKIPPED),
                duration_ms: 0,
                status: TraceStatus::Error(SKIPPED.to_string()),
            });
            continue;
        }
        let (scratch, result) = run_node(graph, node, &work, message, &intents, &outputs, runtime);
        let (output_digest, status) = match result {
            Ok(out) => {
                work = scratch;
                let d = digest(&out);
                outputs.outputs.insert(node, out);
                (d, TraceStatus::Ok)
            }
            Err(e) => {
                failed.insert(node);
                let d = digest(&e);
                outputs.errors.push(ErrorNotice { code: e.code.clone(), message: e.message });
                (d, TraceStatus::Error(e.code))
            }
        };
        trace.push(TraceEvent { node: node.name().to_string(), input_digest, output_digest, duration_ms: elapsed_ms(start), status });
    }

    let start = Instant::now();
    let node = NodeName::ResponseGenerator;
    let input_digest = digest(&(node, message, &work, &outputs));
    let (_, result) = run_node(graph, node, &work, message, &intents, &outputs, runtime);
    let (mut bundle, status) = match result {
        Ok(NodeOutput::ResponseGenerator(b)) => (b, TraceStatus::Ok),
        Ok(_) => {
            let e = NodeError::new("BadOutput", "response node returned another node's output");
            outputs.errors.push(ErrorNotice { code: e.code.clone(), message: e.message });
            (generate_response(&work, &outputs), TraceStatus::Error(e.code))
        }
        Err(e) => {
            outputs.errors.push(ErrorNotice { code: e.code.clone(), message: e.message });
            (generate_response(&work, &outputs), TraceStatus::Error(e.code))
        }
    };
    if bundle.message.trim().is_empty() {
        bundle.message = generate_response(&work, &outputs).message;
    }
    trace.push(TraceEvent {
        node: node.name().to_string(),
        input_digest,
        output_digest: digest(&bundle),
        duration_ms: elapsed_ms(start),
        status,
    });

    work.history.push(HistoryEntry { message: message.redacted(), response: bundle.clone() });
    work.trace = trace;
    (work, bundle)
}

/// Classify, route and run each planned node in order. Never fails: node
/// errors, panics included, end up in the bundle, and nodes that depend on
/// a failed one are skipped. The returned state has one more history entry
/// and the new turn's trace.
pub fn run_turn(
    state: ConversationState,
    message: &UserMessage,
    graph: &WorkflowGraph,
    runtime: &Runtime,
) -> (ConversationState, ResponseBundle) {
    execute(state, message, graph, runtime)
}

/// Re-runs a recorded turn and checks it step by step against `recorded`.
///
/// An empty recording checks nothing and simply re-executes.
pub fn replay_trace(
    state_before: &ConversationState,
    message: &UserMessage,
    recorded: &[TraceEvent],
    graph: &WorkflowGraph,
    runtime: &Runtime,
) -> Result<ResponseBundle, WorkflowError> {
    let (after, bundle) = execute(state_before.clone(), message, graph, runtime);
    if recorded.is_empty() {
        return Ok(bundle);
    }
    for (i, rec) in recorded.iter().enumerate() {
        match after.trace.get(i) {
            Some(now) if now.same_step(rec) => {}
            _ => return Err(WorkflowError::DigestMismatch(rec.node.clone())),
        }
    }
    if let Some(extra) = after.trace.get(recorded.len()) {
        return Err(WorkflowError::DigestMismatch(extra.node.clone()));
    }
    Ok(bundle)
}

/// One event per line, fields in declaration order.
pub fn trace_to_ndjson(trace: &[TraceEvent]) -> String {
    trace
        .iter()
        .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
        .collect()
}

pub fn trace_from_ndjson(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn other_turn() -> (ConversationState, UserMessage, ConversationState, ResponseBundle) {
        let state = ConversationState::new("s");
        let msg = UserMessage::new("s", "hello there");
        let (after, bundle) = run_turn(state.clone(), &msg, &WorkflowGraph::standard(), &Runtime::default());
        (state, msg, after, bundle)
    }

    #[test]
    fn other_turn_gives_fallback() {
        let (_, _, after, bundle) = other_turn();
        assert_eq!(bundle.message, super::super::FALLBACK_MESSAGE);
        assert_eq!(after.history.len(), 1);
        let nodes: Vec<&str> = after.trace.iter().map(|e| e.node.as_str()).collect();
        assert_eq!(nodes, ["ResponseGenerator"]);
    }

    #[test]
    fn replay_round_trip_and_tamper() {
        let (before, msg, after, bundle) = other_turn();
        let g = WorkflowGraph::standard();
        let rt = Runtime::default();
        assert_eq!(replay_trace(&before, &msg, &after.trace, &g, &rt).unwrap(), bundle);
        assert_eq!(replay_trace(&before, &msg, &[], &g, &rt).unwrap(), bundle);
        let mut bad = after.trace.clone();
        bad[0].output_digest = "0".repeat(64);
        assert_eq!(
            replay_trace(&before, &msg, &bad, &g, &rt),
            Err(WorkflowError::DigestMismatch("ResponseGenerator".into()))
        );
    }

    #[test]
    fn ndjson_round_trip() {
        let (_, _, after, _) = other_turn();
        let text = trace_to_ndjson(&after.trace);
        assert!(text.starts_with("{\"node\":\"ResponseGenerator\",\"input_digest\""));
        assert_eq!(trace_from_ndjson(&text).unwrap(), after.trace);
    }

    #[test]
    fn connection_payload_connects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sales.db");
        crate::demo::create_sales_db(&path).unwrap();
        let cfg = crate::sql::ConnectionConfig::embedded(path.display().to_string());
        let msg = UserMessage::new("s", "Show me a bar chart of sales by month").with_connection(cfg);
        let (after, bundle) = run_turn(ConversationState::new("s"), &msg, &WorkflowGraph::standard(), &Runtime::default());
        assert!(bundle.errors.is_empty(), "{:?}", bundle.errors);
        assert_eq!(bundle.charts.len(), 1);
        let nodes: Vec<&str> = after.trace.iter().map(|e| e.node.as_str()).collect();
        assert_eq!(nodes, ["System", "SqlAgent", "VisualizationAgent", "ResponseGenerator"]);
    }

    #[test]
    fn visualization_without_connection() {
        let state = ConversationState::new("s");
        let msg = UserMessage::new("s", "Show me a bar chart of sales by month");
        let (after, bundle) = run_turn(state, &msg, &WorkflowGraph::standard(), &Runtime::default());
        assert!(bundle.error_codes().contains(&"NoConnection"));
        assert!(bundle.charts.is_empty());
        assert!(after.charts.is_empty());
        let statuses: Vec<String> = after.trace.iter().map(|e| format!("{} {}", e.node, e.status)).collect();
        assert_eq!(statuses, ["SqlAgent error(NoConnection)", "VisualizationAgent error(Skipped)", "ResponseGenerator ok"]);
    }
}
