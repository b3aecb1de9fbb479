mod common;

use std::sync::Arc;

use common::{message, stub_runtime, turn, Fixture, SESSION};
use nlviz::analysis::InsightReport;
use nlviz::workflow::{
    compile_workflow, default_registry, route, run_turn, ConversationState, NodeContext, NodeError, NodeHandler,
    NodeName, NodeOutput, TraceStatus, UserMessage, WorkflowGraph, FALLBACK_MESSAGE,
};
use nlviz::{Intent, IntentSet, ResultTable};

fn states() -> Vec<(&'static str, ConversationState)> {
    let fresh = ConversationState::new(SESSION);
    let mut with_table = fresh.clone();
    with_table.last_table = Some(ResultTable::new(vec![], vec![], "SELECT 1").unwrap());
    let mut with_insight = fresh.clone();
    with_insight.insights.push(InsightReport { findings: vec![], narrative: "n".into(), source_sql: "SELECT 1".into() });
    let mut both = with_table.clone();
    both.insights = with_insight.insights.clone();
    vec![("fresh", fresh), ("table", with_table), ("insight", with_insight), ("both", both)]
}

#[test]
fn routing_is_total_and_ordered() {
    let mut plans = 0;
    for mask in 1u32..64 {
        let intents: Vec<Intent> = Intent::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, x)| *x).collect();
        let set = IntentSet::of(&intents);
        for (label, state) in states() {
            let plan = route(&set, &state);
            plan.check().unwrap_or_else(|e| panic!("{intents:?} on {label}: {e}"));
            let has = |n| plan.contains(n);
            let wants = |i| set.contains(i);
            if set.is_other() {
                assert_eq!(plan.steps, [NodeName::ResponseGenerator]);
                continue;
            }
            assert_eq!(has(NodeName::System), wants(Intent::System));
            assert_eq!(has(NodeName::VisualizationAgent), wants(Intent::Visualization));
            assert_eq!(has(NodeName::Customizer), wants(Intent::Customization));
            assert_eq!(has(NodeName::ExplanationAgent), wants(Intent::Explanation));
            if has(NodeName::VisualizationAgent) {
                assert!(has(NodeName::SqlAgent));
            }
            if wants(Intent::Insight) {
                assert!(has(NodeName::AnalysisAgent));
                assert!(has(NodeName::SqlAgent) || state.last_table.is_some());
            }
            if has(NodeName::ExplanationAgent) {
                assert!(has(NodeName::AnalysisAgent) || !state.insights.is_empty(), "{intents:?} on {label}");
            }
            plans += 1;
        }
    }
    assert!(plans > 0);
}

fn graph_with(node: NodeName, handler: Arc<dyn NodeHandler>) -> WorkflowGraph {
    let mut registry = default_registry();
    registry.insert(node, handler);
    compile_workflow(registry).unwrap()
}

fn failing() -> Arc<dyn NodeHandler> {
    Arc::new(|cx: &mut NodeContext<'_>| -> Result<NodeOutput, NodeError> {
        cx.state.charts.clear();
        cx.state.insights.clear();
        Err(NodeError::new("Injected", "injected failure"))
    })
}

fn panicking() -> Arc<dyn NodeHandler> {
    Arc::new(|cx: &mut NodeContext<'_>| -> Result<NodeOutput, NodeError> {
        cx.state.charts.clear();
        panic!("injected panic")
    })
}

#[test]
fn node_failures_are_contained() {
    let fx = Fixture::new();
    let rt = stub_runtime();
    let (base, _) = turn(fx.connected(&rt), "Show me a bar chart of sales by month", &rt);
    let text = "Show me a bar chart of sales by region and explain the biggest trend";
    let nodes = [NodeName::SqlAgent, NodeName::VisualizationAgent, NodeName::AnalysisAgent, NodeName::ExplanationAgent];
    for node in nodes {
        for (kind, handler, code) in [("fail", failing(), "Injected"), ("panic", panicking(), "NodePanicked")] {
            let graph = graph_with(node, handler);
            let (after, bundle) = run_turn(base.clone(), &message(text), &graph, &rt);
            assert!(bundle.error_codes().contains(&code), "{kind} in {node}: {:?}", bundle.errors);
            assert!(!bundle.message.is_empty());
            let last = after.trace.last().unwrap();
            assert_eq!((last.node.as_str(), &last.status), ("ResponseGenerator", &TraceStatus::Ok));
            let failed = after.trace.iter().find(|e| e.node == node.name()).unwrap();
            assert_eq!(failed.status, TraceStatus::Error(code.into()));
            // The failed node's scratch mutations were discarded.
            assert!(after.charts.len() >= base.charts.len(), "{kind} in {node} cleared charts");
            if node == NodeName::SqlAgent {
                let skipped: Vec<&str> = after
                    .trace
                    .iter()
                    .filter(|e| e.status == TraceStatus::Error("Skipped".into()))
                    .map(|e| e.node.as_str())
                    .collect();
                assert_eq!(skipped, ["VisualizationAgent", "AnalysisAgent", "ExplanationAgent"]);
            }
            assert_eq!(after.history.len(), base.history.len() + 1);
        }
    }
}

#[test]
fn response_node_failure_falls_back() {
    let rt = stub_runtime();
    let graph = graph_with(NodeName::ResponseGenerator, panicking());
    let (after, bundle) = run_turn(ConversationState::new(SESSION), &message("hello"), &graph, &rt);
    assert_eq!(bundle.error_codes(), ["NodePanicked"]);
    assert!(bundle.message.contains("NodePanicked"), "{}", bundle.message);
    assert_eq!(after.history.len(), 1);
}

#[test]
fn empty_and_foreign_messages() {
    let rt = stub_runtime();
    let graph = WorkflowGraph::standard();
    let (_, bundle) = run_turn(ConversationState::new(SESSION), &message("   "), &graph, &rt);
    assert_eq!(bundle.message, FALLBACK_MESSAGE);
    let foreign = UserMessage::new("someone-else", "Show me a bar chart of sales by month");
    let (after, bundle) = run_turn(ConversationState::new(SESSION), &foreign, &graph, &rt);
    assert_eq!(bundle.error_codes(), ["SessionMismatch"]);
    assert!(after.charts.is_empty());
}

#[test]
fn chart_ids_stay_unique() {
    let fx = Fixture::new();
    let rt = stub_runtime();
    let (s, _) = turn(fx.connected(&rt), "Show me a bar chart of sales by month", &rt);
    let (s, _) = turn(s, "Show me a bar chart of sales by month", &rt);
    let (s, _) = turn(s, "Show me a bar chart of sales by month", &rt);
    let ids: Vec<String> = s.charts.iter().map(|c| c.chart_id.clone()).collect();
    assert_eq!(ids.len(), 3);
    assert_eq!(ids[1], format!("{}-2", ids[0]));
    assert_eq!(ids[2], format!("{}-3", ids[0]));
    let (s, bundle) = turn(s, &format!("Change the color of {} to red", ids[0]), &rt);
    assert!(bundle.errors.is_empty(), "{:?}", bundle.errors);
    assert_eq!(s.charts.last().unwrap().chart_id, ids[0]);
    assert_eq!(s.charts.last().unwrap().style.mark_color.as_deref(), Some("red"));
}

#[test]
fn state_round_trips_through_canonical_form() {
    let fx = Fixture::new();
    let rt = stub_runtime();
    let (s, _) = turn(fx.connected(&rt), "Show me a bar chart of sales and explain the biggest trend", &rt);
    let text = s.to_canonical().unwrap();
    let back = ConversationState::from_canonical(&text).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_canonical().unwrap(), text);
    s.check().unwrap();
}

#[test]
fn disconnect_clears_connection() {
    let fx = Fixture::new();
    let rt = stub_runtime();
    let (s, bundle) = turn(fx.connected(&rt), "disconnect from the database", &rt);
    assert!(bundle.errors.is_empty(), "{:?}", bundle.errors);
    assert!(s.active_connection.is_none() && s.schema_cache.is_none());
    let (_, bundle) = turn(s, "Show me a bar chart of sales by month", &rt);
    assert_eq!(bundle.error_codes(), ["NoConnection"]);
}
