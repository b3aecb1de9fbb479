//! Built-in node handlers.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::graph::{NodeContext, NodeHandler};
use super::{
    generate_response, CustomizerOutput, ExplanationOutput, NodeError, NodeName, NodeOutput, SqlOutput, SystemAction,
    SystemOutput,
};
use crate::analysis::generate_insights;
use crate::customize::{customize, parse_customization};
use crate::explain::explain;
use crate::sql::{
    execute_sql, generate_sql, parse_dsn, retrieve_metadata, validate_sql_with, ConnectionConfig, SqlError,
};
use crate::viz::visualize;

fn no_data() -> NodeError {
    NodeError::new("NoData", "there is no query result to work with yet")
}

/// Connects, disconnects, reports the connection or points at chart
/// exports.
pub struct SystemNode;

fn location_in_text(text: &str) -> Option<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c| c == '"' || c == '\'' || c == ',' || c == '<' || c == '>'))
        .find(|t| {
            let lower = t.to_ascii_lowercase();
            t.contains("://") || [".db", ".sqlite", ".sqlite3"].iter().any(|ext| lower.ends_with(ext))
        })
}

fn connect(cx: &mut NodeContext<'_>, config: ConnectionConfig) -> Result<NodeOutput, NodeError> {
    if !config.read_only {
        return Err(SqlError::WriteAccessRequested.into());
    }
    let mut snapshot = retrieve_metadata(&cx.runtime.connector, &config)?;
    snapshot.fetched_at = cx.message.received_at;
    let summary = snapshot.summary();
    let message = format!("Connected to {} database {}: {summary}.", config.dialect, config.redacted_location());
    cx.state.active_connection = Some(config);
    cx.state.schema_cache = Some(snapshot);
    cx.state.last_table = None;
    Ok(NodeOutput::System(SystemOutput { action: SystemAction::Connect, message, schema: Some(summary) }))
}

impl NodeHandler for SystemNode {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let lower = cx.message.text.to_lowercase();
        if let Some(config) = cx.message.connection.clone() {
            return connect(cx, config);
        }
        if lower.contains("disconnect") {
            let had = cx.state.active_connection.take();
            cx.state.schema_cache = None;
            cx.state.last_table = None;
            let message = match had {
                Some(c) => format!("Disconnected from {}.", c.redacted_location()),
                None => "No database was connected.".to_string(),
            };
            return Ok(NodeOutput::System(SystemOutput { action: SystemAction::Disconnect, message, schema: None }));
        }
        if lower.contains("connect") {
            if let Some(loc) = location_in_text(&cx.message.text) {
                let config = parse_dsn(loc)?;
                return connect(cx, config);
            }
        }
        if lower.contains("export") {
            let chart = cx.state.charts.last().ok_or_else(|| NodeError::new("NoChart", "there is no chart to export"))?;
            let message = format!(
                "Chart \"{}\" ({}) can be exported as json or csv from /sessions/{}/charts/{}/export.",
                chart.title, chart.chart_id, cx.state.session_id, chart.chart_id
            );
            return Ok(NodeOutput::System(SystemOutput { action: SystemAction::Export, message, schema: None }));
        }
        let (message, schema) = match (&cx.state.active_connection, &cx.state.schema_cache) {
            (Some(c), schema) => (
                format!("Connected to {} database {}.", c.dialect, c.redacted_location()),
                schema.as_ref().map(|s| s.summary()),
            ),
            (None, _) => {
                return Err(NodeError::new(
                    "NoConnection",
                    "no database is connected; send a connection to register one",
                ))
            }
        };
        Ok(NodeOutput::System(SystemOutput { action: SystemAction::Status, message, schema }))
    }
}

/// Metadata, generation, validation and execution.
pub struct SqlAgent;

impl NodeHandler for SqlAgent {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let rt = cx.runtime;
        let config = cx.state.active_connection.clone().ok_or(SqlError::NoConnection)?;
        if cx.state.schema_cache.is_none() {
            let mut snapshot = retrieve_metadata(&rt.connector, &config)?;
            snapshot.fetched_at = cx.message.received_at;
            cx.state.schema_cache = Some(snapshot);
        }
        let snapshot = cx.state.schema_cache.as_ref().expect("cached above");
        let plan = generate_sql(&cx.message.text, snapshot, rt.providers.model())?;
        let parser = rt.connector.adapter(config.dialect).parser_dialect();
        let validated = validate_sql_with(&plan, snapshot, rt.settings.default_limit, parser.as_ref())?;
        let table = execute_sql(&rt.connector, &validated, &config, rt.settings.row_cap, rt.settings.deadline_ms)?;
        let out = SqlOutput {
            sql: validated.sql.clone(),
            generator: plan.generator,
            rationale: plan.rationale,
            warnings: validated.warnings,
            injected_limit: validated.injected_limit,
            columns: table.columns.iter().map(|c| c.name.clone()).collect(),
            rows: table.row_count(),
            truncated: table.truncated,
        };
        cx.state.last_table = Some(table);
        Ok(NodeOutput::SqlAgent(out))
    }
}

/// Preprocess, rank and build a chart over the last table.
pub struct VisualizationAgent;

impl NodeHandler for VisualizationAgent {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let table = cx.state.last_table.as_ref().ok_or_else(no_data)?;
        let mut v = visualize(table, &cx.message.text, &cx.runtime.matrix)?;
        let base = v.chart.chart_id.clone();
        let mut n = 2;
        while cx.state.chart(&v.chart.chart_id).is_some() {
            v.chart.chart_id = format!("{base}-{n}");
            n += 1;
        }
        cx.state.charts.push(v.chart.clone());
        Ok(NodeOutput::VisualizationAgent(v))
    }
}

/// Trends, anomalies and correlations in the last table.
pub struct AnalysisAgent;

impl NodeHandler for AnalysisAgent {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let table = cx.state.last_table.as_ref().ok_or_else(no_data)?;
        let report = generate_insights(
            table,
            &cx.message.text,
            cx.runtime.providers.model(),
            &cx.runtime.settings.thresholds,
        )?;
        cx.state.insights.push(report.clone());
        Ok(NodeOutput::AnalysisAgent(report))
    }
}

/// Search plan, evidence and explanation for the latest insight.
pub struct ExplanationAgent;

impl NodeHandler for ExplanationAgent {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let insight = cx
            .state
            .insights
            .last()
            .ok_or_else(|| NodeError::new("NoFindings", "there is no insight to explain"))?;
        let rt = cx.runtime;
        let (plan, evidence, explanation) = explain(
            insight,
            &cx.message.text,
            rt.providers.search.as_deref(),
            rt.providers.model(),
            rt.settings.k_per_query,
        )?;
        Ok(NodeOutput::ExplanationAgent(ExplanationOutput { plan, evidence, explanation }))
    }
}

/// Patches the chart named in the message, else the most recent one.
pub struct Customizer;

impl NodeHandler for Customizer {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        let named = cx
            .message
            .text
            .split(|c: char| c.is_whitespace() || c == '"' || c == ',')
            .find_map(|t| cx.state.charts.iter().position(|c| c.chart_id == t));
        let index = named
            .or_else(|| cx.state.charts.len().checked_sub(1))
            .ok_or_else(|| NodeError::new("NoChart", "there is no chart to customize"))?;
        let chart = &cx.state.charts[index];
        let patch = parse_customization(&cx.message.text, chart, cx.runtime.providers.model())?;
        let (updated, validated) = customize(chart, &patch)?;
        cx.state.charts.remove(index);
        cx.state.charts.push(updated.clone());
        Ok(NodeOutput::Customizer(CustomizerOutput { chart: updated, patch: validated }))
    }
}

/// Deterministic templating over the step outputs.
pub struct ResponseGenerator;

impl NodeHandler for ResponseGenerator {
    fn run(&self, cx: &mut NodeContext<'_>) -> Result<NodeOutput, NodeError> {
        Ok(NodeOutput::ResponseGenerator(generate_response(cx.state, cx.outputs)))
    }
}

/// The built-in handler for every node.
pub fn default_registry() -> BTreeMap<NodeName, Arc<dyn NodeHandler>> {
    let mut r: BTreeMap<NodeName, Arc<dyn NodeHandler>> = BTreeMap::new();
    r.insert(NodeName::System, Arc::new(SystemNode));
    r.insert(NodeName::SqlAgent, Arc::new(SqlAgent));
    r.insert(NodeName::VisualizationAgent, Arc::new(VisualizationAgent));
    r.insert(NodeName::AnalysisAgent, Arc::new(AnalysisAgent));
    r.insert(NodeName::ExplanationAgent, Arc::new(ExplanationAgent));
    r.insert(NodeName::Customizer, Arc::new(Customizer));
    r.insert(NodeName::ResponseGenerator, Arc::new(ResponseGenerator));
    r
}
