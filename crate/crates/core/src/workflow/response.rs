use std::collections::BTreeSet;

use super::{ConversationState, NodeOutput, ResponseBundle, StepOutputs};
use crate::viz::{ChartSpec, ChartType, Channel};

pub const FALLBACK_MESSAGE: &str = "I can query your database and chart the result (\"show me a bar chart of sales by month\"), \
point out trends, anomalies and correlations, explain a finding with outside context, change an existing chart \
(\"change the color of this chart to blue\") or connect to a database.";

fn caption(chart: &ChartSpec) -> String {
    let field = |c: Channel| chart.encodings.get(&c).map(|e| e.field.as_str()).unwrap_or("?");
    let what = match chart.mark {
        ChartType::Histogram => format!("histogram of {}", field(Channel::X)),
        ChartType::Heatmap => format!("heatmap of {} by {} and {}", field(Channel::Color), field(Channel::X), field(Channel::Y)),
        mark => format!("{mark} chart of {} by {}", field(Channel::Y), field(Channel::X)),
    };
    format!("Chart \"{}\" ({}): {what}, {} rows.", chart.title, chart.chart_id, chart.row_count())
}

/// Assembles the bundle from whatever the steps produced, in plan order:
/// data summary, chart captions, insight narrative, explanation, then each
/// error code once.
pub fn generate_response(_state: &ConversationState, outputs: &StepOutputs) -> ResponseBundle {
    if outputs.is_empty() {
        return ResponseBundle {
            message: FALLBACK_MESSAGE.to_string(),
            charts: Vec::new(),
            insight: None,
            explanation: None,
            errors: Vec::new(),
        };
    }
    let mut parts: Vec<String> = Vec::new();
    let mut charts: Vec<ChartSpec> = Vec::new();
    let mut insight = None;
    let mut explanation = None;
    let mut put_chart = |chart: &ChartSpec| {
        charts.retain(|c| c.chart_id != chart.chart_id);
        charts.push(chart.clone());
    };
    for output in outputs.outputs.values() {
        match output {
            NodeOutput::System(s) => parts.push(s.message.clone()),
            NodeOutput::SqlAgent(q) => {
                let mut text = format!(
                    "The query returned {} rows and {} columns ({}).",
                    q.rows,
                    q.columns.len(),
                    q.columns.join(", ")
                );
                if q.truncated {
                    text.push_str(" The result was truncated at the row limit.");
                }
                for w in &q.warnings {
                    text.push_str(&format!(" Warning: {w}."));
                }
                parts.push(text);
            }
            NodeOutput::VisualizationAgent(v) => {
                parts.push(caption(&v.chart));
                put_chart(&v.chart);
            }
            NodeOutput::AnalysisAgent(r) => {
                parts.push(r.narrative.clone());
                insight = Some(r.clone());
            }
            NodeOutput::ExplanationAgent(e) => {
                parts.push(e.explanation.text.clone());
                explanation = Some(e.explanation.clone());
            }
            NodeOutput::Customizer(c) => {
                let paths: Vec<&str> = c.patch.patch.ops.iter().map(|o| o.path.as_str()).collect();
                let mut text = format!(
                    "Updated chart \"{}\" ({}) to revision {}: {}.",
                    c.chart.title,
                    c.chart.chart_id,
                    c.chart.revision,
                    paths.join(", ")
                );
                for w in &c.patch.warnings {
                    text.push_str(&format!(" Note: {w}."));
                }
                parts.push(text);
                put_chart(&c.chart);
            }
            NodeOutput::ResponseGenerator(_) => {}
        }
    }
    let mut seen = BTreeSet::new();
    for e in &outputs.errors {
        if seen.insert(e.code.as_str()) {
            parts.push(format!("Error {}: {}.", e.code, e.message.trim_end_matches('.')));
        }
    }
    let parts: Vec<String> = parts.into_iter().filter(|p| !p.trim().is_empty()).collect();
    ResponseBundle {
        message: if parts.is_empty() { FALLBACK_MESSAGE.to_string() } else { parts.join("\n\n") },
        charts,
        insight,
        explanation,
        errors: outputs.errors.clone(),
    }
}
