//! The explanation agent: plan web searches from an insight, gather
//! evidence and synthesize an explanation that cites only what was found.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::analysis::{Direction, Finding, InsightReport};
use crate::canonical::digest;
use crate::providers::{
    search, FieldKind, ModelClient, SchemaField, SearchAdapter, SearchResultItem, StructuredPrompt, TaskTag,
};

pub const MAX_QUERIES: usize = 5;
/// Findings that get a query of their own.
pub const TOP_FINDINGS: usize = 3;
pub const MAX_QUERY_CHARS: usize = 200;
pub const DEFAULT_K_PER_QUERY: usize = 3;
pub const MAX_K_PER_QUERY: usize = 5;
/// Evidence items quoted in a template explanation.
pub const MAX_CITED: usize = 5;
pub const NO_CONTEXT_MARKER: &str = "no external context available";
pub const ALL_QUERIES_FAILED: &str = "AllQueriesFailed";

const SNIPPET_QUOTE_CHARS: usize = 240;

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "biggest", "by", "can", "chart", "could", "did",
    "do", "does", "explain", "for", "from", "graph", "happened", "how", "i", "in", "is", "it", "its", "me",
    "my", "of", "on", "or", "our", "plot", "please", "reason", "reasons", "show", "tell", "that", "the", "this",
    "to", "trend", "was", "were", "what", "when", "where", "which", "why", "with", "you",
];

const AGGREGATE_WORDS: &[&str] = &["sum", "avg", "count", "min", "max", "total"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub queries: Vec<String>,
    pub rationale: String,
    pub insight_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub items: Vec<SearchResultItem>,
    pub plan_digest: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvidenceSet {
    pub fn urls(&self) -> BTreeSet<&str> {
        self.items.iter().map(|i| i.url.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub citations: Vec<String>,
    pub insight_digest: String,
    pub grounded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplainError {
    #[error("the insight has no findings to explain")]
    NoFindings,
}

impl ExplainError {
    pub fn code(&self) -> &'static str {
        "NoFindings"
    }
}

/// Words of a field name without aggregate wrappers: `SUM(amount)` → `amount`.
fn field_terms(field: &str) -> String {
    field
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !AGGREGATE_WORDS.contains(&w.to_ascii_lowercase().as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn question_keywords(question: &str, exclude: &BTreeSet<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .filter(|w| {
            let lower = w.to_lowercase();
            !STOPWORDS.contains(&lower.as_str()) && !exclude.contains(&lower) && seen.insert(lower)
        })
        .map(String::from)
        .collect()
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => text[..i].trim_end().to_string(),
        None => text.to_string(),
    }
}

fn query_for(finding: &Finding, question: &str) -> String {
    let (subject, kind) = match finding {
        Finding::Trend(t) => (
            field_terms(&t.field),
            match t.direction {
                Direction::Increasing => "growth",
                Direction::Decreasing => "decline",
            },
        ),
        Finding::Anomaly(a) => (field_terms(&a.field), "anomaly"),
        Finding::Correlation(c) => (format!("{} {}", field_terms(&c.field_a), field_terms(&c.field_b)), "correlation"),
    };
    let mut exclude: BTreeSet<String> = subject.split_whitespace().map(str::to_lowercase).collect();
    exclude.insert(kind.to_string());
    let mut parts = vec![subject, kind.to_string()];
    parts.extend(question_keywords(question, &exclude));
    let query = parts.into_iter().filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ");
    truncate_chars(&query, MAX_QUERY_CHARS)
}

/// One query per top finding, built from the finding's field, its kind and
/// the question's content words.
pub fn plan_searches(insight: &InsightReport, question: &str) -> Result<SearchPlan, ExplainError> {
    if insight.findings.is_empty() {
        return Err(ExplainError::NoFindings);
    }
    let mut queries: Vec<String> = Vec::new();
    for f in insight.findings.iter().take(TOP_FINDINGS) {
        let q = query_for(f, question);
        if !q.is_empty() && !queries.contains(&q) {
            queries.push(q);
        }
    }
    queries.truncate(MAX_QUERIES);
    let used = insight.findings.len().min(TOP_FINDINGS);
    Ok(SearchPlan {
        rationale: format!("one query for each of the top {used} of {} findings", insight.findings.len()),
        queries,
        insight_digest: digest(insight),
    })
}

/// Runs every query in plan order. Failed queries are skipped with a
/// warning; duplicate urls keep their first occurrence.
pub fn execute_search_plan(plan: &SearchPlan, adapter: Option<&dyn SearchAdapter>, k_per_query: usize) -> EvidenceSet {
    let k = k_per_query.clamp(1, MAX_K_PER_QUERY);
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut failed = 0;
    for (i, q) in plan.queries.iter().enumerate() {
        let result = match adapter {
            Some(a) => search(a, q, k),
            None => Err(crate::providers::ProviderError::AdapterUnavailable("search is disabled".into())),
        };
        match result {
            Ok(found) => {
                for item in found {
                    if seen.insert(item.url.clone()) {
                        items.push(item);
                    }
                }
            }
            Err(e) => {
                failed += 1;
                warnings.push(format!("query {} skipped: {e}", i + 1));
            }
        }
    }
    if failed > 0 && failed == plan.queries.len() {
        warnings.push(ALL_QUERIES_FAILED.to_string());
    }
    EvidenceSet { items, plan_digest: digest(plan), warnings }
}

fn finding_summary(insight: &InsightReport) -> String {
    insight.findings.iter().take(TOP_FINDINGS).map(Finding::sentence).collect::<Vec<_>>().join(" ")
}

fn template_explanation(insight: &InsightReport, evidence: &EvidenceSet) -> Explanation {
    let summary = finding_summary(insight);
    let insight_digest = digest(insight);
    if evidence.items.is_empty() {
        return Explanation {
            text: format!("{summary} ({NO_CONTEXT_MARKER})"),
            citations: Vec::new(),
            insight_digest,
            grounded: false,
        };
    }
    let mut text = summary;
    text.push_str(" Possible context:");
    let mut citations = Vec::new();
    for (n, item) in evidence.items.iter().take(MAX_CITED).enumerate() {
        let snippet = truncate_chars(item.snippet.trim(), SNIPPET_QUOTE_CHARS);
        text.push_str(&format!(" [{}] {}: \"{}\"", n + 1, item.title.trim(), snippet));
        citations.push(item.url.clone());
    }
    text.push_str("\nSources:");
    for (n, url) in citations.iter().enumerate() {
        text.push_str(&format!("\n[{}] {url}", n + 1));
    }
    Explanation { text, citations, insight_digest, grounded: true }
}

fn synthesis_context(insight: &InsightReport, evidence: &EvidenceSet) -> String {
    let mut out = format!("findings:\n{}\nevidence:\n", finding_summary(insight));
    for item in &evidence.items {
        out.push_str(&format!("- {} | {} | {}\n", item.url, item.title, item.snippet));
    }
    out
}

/// Explanation from findings and evidence.
///
/// Without evidence the result is ungrounded and carries
/// [`NO_CONTEXT_MARKER`]. A model answer is used only when at least one of
/// its citations is an evidence url; citations outside the evidence are
/// dropped.
pub fn synthesize_explanation(
    insight: &InsightReport,
    evidence: &EvidenceSet,
    model: Option<&ModelClient>,
) -> Explanation {
    let fallback = template_explanation(insight, evidence);
    let Some(model) = model.filter(|_| !evidence.items.is_empty()) else {
        return fallback;
    };
    let prompt = StructuredPrompt::new(
        TaskTag::ExplainSynthesize,
        synthesis_context(insight, evidence),
        vec![
            SchemaField::required("text", FieldKind::String),
            SchemaField::required("citations", FieldKind::Array),
        ],
    )
    .expect("synthesis schema is non-empty");
    let Ok(done) = model.complete(&prompt) else {
        return fallback;
    };
    let text = done.value.get("text").and_then(Json::as_str).unwrap_or_default().trim().to_string();
    let allowed = evidence.urls();
    let mut citations: Vec<String> = Vec::new();
    for url in done.value.get("citations").and_then(Json::as_array).into_iter().flatten().filter_map(Json::as_str) {
        if allowed.contains(url) && !citations.iter().any(|c| c == url) {
            citations.push(url.to_string());
        }
    }
    if text.is_empty() || citations.is_empty() {
        return fallback;
    }
    Explanation { text, citations, insight_digest: fallback.insight_digest, grounded: true }
}

/// Plan, search and synthesize in one call.
pub fn explain(
    insight: &InsightReport,
    question: &str,
    search_adapter: Option<&dyn SearchAdapter>,
    model: Option<&ModelClient>,
    k_per_query: usize,
) -> Result<(SearchPlan, EvidenceSet, Explanation), ExplainError> {
    let plan = plan_searches(insight, question)?;
    let evidence = execute_search_plan(&plan, search_adapter, k_per_query);
    let explanation = synthesize_explanation(insight, &evidence, model);
    Ok((plan, evidence, explanation))
}
