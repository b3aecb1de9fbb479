//! The analysis agent: trends, anomalies and correlations in a result
//! table, rendered into an [`InsightReport`].

mod detect;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::providers::{FieldKind, ModelClient, SchemaField, StructuredPrompt, TaskTag};
use crate::sql::generate::tokenize;
use crate::table::{parse_iso8601, ResultTable, SemanticType, Value};

pub use detect::{
    detect_anomalies, detect_anomalies_with, detect_correlations, detect_correlations_with, detect_trend,
    detect_trend_with, least_squares, median, pearson, LinearFit, DEGENERATE_SCORE, MODIFIED_Z_SCALE,
};

/// Detector thresholds; every value can be overridden from config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub trend_r2: f64,
    pub anomaly_z: f64,
    pub correlation_r: f64,
    pub min_correlation_n: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { trend_r2: 0.5, anomaly_z: 3.5, correlation_r: 0.7, min_correlation_n: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFinding {
    pub field: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyRule {
    Mad,
    MadDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFinding {
    pub field: String,
    pub row_index: usize,
    pub value: f64,
    pub score: f64,
    pub rule: AnomalyRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFinding {
    pub field_a: String,
    pub field_b: String,
    pub r: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Finding {
    Trend(TrendFinding),
    Anomaly(AnomalyFinding),
    Correlation(CorrelationFinding),
}

impl Finding {
    /// Fields the finding is about.
    pub fn fields(&self) -> Vec<&str> {
        match self {
            Finding::Trend(t) => vec![&t.field],
            Finding::Anomaly(a) => vec![&a.field],
            Finding::Correlation(c) => vec![&c.field_a, &c.field_b],
        }
    }

    /// One-sentence rendering used in narratives and explanations.
    pub fn sentence(&self) -> String {
        match self {
            Finding::Trend(t) => format!(
                "{} shows {} trend (slope {}, R²={:.3}).",
                t.field,
                match t.direction {
                    Direction::Increasing => "an increasing",
                    Direction::Decreasing => "a decreasing",
                },
                fmt_num(t.slope),
                t.r2
            ),
            Finding::Anomaly(a) => match a.rule {
                AnomalyRule::Mad => format!(
                    "{} has an unusual value of {} at row {} (modified z-score {:.2}).",
                    a.field,
                    fmt_num(a.value),
                    a.row_index,
                    a.score
                ),
                AnomalyRule::MadDegenerate => format!(
                    "{} has an unusual value of {} at row {}, away from an otherwise constant level.",
                    a.field,
                    fmt_num(a.value),
                    a.row_index
                ),
            },
            Finding::Correlation(c) => format!(
                "{} and {} are strongly {} correlated (r={:.3}, n={}).",
                c.field_a,
                c.field_b,
                if c.r >= 0.0 { "positively" } else { "negatively" },
                c.r,
                c.n
            ),
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub findings: Vec<Finding>,
    pub narrative: String,
    pub source_sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("the result has no quantitative column to analyze")]
    NothingToAnalyze,
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        "NothingToAnalyze"
    }
}

pub const NO_FINDINGS_NARRATIVE: &str = "No notable trends, anomalies or correlations were found.";

fn temporal_key(v: &Value) -> Option<f64> {
    match v {
        Value::Text(s) => parse_iso8601(s).map(|d| d.and_utc().timestamp() as f64 / 86_400.0),
        other => other.as_f64(),
    }
}

/// Runs every detector over the quantitative columns.
///
/// Series are ordered by the first temporal column when there is one (trend
/// slopes are then per day) and by row order otherwise. Anomaly indices
/// always refer to table rows.
pub fn detect_findings(table: &ResultTable, th: &Thresholds) -> Result<Vec<Finding>, AnalysisError> {
    let quants: Vec<usize> = (0..table.column_count())
        .filter(|&i| table.columns[i].semantic_type == SemanticType::Quantitative)
        .collect();
    if quants.is_empty() {
        return Err(AnalysisError::NothingToAnalyze);
    }
    let time_col = (0..table.column_count()).find(|&i| table.columns[i].semantic_type == SemanticType::Temporal);
    let mut order: Vec<(usize, f64)> = match time_col {
        Some(t) => table
            .column_values(t)
            .enumerate()
            .filter_map(|(row, v)| temporal_key(v).map(|k| (row, k)))
            .collect(),
        None => (0..table.row_count()).map(|r| (r, r as f64)).collect(),
    };
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let origin = order.first().map_or(0.0, |o| o.1);

    let mut trends = Vec::new();
    let mut anomalies = Vec::new();
    for &q in &quants {
        let name = &table.columns[q].name;
        let series: Vec<(usize, f64, f64)> = order
            .iter()
            .filter_map(|&(row, key)| table.rows[row][q].as_f64().map(|y| (row, key - origin, y)))
            .collect();
        let xs: Vec<f64> = series.iter().map(|s| s.1).collect();
        let ys: Vec<f64> = series.iter().map(|s| s.2).collect();
        if let Some(t) = detect_trend_with(name, &xs, &ys, th) {
            trends.push(Finding::Trend(t));
        }
        for mut a in detect_anomalies_with(name, &ys, th) {
            a.row_index = series[a.row_index].0;
            anomalies.push(a);
        }
    }
    anomalies.sort_by(|a, b| {
        b.score
            .abs()
            .total_cmp(&a.score.abs())
            .then_with(|| a.field.cmp(&b.field))
            .then(a.row_index.cmp(&b.row_index))
    });
    let mut correlations = detect_correlations_with(table, th);
    correlations.sort_by(|a, b| {
        b.r.abs()
            .total_cmp(&a.r.abs())
            .then_with(|| a.field_a.cmp(&b.field_a))
            .then_with(|| a.field_b.cmp(&b.field_b))
    });

    let mut findings = trends;
    findings.extend(anomalies.into_iter().map(Finding::Anomaly));
    findings.extend(correlations.into_iter().map(Finding::Correlation));
    Ok(findings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Trend,
    Anomaly,
    Correlation,
}

fn kind(f: &Finding) -> Kind {
    match f {
        Finding::Trend(_) => Kind::Trend,
        Finding::Anomaly(_) => Kind::Anomaly,
        Finding::Correlation(_) => Kind::Correlation,
    }
}

/// Kinds the question asks about, in order of first mention.
fn emphasis(question: &str) -> Vec<Kind> {
    let mut out = Vec::new();
    for t in tokenize(question) {
        let k = if t.starts_with("trend") || t.starts_with("grow") || t.starts_with("declin") || t.starts_with("drop") {
            Some(Kind::Trend)
        } else if ["spike", "unusual", "outlier", "anomal", "odd", "strange"].iter().any(|w| t.starts_with(w)) {
            Some(Kind::Anomaly)
        } else if t.starts_with("correlat") || t.starts_with("relat") {
            Some(Kind::Correlation)
        } else {
            None
        };
        if let Some(k) = k {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    out
}

/// Template narrative: one sentence per finding, kinds the question
/// mentions first.
pub fn template_narrative(findings: &[Finding], question: &str) -> String {
    if findings.is_empty() {
        return NO_FINDINGS_NARRATIVE.to_string();
    }
    let first = emphasis(question);
    let rank = |k: Kind| first.iter().position(|&e| e == k).unwrap_or(first.len() + k as usize);
    let mut ordered: Vec<&Finding> = findings.iter().collect();
    ordered.sort_by_key(|f| rank(kind(f)));
    ordered.iter().map(|f| f.sentence()).collect::<Vec<_>>().join(" ")
}

/// Findings come from the detectors only; an enabled model may rephrase
/// the narrative, and its text is kept only if it names every finding's
/// fields.
pub fn generate_insights(
    table: &ResultTable,
    question: &str,
    model: Option<&ModelClient>,
    th: &Thresholds,
) -> Result<InsightReport, AnalysisError> {
    let findings = detect_findings(table, th)?;
    let mut narrative = template_narrative(&findings, question);
    if let (Some(model), false) = (model, findings.is_empty()) {
        let context = format!(
            "question: {question}\nfindings: {}\ndraft: {narrative}",
            serde_json::to_string(&findings).unwrap_or_default()
        );
        let prompt = StructuredPrompt::new(
            TaskTag::InsightNarrate,
            context,
            vec![SchemaField::required("narrative", FieldKind::String)],
        )
        .expect("narrative schema is non-empty");
        if let Ok(done) = model.complete(&prompt) {
            let text = done.value.get("narrative").and_then(Json::as_str).unwrap_or_default().trim();
            if !text.is_empty() && findings.iter().all(|f| f.fields().iter().all(|name| text.contains(name))) {
                narrative = text.to_string();
            }
        }
    }
    Ok(InsightReport { findings, narrative, source_sql: table.source_sql.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnSpec;

    fn monthly(amounts: &[f64]) -> ResultTable {
        let rows = amounts
            .iter()
            .enumerate()
            .map(|(i, a)| vec![Value::Text(format!("2024-{:02}-01", i + 1)), Value::Float(*a)])
            .collect();
        ResultTable::new(
            vec![
                ColumnSpec { name: "month".into(), semantic_type: SemanticType::Temporal },
                ColumnSpec { name: "amount".into(), semantic_type: SemanticType::Quantitative },
            ],
            rows,
            "SELECT month, amount FROM sales",
        )
        .unwrap()
    }

    #[test]
    fn linear_growth_gives_one_trend() {
        let amounts: Vec<f64> = (0..12).map(|i| 1000.0 + 50.0 * i as f64).collect();
        let r = generate_insights(&monthly(&amounts), "how are sales doing", None, &Thresholds::default()).unwrap();
        assert_eq!(r.findings.len(), 1);
        let Finding::Trend(t) = &r.findings[0] else { panic!("expected a trend") };
        assert_eq!(t.field, "amount");
        assert_eq!(t.direction, Direction::Increasing);
        assert!(r.narrative.contains("amount shows an increasing trend"));
        assert_eq!(r.narrative.matches("amount").count(), 1);
    }

    #[test]
    fn single_categorical_column_is_nothing_to_analyze() {
        let t = ResultTable::new(
            vec![ColumnSpec { name: "region".into(), semantic_type: SemanticType::Categorical }],
            vec![vec![Value::Text("north".into())]],
            "q",
        )
        .unwrap();
        assert_eq!(
            generate_insights(&t, "", None, &Thresholds::default()),
            Err(AnalysisError::NothingToAnalyze)
        );
    }

    #[test]
    fn question_reorders_narrative_not_findings() {
        let mut amounts: Vec<f64> = (0..12).map(|i| 1000.0 + 50.0 * i as f64).collect();
        amounts[6] = 9000.0;
        let th = Thresholds { trend_r2: 0.0, ..Thresholds::default() };
        let a = generate_insights(&monthly(&amounts), "any spikes?", None, &th).unwrap();
        let b = generate_insights(&monthly(&amounts), "what is the trend", None, &th).unwrap();
        assert_eq!(a.findings, b.findings);
        assert!(matches!(a.findings[0], Finding::Trend(_)));
        assert!(a.narrative.starts_with("amount has an unusual value"));
        assert!(b.narrative.starts_with("amount shows"));
    }

    #[test]
    fn anomaly_index_refers_to_table_rows() {
        // rows out of time order: the spike sits at table row 0
        let mut t = monthly(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        t.rows[5][1] = Value::Float(50.0);
        t.rows.swap(0, 5);
        let f = detect_findings(&t, &Thresholds::default()).unwrap();
        let Some(Finding::Anomaly(a)) = f.iter().find(|f| matches!(f, Finding::Anomaly(_))) else {
            panic!("expected an anomaly")
        };
        assert_eq!(a.row_index, 0);
    }
}
