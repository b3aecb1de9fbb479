use std::collections::BTreeSet;

use serde_json::Value as Json;

use super::dialect::{quote_if_needed, EmbeddedAdapter};
use super::{Generator, SchemaSnapshot, SqlError, SqlPlan, TableMeta};
use crate::providers::{FieldKind, ModelClient, SchemaField, StructuredPrompt, TaskTag};
use crate::table::SemanticType;

/// Lowercased alphanumeric tokens.
pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

pub(crate) fn column_matches(name: &str, tokens: &BTreeSet<String>) -> bool {
    let lower = name.to_lowercase();
    if tokens.contains(&lower) {
        return true;
    }
    let parts: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|p| !p.is_empty()).collect();
    parts.len() > 1 && parts.iter().all(|p| tokens.contains(*p))
}

fn has_phrase(tokens: &[String], phrase: &[&str]) -> bool {
    tokens.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

/// Deterministic offline generator.
///
/// Picks the table with the most column-name matches, a quantitative
/// measure and an optional temporal/categorical dimension, then emits a
/// grouped aggregate (or a plain projection when there is no dimension).
pub fn fallback_generate_sql(question: &str, snapshot: &SchemaSnapshot) -> Result<SqlPlan, SqlError> {
    if snapshot.tables.is_empty() {
        return Err(SqlError::NoTables);
    }
    let token_list = tokenize(question);
    let tokens: BTreeSet<String> = token_list.iter().cloned().collect();

    let mut candidates: Vec<&TableMeta> = snapshot
        .tables
        .iter()
        .filter(|t| t.columns.iter().any(|c| c.semantic_type == SemanticType::Quantitative))
        .collect();
    if candidates.is_empty() {
        return Err(SqlError::NoUsableColumns);
    }
    candidates.sort_by(|a, b| a.name.cmp(&b.name));
    let score = |t: &TableMeta| {
        let cols = t.columns.iter().filter(|c| column_matches(&c.name, &tokens)).count();
        let named = column_matches(&t.name, &tokens) as usize;
        (cols, named)
    };
    let mut table = candidates[0];
    for t in &candidates[1..] {
        if score(t) > score(table) {
            table = t;
        }
    }

    let matched = |ty: SemanticType| {
        table
            .columns
            .iter()
            .find(|c| c.semantic_type == ty && column_matches(&c.name, &tokens))
    };
    let measure = matched(SemanticType::Quantitative)
        .or_else(|| table.columns.iter().find(|c| c.semantic_type == SemanticType::Quantitative))
        .ok_or(SqlError::NoUsableColumns)?;
    let over_time = ["trend", "trends", "growth", "time"].iter().any(|w| tokens.contains(*w));
    let dimension = matched(SemanticType::Temporal)
        .or_else(|| matched(SemanticType::Categorical))
        .or_else(|| {
            over_time
                .then(|| table.columns.iter().find(|c| c.semantic_type == SemanticType::Temporal))
                .flatten()
        });

    let aggregate = if tokens.contains("average") || tokens.contains("mean") {
        "AVG"
    } else if tokens.contains("count") || has_phrase(&token_list, &["number", "of"]) {
        "COUNT"
    } else {
        "SUM"
    };

    let q = |ident: &str| quote_if_needed(&EmbeddedAdapter, ident);
    let (raw_sql, rationale) = match dimension {
        Some(dim) => (
            format!(
                "SELECT {d}, {aggregate}({m}) FROM {t} GROUP BY {d} ORDER BY {d}",
                d = q(&dim.name),
                m = q(&measure.name),
                t = q(&table.name)
            ),
            format!(
                "{aggregate} of {} per {} ({}) from {}",
                measure.name, dim.name, dim.semantic_type, table.name
            ),
        ),
        None => (
            format!("SELECT {} FROM {}", q(&measure.name), q(&table.name)),
            format!("values of {} from {}", measure.name, table.name),
        ),
    };
    Ok(SqlPlan {
        raw_sql,
        rationale,
        referenced_tables: vec![table.name.clone()],
        generator: Generator::Fallback,
    })
}

/// Prompt context: the question plus every table's columns, types and
/// sample values.
pub fn sql_prompt_context(question: &str, snapshot: &SchemaSnapshot) -> String {
    let mut out = format!("question: {question}\nschema:\n");
    for t in &snapshot.tables {
        out.push_str(&format!("table {} ({} rows)\n", t.name, t.row_count));
        for c in &t.columns {
            out.push_str(&format!(
                "  {} {} [{}] samples: {}\n",
                c.name,
                c.declared_type,
                c.semantic_type,
                c.sample_values.join(" | ")
            ));
        }
    }
    out
}

fn sql_schema() -> Vec<SchemaField> {
    vec![
        SchemaField::required("sql", FieldKind::String),
        SchemaField::required("rationale", FieldKind::String),
        SchemaField::required("tables", FieldKind::Array),
    ]
}

/// Asks the model for `{sql, rationale, tables}`; any provider failure
/// (or a disabled provider) falls back to [`fallback_generate_sql`].
pub fn generate_sql(
    question: &str,
    snapshot: &SchemaSnapshot,
    model: Option<&ModelClient>,
) -> Result<SqlPlan, SqlError> {
    if snapshot.tables.is_empty() {
        return Err(SqlError::NoTables);
    }
    if let Some(model) = model {
        let prompt = StructuredPrompt::new(TaskTag::SqlGenerate, sql_prompt_context(question, snapshot), sql_schema())
            .expect("sql schema is non-empty");
        if let Ok(done) = model.complete(&prompt) {
            let sql = done.value.get("sql").and_then(Json::as_str).unwrap_or_default().trim().to_string();
            if !sql.is_empty() {
                let tables = done
                    .value
                    .get("tables")
                    .and_then(Json::as_array)
                    .map(|a| a.iter().filter_map(Json::as_str).map(String::from).collect())
                    .unwrap_or_default();
                return Ok(SqlPlan {
                    raw_sql: sql,
                    rationale: done.value.get("rationale").and_then(Json::as_str).unwrap_or_default().to_string(),
                    referenced_tables: tables,
                    generator: Generator::Model,
                });
            }
        }
    }
    fallback_generate_sql(question, snapshot).map_err(|e| match e {
        SqlError::NoTables => SqlError::NoTables,
        SqlError::NoUsableColumns => SqlError::NoUsableColumns,
        other => SqlError::GenerationFailed(other.to_string()),
    })
}
