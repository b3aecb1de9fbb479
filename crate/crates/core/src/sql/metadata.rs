use chrono::Utc;

use super::engine::Connector;
use super::{ColumnMeta, ConnectionConfig, SchemaSnapshot, SqlError, TableMeta};
use crate::table::text_semantic;

/// Introspects every user table reachable through `config`.
///
/// Semantic types come from the declared type via the dialect's mapping;
/// text-like columns are categorical when their distinct count is at most
/// `max(20, 5% of rows)` and unknown otherwise. Up to five non-null sample
/// values per column are taken in primary-key (or natural) order.
pub fn retrieve_metadata(connector: &Connector, config: &ConnectionConfig) -> Result<SchemaSnapshot, SqlError> {
    let adapter = connector.adapter(config.dialect);
    let mut conn = connector.checkout(config)?;
    let catalog = conn.catalog().map_err(|e| match e {
        SqlError::ExecutionFailed(msg) => SqlError::ConnectionFailed(msg),
        other => other,
    })?;
    let tables = catalog
        .into_iter()
        .map(|t| {
            let row_count = t.row_count as usize;
            TableMeta {
                columns: t
                    .columns
                    .into_iter()
                    .map(|c| ColumnMeta {
                        semantic_type: adapter
                            .semantic_type(&c.declared_type)
                            .unwrap_or_else(|| text_semantic(c.distinct_count as usize, row_count)),
                        name: c.name,
                        declared_type: c.declared_type,
                        sample_values: c.samples.into_iter().take(5).collect(),
                    })
                    .collect(),
                primary_key: (!t.primary_key.is_empty()).then_some(t.primary_key),
                foreign_keys: t.foreign_keys,
                row_count: t.row_count,
                name: t.name,
            }
        })
        .collect();
    Ok(SchemaSnapshot { tables, fetched_at: Utc::now() })
}
