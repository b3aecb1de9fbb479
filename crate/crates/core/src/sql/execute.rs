use std::collections::BTreeSet;
use std::time::Duration;

use super::engine::Connector;
use super::{ConnectionConfig, SqlError, ValidatedSql};
use crate::table::{infer_from_values, text_semantic, ColumnSpec, ResultTable, Value};

/// Runs a validated statement on a pooled read-only connection.
///
/// Columns with a declared type are typed like schema columns; computed
/// columns are typed from their values. `truncated` is set when the row cap
/// cut the result short or the injected `LIMIT` was reached exactly.
pub fn execute_sql(
    connector: &Connector,
    v: &ValidatedSql,
    conn: &ConnectionConfig,
    row_cap: usize,
    deadline_ms: u64,
) -> Result<ResultTable, SqlError> {
    let adapter = connector.adapter(conn.dialect);
    let mut handle = connector.checkout(conn)?;
    let raw = handle.query(&v.sql, row_cap.max(1), Duration::from_millis(deadline_ms.max(1)))?;

    let row_total = raw.rows.len();
    let columns = raw
        .columns
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values = raw.rows.iter().map(move |r| &r[i]);
            let semantic_type = match raw.declared_types[i].as_deref() {
                Some(decl) if !decl.trim().is_empty() => adapter.semantic_type(decl).unwrap_or_else(|| {
                    let distinct: BTreeSet<String> =
                        values.clone().filter(|v| !v.is_null()).map(Value::group_key).collect();
                    text_semantic(distinct.len(), row_total)
                }),
                _ => infer_from_values(values),
            };
            ColumnSpec { name: name.clone(), semantic_type }
        })
        .collect();

    let mut table = ResultTable::new(columns, raw.rows, v.sql.clone())
        .map_err(|e| SqlError::ExecutionFailed(e.to_string()))?;
    table.truncated = raw.capped || v.injected_limit.is_some_and(|l| l == row_total);
    Ok(table)
}
