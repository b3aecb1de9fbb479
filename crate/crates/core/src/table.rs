//! Typed tabular data shared by the SQL, visualization and analysis agents.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// Analytical role of a column, independent of its storage type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticType {
    Quantitative,
    Categorical,
    Temporal,
    Boolean,
    Unknown,
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SemanticType::Quantitative => "quantitative",
            SemanticType::Categorical => "categorical",
            SemanticType::Temporal => "temporal",
            SemanticType::Boolean => "boolean",
            SemanticType::Unknown => "unknown",
        };
        f.write_str(name)
    }
}

/// A single cell.
///
/// Serialized untagged so the column-major data block of a chart spec is a
/// plain JSON array of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) if v.is_finite() => Some(*v),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Key used for distinct counts and frequency tables.
    pub fn group_key(&self) -> String {
        match self {
            Value::Null => "\u{0}null".to_string(),
            Value::Bool(b) => format!("b:{b}"),
            Value::Int(v) => format!("n:{}", *v as f64),
            Value::Float(v) => format!("n:{v}"),
            Value::Text(s) => format!("t:{s}"),
        }
    }

    /// Total order used for sorting: nulls, booleans, numbers, then text.
    pub fn total_cmp(&self, other: &Value) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Bool(_) => 1,
                Value::Int(_) | Value::Float(_) => 2,
                Value::Text(_) => 3,
            }
        }
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (a, b) if rank(a) == 2 && rank(b) == 2 => {
                let x = a.as_f64().unwrap_or(f64::NAN);
                let y = b.as_f64().unwrap_or(f64::NAN);
                x.total_cmp(&y)
            }
            (a, b) => rank(a).cmp(&rank(b)).then(Ordering::Equal),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str(""),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub semantic_type: SemanticType,
}

/// Typed query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Value>>,
    pub truncated: bool,
    pub source_sql: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("row {row} has {found} values but the table has {expected} columns")]
pub struct ArityError {
    pub row: usize,
    pub found: usize,
    pub expected: usize,
}

impl ResultTable {
    pub fn new(
        columns: Vec<ColumnSpec>,
        rows: Vec<Vec<Value>>,
        source_sql: impl Into<String>,
    ) -> Result<Self, ArityError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(ArityError { row: i, found: row.len(), expected: columns.len() });
            }
        }
        Ok(Self { columns, rows, truncated: false, source_sql: source_sql.into() })
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |row| &row[index])
    }

    /// Numeric view of a column; non-numeric cells become `None`.
    pub fn numeric_column(&self, index: usize) -> Vec<Option<f64>> {
        self.column_values(index).map(Value::as_f64).collect()
    }

    pub fn distinct_count(&self, index: usize) -> usize {
        self.column_values(index)
            .filter(|v| !v.is_null())
            .map(Value::group_key)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Categorical cut-off shared by schema introspection and result typing:
/// a text column is categorical when its distinct count is at most
/// `max(20, 5% of rows)`.
pub fn categorical_limit(row_count: usize) -> usize {
    let five_percent = (row_count as f64 * 0.05).floor() as usize;
    five_percent.max(20)
}

/// Maps a declared SQL type name to a semantic type, or `None` for text-like
/// types whose role depends on their distinct count.
pub fn semantic_from_declared(declared: &str) -> Option<SemanticType> {
    let upper = declared.trim().to_ascii_uppercase();
    if upper.is_empty() {
        return Some(SemanticType::Unknown);
    }
    if upper.contains("BOOL") || upper == "BIT" {
        return Some(SemanticType::Boolean);
    }
    if upper.contains("DATE") || upper.contains("TIME") {
        return Some(SemanticType::Temporal);
    }
    const NUMERIC: [&str; 9] =
        ["INT", "REAL", "FLOA", "DOUB", "NUM", "DEC", "MONEY", "NUMBER", "SERIAL"];
    if NUMERIC.iter().any(|n| upper.contains(n)) {
        return Some(SemanticType::Quantitative);
    }
    const TEXT: [&str; 5] = ["CHAR", "TEXT", "CLOB", "STRING", "VARCHAR"];
    if TEXT.iter().any(|t| upper.contains(t)) {
        return None;
    }
    Some(SemanticType::Unknown)
}

/// Resolves a text-like column by its distinct count.
pub fn text_semantic(distinct: usize, row_count: usize) -> SemanticType {
    if distinct <= categorical_limit(row_count) {
        SemanticType::Categorical
    } else {
        SemanticType::Unknown
    }
}

/// Parses the ISO-8601 date and date-time shapes a SQL engine is likely to
/// emit: `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS[.fff]]` (space separator also
/// accepted), and RFC 3339 with an offset.
pub fn parse_iso8601(text: &str) -> Option<NaiveDateTime> {
    let s = text.trim();
    if s.len() < 10 {
        return None;
    }
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return date.and_hms_opt(0, 0, 0);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    const FORMATS: [&str; 4] =
        ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Fraction of non-null text cells that parse as ISO-8601; `None` when the
/// column holds no text at all.
pub fn iso_parse_rate<'a>(values: impl Iterator<Item = &'a Value>) -> Option<f64> {
    let mut total = 0usize;
    let mut parsed = 0usize;
    for v in values {
        match v {
            Value::Null => {}
            Value::Text(s) => {
                total += 1;
                if parse_iso8601(s).is_some() {
                    parsed += 1;
                }
            }
            _ => total += 1,
        }
    }
    (total > 0).then(|| parsed as f64 / total as f64)
}

/// Semantic type of a result column with no declared type, inferred from
/// the returned values.
pub fn infer_from_values<'a>(values: impl Iterator<Item = &'a Value> + Clone) -> SemanticType {
    let non_null: Vec<&Value> = values.clone().filter(|v| !v.is_null()).collect();
    if non_null.is_empty() {
        return SemanticType::Unknown;
    }
    if non_null.iter().all(|v| matches!(v, Value::Bool(_))) {
        return SemanticType::Boolean;
    }
    if non_null.iter().all(|v| matches!(v, Value::Int(_) | Value::Float(_))) {
        return SemanticType::Quantitative;
    }
    if non_null.iter().all(|v| matches!(v, Value::Text(_))) {
        if iso_parse_rate(non_null.iter().copied()).unwrap_or(0.0) >= 0.95 {
            return SemanticType::Temporal;
        }
        let distinct: BTreeSet<String> = non_null.iter().map(|v| v.group_key()).collect();
        return text_semantic(distinct.len(), non_null.len());
    }
    SemanticType::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_types_map_to_semantics() {
        assert_eq!(semantic_from_declared("NUMERIC"), Some(SemanticType::Quantitative));
        assert_eq!(semantic_from_declared("integer"), Some(SemanticType::Quantitative));
        assert_eq!(semantic_from_declared("DATE"), Some(SemanticType::Temporal));
        assert_eq!(semantic_from_declared("timestamp with time zone"), Some(SemanticType::Temporal));
        assert_eq!(semantic_from_declared("BOOLEAN"), Some(SemanticType::Boolean));
        assert_eq!(semantic_from_declared("TEXT"), None);
        assert_eq!(semantic_from_declared("VARCHAR(20)"), None);
        assert_eq!(semantic_from_declared("BLOB"), Some(SemanticType::Unknown));
    }

    #[test]
    fn categorical_limit_is_at_least_twenty() {
        assert_eq!(categorical_limit(0), 20);
        assert_eq!(categorical_limit(400), 20);
        assert_eq!(categorical_limit(1000), 50);
    }

    #[test]
    fn iso_shapes_parse() {
        assert!(parse_iso8601("2024-01-01").is_some());
        assert!(parse_iso8601("2024-01-01T10:30:00").is_some());
        assert!(parse_iso8601("2024-01-01 10:30:00.250").is_some());
        assert!(parse_iso8601("2024-01-01T10:30:00Z").is_some());
        assert!(parse_iso8601("January").is_none());
        assert!(parse_iso8601("2024-13-01").is_none());
    }

    #[test]
    fn arity_is_checked() {
        let cols = vec![ColumnSpec { name: "a".into(), semantic_type: SemanticType::Quantitative }];
        let err = ResultTable::new(cols, vec![vec![Value::Int(1), Value::Int(2)]], "").unwrap_err();
        assert_eq!(err, ArityError { row: 0, found: 2, expected: 1 });
    }

    #[test]
    fn untagged_values_round_trip() {
        let row = vec![Value::Null, Value::Bool(true), Value::Int(3), Value::Float(2.5), Value::Text("x".into())];
        let text = serde_json::to_string(&row).unwrap();
        assert_eq!(text, r#"[null,true,3,2.5,"x"]"#);
        let back: Vec<Value> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, row);
    }
}
