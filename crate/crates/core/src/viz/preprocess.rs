use std::collections::{BTreeMap, BTreeSet};

use super::{ColumnProfile, VizError};
use crate::table::{iso_parse_rate, parse_iso8601, ResultTable, SemanticType, Value};

/// Distinct categories kept for plotting; the rest fold into "Other".
pub const CATEGORY_CAP: usize = 20;
pub const OTHER_LABEL: &str = "Other";
const ISO_TEMPORAL_RATE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub table: ResultTable,
    pub profiles: Vec<ColumnProfile>,
    pub dropped: usize,
}

/// Drops rows with any null, promotes ISO-8601 text in unknown columns to
/// temporal, and folds categorical tails into [`OTHER_LABEL`].
pub fn preprocess(table: &ResultTable) -> Result<Preprocessed, VizError> {
    if table.columns.is_empty() {
        return Err(VizError::EmptyAfterCleaning);
    }
    let total = table.row_count();
    let null_fractions: Vec<f64> = (0..table.column_count())
        .map(|i| {
            if total == 0 {
                0.0
            } else {
                table.column_values(i).filter(|v| v.is_null()).count() as f64 / total as f64
            }
        })
        .collect();

    let mut cleaned = table.clone();
    cleaned.rows.retain(|row| row.iter().all(|v| !v.is_null()));
    let dropped = total - cleaned.rows.len();
    if cleaned.rows.is_empty() {
        return Err(VizError::EmptyAfterCleaning);
    }

    for i in 0..cleaned.column_count() {
        if cleaned.columns[i].semantic_type == SemanticType::Unknown
            && iso_parse_rate(cleaned.column_values(i)).is_some_and(|r| r >= ISO_TEMPORAL_RATE)
        {
            cleaned.columns[i].semantic_type = SemanticType::Temporal;
        }
        if cleaned.columns[i].semantic_type == SemanticType::Categorical {
            fold_tail(&mut cleaned, i);
        }
    }

    let profiles = profile_columns(&cleaned, &null_fractions);
    Ok(Preprocessed { table: cleaned, profiles, dropped })
}

fn fold_tail(table: &mut ResultTable, col: usize) {
    let mut freq: BTreeMap<String, (usize, Value)> = BTreeMap::new();
    for v in table.column_values(col) {
        freq.entry(v.group_key()).or_insert((0, v.clone())).0 += 1;
    }
    if freq.len() <= CATEGORY_CAP {
        return;
    }
    let mut ranked: Vec<(String, usize)> = freq.iter().map(|(k, (n, _))| (k.clone(), *n)).collect();
    // Most frequent first; ties by value key for determinism.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let keep: BTreeSet<String> = ranked.into_iter().take(CATEGORY_CAP - 1).map(|(k, _)| k).collect();
    for row in &mut table.rows {
        if !keep.contains(&row[col].group_key()) {
            row[col] = Value::Text(OTHER_LABEL.to_string());
        }
    }
}

fn sort_key(v: &Value, ty: SemanticType) -> Option<f64> {
    match ty {
        SemanticType::Quantitative => v.as_f64(),
        SemanticType::Temporal => match v {
            Value::Text(s) => parse_iso8601(s).map(|d| d.and_utc().timestamp() as f64),
            other => other.as_f64(),
        },
        _ => None,
    }
}

/// Profiles of a (cleaned) table; `null_fractions` come from the original.
pub fn profile_columns(table: &ResultTable, null_fractions: &[f64]) -> Vec<ColumnProfile> {
    table
        .columns
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let ty = spec.semantic_type;
            let mut min: Option<(f64, &Value)> = None;
            let mut max: Option<(f64, &Value)> = None;
            let mut keys = Vec::new();
            for v in table.column_values(i) {
                if let Some(k) = sort_key(v, ty) {
                    keys.push(k);
                    if min.is_none_or(|(m, _)| k < m) {
                        min = Some((k, v));
                    }
                    if max.is_none_or(|(m, _)| k > m) {
                        max = Some((k, v));
                    }
                }
            }
            let ordered = matches!(ty, SemanticType::Quantitative | SemanticType::Temporal) && !keys.is_empty();
            let monotonic = ordered.then(|| {
                keys.windows(2).all(|w| w[0] <= w[1]) || keys.windows(2).all(|w| w[0] >= w[1])
            });
            ColumnProfile {
                name: spec.name.clone(),
                semantic_type: ty,
                cardinality: table.distinct_count(i),
                null_fraction: null_fractions.get(i).copied().unwrap_or(0.0),
                min: if ordered { min.map(|(_, v)| v.clone()) } else { None },
                max: if ordered { max.map(|(_, v)| v.clone()) } else { None },
                monotonic,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnSpec;

    fn col(name: &str, ty: SemanticType) -> ColumnSpec {
        ColumnSpec { name: name.into(), semantic_type: ty }
    }

    #[test]
    fn drops_null_rows() {
        let rows: Vec<Vec<Value>> = (0..100)
            .map(|i| vec![Value::Int(i), if i % 33 == 5 { Value::Null } else { Value::Float(i as f64) }])
            .collect();
        let t = ResultTable::new(
            vec![col("id", SemanticType::Quantitative), col("amount", SemanticType::Quantitative)],
            rows,
            "q",
        )
        .unwrap();
        let p = preprocess(&t).unwrap();
        assert_eq!(p.dropped, 3);
        assert_eq!(p.table.row_count(), 97);
        assert!((p.profiles[1].null_fraction - 0.03).abs() < 1e-12);
        assert_eq!(p.profiles[1].monotonic, Some(true));
    }

    #[test]
    fn iso_strings_become_temporal() {
        let rows = (1..=12).map(|m| vec![Value::Text(format!("2024-{m:02}-01"))]).collect();
        let t = ResultTable::new(vec![col("month", SemanticType::Unknown)], rows, "q").unwrap();
        let p = preprocess(&t).unwrap();
        assert_eq!(p.profiles[0].semantic_type, SemanticType::Temporal);
        assert_eq!(p.profiles[0].min, Some(Value::Text("2024-01-01".into())));
        assert_eq!(p.profiles[0].max, Some(Value::Text("2024-12-01".into())));
    }

    #[test]
    fn all_null_is_empty_after_cleaning() {
        let t = ResultTable::new(vec![col("x", SemanticType::Unknown)], vec![vec![Value::Null]; 4], "q").unwrap();
        assert_eq!(preprocess(&t), Err(VizError::EmptyAfterCleaning));
    }

    #[test]
    fn categorical_tail_folds_into_other() {
        // category k appears k+1 times, so the 19 most frequent are 11..=29
        let mut rows = Vec::new();
        for k in 0..30 {
            for _ in 0..=k {
                rows.push(vec![Value::Text(format!("c{k:02}"))]);
            }
        }
        let t = ResultTable::new(vec![col("cat", SemanticType::Categorical)], rows, "q").unwrap();
        let p = preprocess(&t).unwrap();
        assert_eq!(p.profiles[0].cardinality, 20);
        let others = p.table.column_values(0).filter(|v| v.as_str() == Some(OTHER_LABEL)).count();
        assert_eq!(others, (1..=11).sum::<usize>());
        let again = preprocess(&p.table).unwrap();
        assert_eq!(again.table, p.table);
    }
}
