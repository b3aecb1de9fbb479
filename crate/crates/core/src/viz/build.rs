use std::collections::{BTreeMap, BTreeSet};

use super::rank::FieldRole;
use super::{
    Aggregate, Channel, ChartSpec, ChartType, ColumnProfile, DataColumn, Encoding, Style, VizError, DEFAULT_PALETTE,
};
use crate::canonical::digest;
use crate::sql::generate::{column_matches, tokenize};
use crate::table::{ResultTable, SemanticType};

const MIN_BINS: usize = 5;
const MAX_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldRef {
    pub name: String,
    pub semantic_type: SemanticType,
}

impl From<&ColumnProfile> for FieldRef {
    fn from(p: &ColumnProfile) -> Self {
        FieldRef { name: p.name.clone(), semantic_type: p.semantic_type }
    }
}

impl From<&Encoding> for FieldRef {
    fn from(e: &Encoding) -> Self {
        FieldRef { name: e.field.clone(), semantic_type: e.semantic_type }
    }
}

/// Channel assignment for `mark` over `fields`, taken in order.
///
/// x is the temporal field, else a categorical one, else the first
/// quantitative; y is the next quantitative. Scatter puts two quantities on
/// x/y, histograms use x only, heatmaps put two dimensions on x/y and the
/// quantity on color. Multi-series line and area charts color by a spare
/// categorical field.
pub fn assign_channels(mark: ChartType, fields: &[FieldRef]) -> Result<BTreeMap<Channel, Encoding>, VizError> {
    let of = |role: FieldRole| fields.iter().filter(move |f| FieldRole::of(f.semantic_type) == role);
    let quants: Vec<&FieldRef> = of(FieldRole::Quantitative).collect();
    let temporals: Vec<&FieldRef> = of(FieldRole::Temporal).collect();
    let cats: Vec<&FieldRef> = of(FieldRole::Categorical).collect();
    let enc = |f: &FieldRef| Encoding::new(&f.name, f.semantic_type);
    let fail = || VizError::ChannelUnsatisfiable(mark);

    let mut out = BTreeMap::new();
    match mark {
        ChartType::Histogram => {
            out.insert(Channel::X, enc(quants.first().ok_or_else(fail)?));
        }
        ChartType::Scatter => {
            let [x, y] = quants.get(..2).and_then(|s| <[&FieldRef; 2]>::try_from(s).ok()).ok_or_else(fail)?;
            out.insert(Channel::X, enc(x));
            out.insert(Channel::Y, enc(y));
            if let Some(c) = cats.first() {
                out.insert(Channel::Color, enc(c));
            }
        }
        ChartType::Heatmap => {
            let dims: Vec<&FieldRef> = temporals.iter().chain(cats.iter()).copied().collect();
            if dims.len() < 2 {
                return Err(fail());
            }
            out.insert(Channel::X, enc(dims[0]));
            out.insert(Channel::Y, enc(dims[1]));
            out.insert(Channel::Color, enc(quants.first().ok_or_else(fail)?));
        }
        ChartType::Bar | ChartType::Line | ChartType::Area | ChartType::Pie => {
            let x = temporals.first().or(cats.first()).or(quants.first()).ok_or_else(fail)?;
            let y = quants.iter().find(|q| q.name != x.name).ok_or_else(fail)?;
            out.insert(Channel::X, enc(x));
            out.insert(Channel::Y, enc(y));
            if matches!(mark, ChartType::Line | ChartType::Area) && FieldRole::of(x.semantic_type) == FieldRole::Temporal {
                if let Some(c) = cats.first() {
                    out.insert(Channel::Color, enc(c));
                }
            }
        }
    }
    Ok(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis bin count, `2·IQR·n^(-1/3)` wide, clamped to [5, 50].
pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return MIN_BINS;
    }
    v.sort_by(f64::total_cmp);
    let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
    let range = v[v.len() - 1] - v[0];
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    if width <= 0.0 || range <= 0.0 {
        return MIN_BINS;
    }
    ((range / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

/// "total_sales by month" → "Total Sales By Month".
pub fn humanize_title(text: &str) -> String {
    text.replace('_', " ")
        .split_whitespace()
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

fn has_duplicates(table: &ResultTable, cols: &[usize]) -> bool {
    let mut seen = BTreeSet::new();
    table
        .rows
        .iter()
        .any(|row| !seen.insert(cols.iter().map(|&c| row[c].group_key()).collect::<Vec<_>>()))
}

/// Assembles a spec for `chart_type` over a preprocessed table. Fields the
/// question mentions are preferred within their role.
pub fn build_chart_spec(
    chart_type: ChartType,
    profiles: &[ColumnProfile],
    table: &ResultTable,
    question: &str,
) -> Result<ChartSpec, VizError> {
    let tokens: BTreeSet<String> = tokenize(question).into_iter().collect();
    let (mentioned, rest): (Vec<&ColumnProfile>, Vec<&ColumnProfile>) =
        profiles.iter().partition(|p| column_matches(&p.name, &tokens));
    let fields: Vec<FieldRef> = mentioned.into_iter().chain(rest).map(FieldRef::from).collect();
    let mut encodings = assign_channels(chart_type, &fields)?;

    let index = |name: &str| table.column_index(name);
    let x_dim = encodings
        .get(&Channel::X)
        .is_some_and(|e| matches!(FieldRole::of(e.semantic_type), FieldRole::Temporal | FieldRole::Categorical));
    match chart_type {
        ChartType::Histogram => {
            if let Some(x) = encodings.get_mut(&Channel::X) {
                let values: Vec<f64> = index(&x.field)
                    .map(|i| table.numeric_column(i).into_iter().flatten().collect())
                    .unwrap_or_default();
                x.bin = Some(freedman_diaconis_bins(&values) as u32);
            }
        }
        ChartType::Heatmap => {
            let keys: Vec<usize> = [Channel::X, Channel::Y]
                .iter()
                .filter_map(|c| encodings.get(c).and_then(|e| index(&e.field)))
                .collect();
            if has_duplicates(table, &keys) {
                if let Some(c) = encodings.get_mut(&Channel::Color) {
                    c.aggregate = Aggregate::Sum;
                }
            }
        }
        _ => {
            let mut keys: Vec<usize> = encodings.get(&Channel::X).and_then(|e| index(&e.field)).into_iter().collect();
            keys.extend(encodings.get(&Channel::Color).and_then(|e| index(&e.field)));
            if x_dim && has_duplicates(table, &keys) {
                if let Some(y) = encodings.get_mut(&Channel::Y) {
                    y.aggregate = Aggregate::Sum;
                }
            }
        }
    }

    let x_field = encodings.get(&Channel::X).map(|e| e.field.clone()).unwrap_or_default();
    let y_field = match chart_type {
        ChartType::Histogram => "count".to_string(),
        ChartType::Heatmap => encodings.get(&Channel::Color).map(|e| e.field.clone()).unwrap_or_default(),
        _ => encodings.get(&Channel::Y).map(|e| e.field.clone()).unwrap_or_default(),
    };
    let title = humanize_title(&format!("{y_field} by {x_field}"));

    let data = table
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| DataColumn {
            name: c.name.clone(),
            semantic_type: profiles.iter().find(|p| p.name == c.name).map_or(c.semantic_type, |p| p.semantic_type),
            values: table.column_values(i).cloned().collect(),
        })
        .collect();

    let chart_id = chart_id_for(&table.source_sql, chart_type, &encodings);
    Ok(ChartSpec {
        chart_id,
        mark: chart_type,
        title,
        style: Style {
            palette: DEFAULT_PALETTE.to_string(),
            mark_color: None,
            x_label: x_field,
            y_label: if chart_type == ChartType::Heatmap {
                encodings.get(&Channel::Y).map(|e| e.field.clone()).unwrap_or_default()
            } else {
                y_field
            },
        },
        encodings,
        data,
        source_sql: table.source_sql.clone(),
        revision: 0,
    })
}

/// `SUM(amount)` → `(Sum, "amount")`. Only aggregates that give the same
/// value when re-applied to one row per group are recognized, so `COUNT`
/// is left alone.
pub fn split_sql_aggregate(column: &str) -> Option<(Aggregate, String)> {
    let (func, rest) = column.trim().split_once('(')?;
    let inner = rest.strip_suffix(')')?.trim().trim_matches(|c| c == '"' || c == '`');
    let agg = match func.trim().to_ascii_lowercase().as_str() {
        "sum" | "total" => Aggregate::Sum,
        "avg" => Aggregate::Avg,
        "min" => Aggregate::Min,
        "max" => Aggregate::Max,
        _ => return None,
    };
    let ident = !inner.is_empty()
        && inner.chars().all(|c| c.is_alphanumeric() || c == '_')
        && !inner.starts_with(|c: char| c.is_ascii_digit());
    ident.then(|| (agg, inner.to_string()))
}

/// Renames aggregate result columns (`SUM(amount)`) to their argument
/// (`amount`) when that name is free, returning the aggregate per renamed
/// column.
pub fn lift_sql_aggregates(table: &ResultTable) -> (ResultTable, BTreeMap<String, Aggregate>) {
    let mut out = table.clone();
    let mut lifted = BTreeMap::new();
    for i in 0..out.columns.len() {
        let Some((agg, inner)) = split_sql_aggregate(&out.columns[i].name) else { continue };
        if out.columns.iter().any(|c| c.name.eq_ignore_ascii_case(&inner)) {
            continue;
        }
        out.columns[i].name = inner.clone();
        lifted.insert(inner, agg);
    }
    (out, lifted)
}

/// Output of the whole visualization pipeline.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Visualization {
    pub chart: ChartSpec,
    pub ranked: super::RankedChartTypes,
    pub dropped_rows: usize,
}

/// Preprocess, rank (honouring a chart type named in the question) and
/// build. Aggregates computed in SQL show up on the encoding that plots
/// them.
pub fn visualize(table: &ResultTable, question: &str, matrix: &super::RankMatrix) -> Result<Visualization, VizError> {
    let (lifted_table, lifted) = lift_sql_aggregates(table);
    let prepared = super::preprocess(&lifted_table)?;
    let ranked = matrix.rank(&prepared.profiles, super::requested_chart(question))?;
    let top = ranked.top().ok_or(VizError::NotPlottable)?.chart_type;
    let mut chart = build_chart_spec(top, &prepared.profiles, &prepared.table, question)?;
    for enc in chart.encodings.values_mut() {
        if let (Some(agg), Aggregate::None, None) = (lifted.get(&enc.field), enc.aggregate, enc.bin) {
            enc.aggregate = *agg;
        }
    }
    chart.chart_id = chart_id_for(&chart.source_sql, chart.mark, &chart.encodings);
    Ok(Visualization { chart, ranked, dropped_rows: prepared.dropped })
}

pub(crate) fn chart_id_for(sql: &str, mark: ChartType, encodings: &BTreeMap<Channel, Encoding>) -> String {
    format!("chart-{}", &digest(&(sql, mark, encodings))[..12])
}
