//! The visualization agent: clean and profile a result table, rank chart
//! types from a rule matrix, and assemble a declarative [`ChartSpec`].

mod build;
mod preprocess;
mod rank;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::{SemanticType, Value};

pub use build::{
    assign_channels, build_chart_spec, freedman_diaconis_bins, humanize_title, lift_sql_aggregates, split_sql_aggregate,
    visualize, FieldRef, Visualization,
};
pub use preprocess::{preprocess, profile_columns, Preprocessed, CATEGORY_CAP, OTHER_LABEL};
pub use rank::{
    encodings_satisfy, mark_score, rank_charts, requested_chart, FieldRole, RankMatrix, RankRule, DEFAULT_MATRIX_JSON,
    USER_REQUESTED,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Bar,
    Line,
    Area,
    Scatter,
    Histogram,
    Heatmap,
    Pie,
}

impl ChartType {
    pub const ALL: [ChartType; 7] = [
        ChartType::Bar,
        ChartType::Line,
        ChartType::Area,
        ChartType::Scatter,
        ChartType::Histogram,
        ChartType::Heatmap,
        ChartType::Pie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::Line => "line",
            ChartType::Area => "area",
            ChartType::Scatter => "scatter",
            ChartType::Histogram => "histogram",
            ChartType::Heatmap => "heatmap",
            ChartType::Pie => "pie",
        }
    }

    pub fn parse(name: &str) -> Option<ChartType> {
        let lower = name.trim().to_ascii_lowercase();
        ChartType::ALL.into_iter().find(|c| c.name() == lower)
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub semantic_type: SemanticType,
    pub cardinality: usize,
    pub null_fraction: f64,
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub monotonic: Option<bool>,
}

impl ColumnProfile {
    /// Bare profile, handy for ranking without a table.
    pub fn of(name: &str, semantic_type: SemanticType, cardinality: usize) -> Self {
        Self {
            name: name.to_string(),
            semantic_type,
            cardinality,
            null_fraction: 0.0,
            min: None,
            max: None,
            monotonic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub chart_type: ChartType,
    pub score: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedChartTypes {
    pub entries: Vec<RankedEntry>,
}

impl RankedChartTypes {
    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }

    pub fn score_of(&self, chart: ChartType) -> Option<f64> {
        self.entries.iter().find(|e| e.chart_type == chart).map(|e| e.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Y,
    Color,
    Size,
    RowFacet,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::X, Channel::Y, Channel::Color, Channel::Size, Channel::RowFacet];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
            Channel::Size => "size",
            Channel::RowFacet => "row_facet",
        }
    }

    pub fn parse(name: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    None,
    Sum,
    Avg,
    Count,
    Min,
    Max,
}

impl Aggregate {
    pub fn parse(name: &str) -> Option<Aggregate> {
        match name.trim().to_ascii_lowercase().as_str() {
            "none" => Some(Aggregate::None),
            "sum" | "total" => Some(Aggregate::Sum),
            "avg" | "average" | "mean" => Some(Aggregate::Avg),
            "count" => Some(Aggregate::Count),
            "min" | "minimum" => Some(Aggregate::Min),
            "max" | "maximum" => Some(Aggregate::Max),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub field: String,
    pub semantic_type: SemanticType,
    #[serde(default)]
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortOrder>,
}

impl Encoding {
    pub fn new(field: &str, semantic_type: SemanticType) -> Self {
        Self { field: field.to_string(), semantic_type, aggregate: Aggregate::None, bin: None, sort: None }
    }
}

/// JSON Schema (draft 2020-12) for a serialized [`ChartSpec`].
pub const CHART_SPEC_SCHEMA: &str = include_str!("../../schemas/chart_spec.schema.json");

pub const PALETTES: [&str; 6] = ["category10", "tableau10", "pastel", "dark", "viridis", "greys"];
pub const DEFAULT_PALETTE: &str = "category10";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Style {
    pub palette: String,
    #[serde(default)]
    pub mark_color: Option<String>,
    pub x_label: String,
    pub y_label: String,
}

/// One column of the inline, column-major data block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataColumn {
    pub name: String,
    pub semantic_type: SemanticType,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_id: String,
    pub mark: ChartType,
    pub encodings: BTreeMap<Channel, Encoding>,
    pub title: String,
    pub style: Style,
    pub data: Vec<DataColumn>,
    pub source_sql: String,
    #[serde(default)]
    pub revision: u32,
}

impl ChartSpec {
    pub fn data_column(&self, name: &str) -> Option<&DataColumn> {
        self.data.iter().find(|c| c.name == name)
    }

    pub fn row_count(&self) -> usize {
        self.data.first().map_or(0, |c| c.values.len())
    }

    pub fn encoded_fields(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in self.encodings.values() {
            if !out.contains(&e.field) {
                out.push(e.field.clone());
            }
        }
        out
    }

    /// Checks the spec's own invariants.
    pub fn check(&self) -> Result<(), String> {
        if let Some(first) = self.data.first() {
            if let Some(bad) = self.data.iter().find(|c| c.values.len() != first.values.len()) {
                return Err(format!("data column {} has a different length", bad.name));
            }
        }
        for (channel, enc) in &self.encodings {
            if self.data_column(&enc.field).is_none() {
                return Err(format!("{} encodes missing field {}", channel.name(), enc.field));
            }
        }
        if !encodings_satisfy(self.mark, &self.encodings) {
            return Err(format!("encodings do not fit a {} chart", self.mark));
        }
        if let Some(color) = &self.style.mark_color {
            if !is_valid_color(color) {
                return Err(format!("bad color token {color}"));
            }
        }
        if !PALETTES.contains(&self.style.palette.as_str()) {
            return Err(format!("unknown palette {}", self.style.palette));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VizError {
    #[error("no rows left after dropping nulls")]
    EmptyAfterCleaning,
    #[error("no chart type fits these columns")]
    NotPlottable,
    #[error("cannot fill the channels of a {0} chart")]
    ChannelUnsatisfiable(ChartType),
}

impl VizError {
    pub fn code(&self) -> &'static str {
        match self {
            VizError::EmptyAfterCleaning => "EmptyAfterCleaning",
            VizError::NotPlottable => "NotPlottable",
            VizError::ChannelUnsatisfiable(_) => "ChannelUnsatisfiable",
        }
    }
}

/// CSS Color Module Level 4 named colors.
pub const CSS_COLORS: [&str; 148] = [
    "aliceblue", "antiquewhite", "aqua", "aquamarine", "azure", "beige", "bisque", "black", "blanchedalmond", "blue",
    "blueviolet", "brown", "burlywood", "cadetblue", "chartreuse", "chocolate", "coral", "cornflowerblue", "cornsilk",
    "crimson", "cyan", "darkblue", "darkcyan", "darkgoldenrod", "darkgray", "darkgreen", "darkgrey", "darkkhaki",
    "darkmagenta", "darkolivegreen", "darkorange", "darkorchid", "darkred", "darksalmon", "darkseagreen",
    "darkslateblue", "darkslategray", "darkslategrey", "darkturquoise", "darkviolet", "deeppink", "deepskyblue",
    "dimgray", "dimgrey", "dodgerblue", "firebrick", "floralwhite", "forestgreen", "fuchsia", "gainsboro",
    "ghostwhite", "gold", "goldenrod", "gray", "green", "greenyellow", "grey", "honeydew", "hotpink", "indianred",
    "indigo", "ivory", "khaki", "lavender", "lavenderblush", "lawngreen", "lemonchiffon", "lightblue", "lightcoral",
    "lightcyan", "lightgoldenrodyellow", "lightgray", "lightgreen", "lightgrey", "lightpink", "lightsalmon",
    "lightseagreen", "lightskyblue", "lightslategray", "lightslategrey", "lightsteelblue", "lightyellow", "lime",
    "limegreen", "linen", "magenta", "maroon", "mediumaquamarine", "mediumblue", "mediumorchid", "mediumpurple",
    "mediumseagreen", "mediumslateblue", "mediumspringgreen", "mediumturquoise", "mediumvioletred", "midnightblue",
    "mintcream", "mistyrose", "moccasin", "navajowhite", "navy", "oldlace", "olive", "olivedrab", "orange",
    "orangered", "orchid", "palegoldenrod", "palegreen", "paleturquoise", "palevioletred", "papayawhip", "peachpuff",
    "peru", "pink", "plum", "powderblue", "purple", "rebeccapurple", "red", "rosybrown", "royalblue", "saddlebrown",
    "salmon", "sandybrown", "seagreen", "seashell", "sienna", "silver", "skyblue", "slateblue", "slategray",
    "slategrey", "snow", "springgreen", "steelblue", "tan", "teal", "thistle", "tomato", "turquoise", "violet",
    "wheat", "white", "whitesmoke", "yellow", "yellowgreen",
];

/// A CSS named color (case-insensitive) or `#RRGGBB`.
pub fn is_valid_color(token: &str) -> bool {
    if let Some(hex) = token.strip_prefix('#') {
        return hex.len() == 6 && hex.chars().all(|c| c.is_ascii_hexdigit());
    }
    CSS_COLORS.contains(&token.to_ascii_lowercase().as_str())
}
