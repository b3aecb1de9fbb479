//! The customizer: natural-language chart edits as allowlisted patches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::providers::{FieldKind, ModelClient, SchemaField, StructuredPrompt, TaskTag};
use crate::viz::{
    assign_channels, encodings_satisfy, is_valid_color, mark_score, requested_chart, Aggregate, Channel, ChartSpec,
    ChartType, ColumnProfile, Encoding, FieldRef, SortOrder, PALETTES,
};

/// Forced marks scoring below this get a warning.
pub const POOR_FIT_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Set,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchOp {
    pub op: OpKind,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Json>,
}

impl PatchOp {
    pub fn set(path: &str, value: impl Into<Json>) -> Self {
        Self { op: OpKind::Set, path: path.to_string(), value: Some(value.into()) }
    }

    pub fn remove(path: &str) -> Self {
        Self { op: OpKind::Remove, path: path.to_string(), value: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPatch {
    pub target_chart: String,
    pub ops: Vec<PatchOp>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CustomizeError {
    #[error("could not understand the customization: {0}")]
    Unparseable(String),
    #[error("path is not editable: {0}")]
    IllegalPath(String),
    #[error("bad value for {path}: {reason}")]
    BadValue { path: String, reason: String },
    #[error("a {0} chart cannot be drawn from the current fields")]
    IncompatibleMark(ChartType),
    #[error("patch has no operations")]
    EmptyPatch,
    #[error("no chart with id {0}")]
    UnknownChart(String),
}

impl CustomizeError {
    pub fn code(&self) -> &'static str {
        match self {
            CustomizeError::Unparseable(_) => "Unparseable",
            CustomizeError::IllegalPath(_) => "IllegalPath",
            CustomizeError::BadValue { .. } => "BadValue",
            CustomizeError::IncompatibleMark(_) => "IncompatibleMark",
            CustomizeError::EmptyPatch => "EmptyPatch",
            CustomizeError::UnknownChart(_) => "UnknownChart",
        }
    }
}

/// Editable locations in a [`ChartSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchPath {
    Mark,
    Title,
    MarkColor,
    Palette,
    XLabel,
    YLabel,
    Sort(Channel),
    Aggregate(Channel),
    Field(Channel),
}

impl PatchPath {
    pub fn parse(path: &str) -> Option<PatchPath> {
        match path {
            "mark" => Some(PatchPath::Mark),
            "title" => Some(PatchPath::Title),
            "style.mark_color" => Some(PatchPath::MarkColor),
            "style.palette" => Some(PatchPath::Palette),
            "style.x_label" => Some(PatchPath::XLabel),
            "style.y_label" => Some(PatchPath::YLabel),
            _ => {
                let rest = path.strip_prefix("encodings.")?;
                let (channel, leaf) = rest.split_once('.')?;
                let channel = Channel::parse(channel)?;
                match leaf {
                    "sort" => Some(PatchPath::Sort(channel)),
                    "aggregate" => Some(PatchPath::Aggregate(channel)),
                    "field" => Some(PatchPath::Field(channel)),
                    _ => None,
                }
            }
        }
    }

    pub fn render(self) -> String {
        match self {
            PatchPath::Mark => "mark".into(),
            PatchPath::Title => "title".into(),
            PatchPath::MarkColor => "style.mark_color".into(),
            PatchPath::Palette => "style.palette".into(),
            PatchPath::XLabel => "style.x_label".into(),
            PatchPath::YLabel => "style.y_label".into(),
            PatchPath::Sort(c) => format!("encodings.{}.sort", c.name()),
            PatchPath::Aggregate(c) => format!("encodings.{}.aggregate", c.name()),
            PatchPath::Field(c) => format!("encodings.{}.field", c.name()),
        }
    }
}

/// Every allowlisted path, channel paths expanded.
pub fn allowlist() -> Vec<String> {
    let mut out: Vec<String> = [
        PatchPath::Mark,
        PatchPath::Title,
        PatchPath::MarkColor,
        PatchPath::Palette,
        PatchPath::XLabel,
        PatchPath::YLabel,
    ]
    .iter()
    .map(|p| p.render())
    .collect();
    for c in Channel::ALL {
        for p in [PatchPath::Sort(c), PatchPath::Aggregate(c), PatchPath::Field(c)] {
            out.push(p.render());
        }
    }
    out
}

fn bad(path: &str, reason: impl Into<String>) -> CustomizeError {
    CustomizeError::BadValue { path: path.to_string(), reason: reason.into() }
}

fn text_value<'a>(op: &'a PatchOp) -> Result<&'a str, CustomizeError> {
    op.value
        .as_ref()
        .and_then(Json::as_str)
        .ok_or_else(|| bad(&op.path, "expected a string"))
}

fn apply_op(spec: &mut ChartSpec, op: &PatchOp) -> Result<(), CustomizeError> {
    let path = PatchPath::parse(&op.path).ok_or_else(|| CustomizeError::IllegalPath(op.path.clone()))?;
    if op.op == OpKind::Set && op.value.is_none() {
        return Err(bad(&op.path, "set needs a value"));
    }
    if op.op == OpKind::Remove && op.value.is_some() {
        return Err(bad(&op.path, "remove takes no value"));
    }
    let remove = op.op == OpKind::Remove;
    fn encoding<'a>(spec: &'a mut ChartSpec, c: Channel, path: &str) -> Result<&'a mut Encoding, CustomizeError> {
        spec.encodings.get_mut(&c).ok_or_else(|| bad(path, format!("no {} encoding", c.name())))
    }
    match path {
        PatchPath::Mark => {
            if remove {
                return Err(bad(&op.path, "the mark is required"));
            }
            let v = text_value(op)?;
            spec.mark = ChartType::parse(v).ok_or_else(|| bad(&op.path, format!("unknown chart type {v}")))?;
        }
        PatchPath::Title => {
            if remove {
                return Err(bad(&op.path, "the title is required"));
            }
            let v = text_value(op)?.trim();
            if v.is_empty() {
                return Err(bad(&op.path, "empty title"));
            }
            spec.title = v.to_string();
        }
        PatchPath::MarkColor => {
            if remove {
                spec.style.mark_color = None;
            } else {
                let v = text_value(op)?;
                if !is_valid_color(v) {
                    return Err(bad(&op.path, format!("{v} is not a CSS color name or #RRGGBB")));
                }
                spec.style.mark_color = Some(v.to_string());
            }
        }
        PatchPath::Palette => {
            if remove {
                return Err(bad(&op.path, "the palette is required"));
            }
            let v = text_value(op)?;
            if !PALETTES.contains(&v) {
                return Err(bad(&op.path, format!("unknown palette {v}")));
            }
            spec.style.palette = v.to_string();
        }
        PatchPath::XLabel | PatchPath::YLabel => {
            let v = if remove { String::new() } else { text_value(op)?.trim().to_string() };
            if path == PatchPath::XLabel {
                spec.style.x_label = v;
            } else {
                spec.style.y_label = v;
            }
        }
        PatchPath::Sort(c) => {
            let sort = if remove {
                None
            } else {
                match text_value(op)?.to_ascii_lowercase().as_str() {
                    "asc" | "ascending" => Some(SortOrder::Asc),
                    "desc" | "descending" => Some(SortOrder::Desc),
                    other => return Err(bad(&op.path, format!("unknown sort order {other}"))),
                }
            };
            encoding(spec, c, &op.path)?.sort = sort;
        }
        PatchPath::Aggregate(c) => {
            let agg = if remove {
                Aggregate::None
            } else {
                let v = text_value(op)?;
                Aggregate::parse(v).ok_or_else(|| bad(&op.path, format!("unknown aggregate {v}")))?
            };
            encoding(spec, c, &op.path)?.aggregate = agg;
        }
        PatchPath::Field(c) => {
            if remove {
                if spec.encodings.remove(&c).is_none() {
                    return Err(bad(&op.path, format!("no {} encoding", c.name())));
                }
            } else {
                let v = text_value(op)?;
                let column = spec.data_column(v).ok_or_else(|| bad(&op.path, format!("no column named {v}")))?;
                let ty = column.semantic_type;
                let slot = spec.encodings.entry(c).or_insert_with(|| Encoding::new(v, ty));
                if slot.field != v {
                    *slot = Encoding { field: v.to_string(), semantic_type: ty, ..slot.clone() };
                    slot.bin = None;
                }
            }
        }
    }
    Ok(())
}

/// Ops turning `from` into `to`, expressed through allowlisted paths.
fn encoding_diff(from: &BTreeMap<Channel, Encoding>, to: &BTreeMap<Channel, Encoding>) -> Vec<PatchOp> {
    let mut ops = Vec::new();
    for c in Channel::ALL {
        match (from.get(&c), to.get(&c)) {
            (Some(_), None) => ops.push(PatchOp::remove(&PatchPath::Field(c).render())),
            (old, Some(new)) => {
                if old.map(|o| &o.field) != Some(&new.field) {
                    ops.push(PatchOp::set(&PatchPath::Field(c).render(), new.field.clone()));
                }
                let old_agg = old.filter(|o| o.field == new.field).map_or(Aggregate::None, |o| o.aggregate);
                if old_agg != new.aggregate {
                    ops.push(PatchOp::set(&PatchPath::Aggregate(c).render(), serde_json::to_value(new.aggregate).unwrap_or_default()));
                }
            }
            (None, None) => {}
        }
    }
    ops
}

fn profiles_of(spec: &ChartSpec) -> Vec<ColumnProfile> {
    spec.encoded_fields()
        .iter()
        .filter_map(|f| spec.data_column(f))
        .map(|c| {
            let distinct: std::collections::BTreeSet<String> = c.values.iter().map(|v| v.group_key()).collect();
            ColumnProfile::of(&c.name, c.semantic_type, distinct.len())
        })
        .collect()
}

/// A patch that passed validation, with any channel reassignment appended
/// as extra ops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedPatch {
    pub patch: ChartPatch,
    pub reassigned: Vec<PatchOp>,
    pub warnings: Vec<String>,
}

/// Checks paths, values and mark compatibility against `chart`.
///
/// When a new mark does not fit the current encodings, the encoded fields
/// are reassigned to the mark's channels; if that fails too the patch is
/// rejected with `IncompatibleMark`.
pub fn validate_patch(chart: &ChartSpec, patch: &ChartPatch) -> Result<ValidatedPatch, CustomizeError> {
    if patch.target_chart != chart.chart_id {
        return Err(CustomizeError::UnknownChart(patch.target_chart.clone()));
    }
    if patch.ops.is_empty() {
        return Err(CustomizeError::EmptyPatch);
    }
    let mut trial = chart.clone();
    for op in &patch.ops {
        apply_op(&mut trial, op)?;
    }
    let mut full = patch.clone();
    let mut reassigned = Vec::new();
    if !encodings_satisfy(trial.mark, &trial.encodings) {
        if trial.mark == chart.mark {
            return Err(CustomizeError::IncompatibleMark(trial.mark));
        }
        let fields: Vec<FieldRef> = trial.encodings.values().map(FieldRef::from).collect();
        let mut fresh = assign_channels(trial.mark, &fields).map_err(|_| CustomizeError::IncompatibleMark(trial.mark))?;
        for (c, e) in fresh.iter_mut() {
            if let Some(old) = trial.encodings.get(c).filter(|o| o.field == e.field) {
                e.aggregate = old.aggregate;
                e.sort = old.sort;
            }
        }
        if !encodings_satisfy(trial.mark, &fresh) {
            return Err(CustomizeError::IncompatibleMark(trial.mark));
        }
        reassigned = encoding_diff(&trial.encodings, &fresh);
        for op in &reassigned {
            apply_op(&mut trial, op)?;
        }
        full.ops.extend(reassigned.iter().cloned());
    }
    trial.check().map_err(|reason| bad("chart", reason))?;
    let mut warnings = Vec::new();
    if trial.mark != chart.mark {
        let score = mark_score(&profiles_of(&trial), trial.mark);
        if score < POOR_FIT_SCORE {
            warnings.push(format!("a {} chart is a poor fit for these fields (score {score:.2})", trial.mark));
        }
    }
    Ok(ValidatedPatch { patch: full, reassigned, warnings })
}

/// Applies a validated patch to a copy of `chart`; the id is kept and the
/// revision goes up by one.
pub fn apply_patch(chart: &ChartSpec, patch: &ValidatedPatch) -> Result<ChartSpec, CustomizeError> {
    let mut out = chart.clone();
    for op in &patch.patch.ops {
        apply_op(&mut out, op)?;
    }
    out.revision += 1;
    Ok(out)
}

/// Validate then apply; on any error `chart` is returned untouched by the
/// caller's ownership.
pub fn customize(chart: &ChartSpec, patch: &ChartPatch) -> Result<(ChartSpec, ValidatedPatch), CustomizeError> {
    let validated = validate_patch(chart, patch)?;
    let updated = apply_patch(chart, &validated)?;
    Ok((updated, validated))
}

fn words(command: &str) -> Vec<String> {
    command
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '#').to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn lower(words: &[String]) -> Vec<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

fn find_seq(hay: &[String], needle: &[&str]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

/// Original-case text after the first occurrence of any phrase, trimmed of
/// quotes and trailing punctuation.
fn text_after(command: &str, phrases: &[&str]) -> Option<String> {
    let lowered = command.to_lowercase();
    for p in phrases {
        if let Some(i) = lowered.find(p) {
            let start = i + p.len();
            if !command.is_char_boundary(start) {
                continue;
            }
            let rest = command[start..].trim().trim_end_matches(['.', '!', '?']).trim();
            let rest = rest.trim_matches(|c| c == '"' || c == '\'' || c == '“' || c == '”').trim();
            if !rest.is_empty() {
                return Some(rest.to_string());
            }
        }
    }
    None
}

fn color_token(token: &str) -> Option<String> {
    is_valid_color(token).then(|| if token.starts_with('#') { token.to_uppercase() } else { token.to_lowercase() })
}

fn rule_ops(command: &str, chart: &ChartSpec) -> Vec<PatchOp> {
    let original = words(command);
    let w = lower(&original);
    let mut ops = Vec::new();

    let title = text_after(command, &["title it", "retitle it", "retitle to", "retitle", "rename it to", "rename to", "set the title to", "change the title to", "call it"]);
    if let Some(t) = &title {
        ops.push(PatchOp::set("title", t.clone()));
    }

    // "color ... to <token>", "recolor it <token>", "make it <color>"
    let color_at = w.iter().position(|t| t.contains("color") || t.contains("colour"));
    let mut color = None;
    if let Some(at) = color_at {
        let after = &w[at + 1..];
        color = match after.iter().position(|t| t == "to") {
            Some(to) => after.get(to + 1).and_then(|t| color_token(t)),
            None => after.iter().find_map(|t| color_token(t)),
        };
    }
    if color.is_none() && title.is_none() {
        if let Some(i) = find_seq(&w, &["make", "it"]).or_else(|| find_seq(&w, &["make", "them"])) {
            color = w.get(i + 2).and_then(|t| color_token(t));
        }
    }
    if let Some(c) = color {
        ops.push(PatchOp::set("style.mark_color", c));
    }

    let switches = ["make it", "switch to", "change it to", "change to", "turn it into", "convert to", "convert it to", "as a", "show it as", "instead"];
    let lowered = command.to_lowercase();
    if title.is_none() && switches.iter().any(|p| lowered.contains(p)) {
        if let Some(mark) = requested_chart(command) {
            if mark != chart.mark || ops.is_empty() {
                ops.push(PatchOp::set("mark", mark.name()));
            }
        }
    }

    if let Some(i) = find_seq(&w, &["sort", "by"]).or_else(|| w.iter().position(|t| t == "sort")) {
        let tail = &w[i..];
        let desc = tail.iter().any(|t| matches!(t.as_str(), "desc" | "descending" | "decreasing" | "largest" | "highest"));
        ops.push(PatchOp::set("encodings.x.sort", if desc { "desc" } else { "asc" }));
    }

    if let Some(i) = w.iter().position(|t| t == "use" || t == "using" || t == "show") {
        let agg = w[i + 1..]
            .iter()
            .filter(|t| !matches!(t.as_str(), "the" | "a" | "an"))
            .take(1)
            .find_map(|t| Aggregate::parse(t).filter(|a| *a != Aggregate::None));
        if let Some(a) = agg {
            if chart.encodings.contains_key(&Channel::Y) {
                ops.push(PatchOp::set("encodings.y.aggregate", serde_json::to_value(a).unwrap_or_default()));
            }
        }
    }

    if let Some(i) = w.iter().position(|t| t == "palette") {
        let name = w[..i].iter().rev().chain(w[i + 1..].iter()).find(|t| PALETTES.contains(&t.as_str()));
        if let Some(p) = name {
            ops.push(PatchOp::set("style.palette", p.clone()));
        }
    }

    for (axis, path) in [("x", "style.x_label"), ("y", "style.y_label")] {
        let phrases = [format!("label the {axis} axis"), format!("{axis} axis label to"), format!("{axis} label to"), format!("{axis}-axis label to")];
        let refs: Vec<&str> = phrases.iter().map(String::as_str).collect();
        if let Some(label) = text_after(command, &refs) {
            ops.push(PatchOp::set(path, label));
        }
    }
    ops
}

fn model_ops(command: &str, chart: &ChartSpec, model: &ModelClient) -> Option<Vec<PatchOp>> {
    let context = format!(
        "command: {command}\nchart: mark={} title={} fields={}\nallowed paths: {}",
        chart.mark,
        chart.title,
        chart.encoded_fields().join(","),
        allowlist().join(", ")
    );
    let prompt = StructuredPrompt::new(
        TaskTag::CustomizeParse,
        context,
        vec![SchemaField::required("ops", FieldKind::Array)],
    )
    .expect("customize schema is non-empty");
    let done = model.complete(&prompt).ok()?;
    let ops: Vec<PatchOp> = serde_json::from_value(done.value.get("ops")?.clone()).ok()?;
    (!ops.is_empty() && ops.iter().all(|o| PatchPath::parse(&o.path).is_some())).then_some(ops)
}

/// Turns a command into a patch for `chart`: lexicon rules first, then the
/// model (restricted to allowlisted paths) when enabled.
pub fn parse_customization(command: &str, chart: &ChartSpec, model: Option<&ModelClient>) -> Result<ChartPatch, CustomizeError> {
    let mut ops = rule_ops(command, chart);
    if ops.is_empty() {
        ops = model
            .and_then(|m| model_ops(command, chart, m))
            .ok_or_else(|| CustomizeError::Unparseable(command.trim().to_string()))?;
    }
    Ok(ChartPatch { target_chart: chart.chart_id.clone(), ops })
}
