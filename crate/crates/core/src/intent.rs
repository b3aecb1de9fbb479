//! Intent classification: a keyword-rule baseline, optionally refined by the
//! model provider.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::providers::{FieldKind, ModelClient, ProviderError, SchemaField, StructuredPrompt, TaskTag};
use crate::sql::generate::{column_matches, tokenize};

/// Declaration order is routing precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intent {
    Visualization,
    Insight,
    Explanation,
    Customization,
    System,
    Other,
}

impl Intent {
    pub const ALL: [Intent; 6] = [
        Intent::Visualization,
        Intent::Insight,
        Intent::Explanation,
        Intent::Customization,
        Intent::System,
        Intent::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intent::Visualization => "Visualization",
            Intent::Insight => "Insight",
            Intent::Explanation => "Explanation",
            Intent::Customization => "Customization",
            Intent::System => "System",
            Intent::Other => "Other",
        }
    }

    /// Case-insensitive label lookup.
    pub fn parse(label: &str) -> Option<Intent> {
        let l = label.trim();
        Intent::ALL.into_iter().find(|i| i.name().eq_ignore_ascii_case(l))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSource {
    Rule,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEntry {
    pub intent: Intent,
    pub confidence: f64,
    pub source: IntentSource,
}

/// Non-empty, duplicate-free, precedence-ordered; `Other` only alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<IntentEntry>", into = "Vec<IntentEntry>")]
pub struct IntentSet {
    entries: Vec<IntentEntry>,
}

impl IntentSet {
    /// Normalizes arbitrary entries: duplicates keep the rule entry (else the
    /// most confident), `Other` is dropped when anything else is present,
    /// and an empty input becomes `{Other}`.
    pub fn from_entries(entries: impl IntoIterator<Item = IntentEntry>) -> IntentSet {
        let mut best: BTreeMap<Intent, IntentEntry> = BTreeMap::new();
        for e in entries {
            let e = IntentEntry { confidence: e.confidence.clamp(0.0, 1.0), ..e };
            match best.get(&e.intent) {
                Some(prev)
                    if prev.source == IntentSource::Rule
                        || (e.source == IntentSource::Model && prev.confidence >= e.confidence) => {}
                _ => {
                    best.insert(e.intent, e);
                }
            }
        }
        if best.len() > 1 {
            best.remove(&Intent::Other);
        }
        if best.is_empty() {
            return IntentSet::other();
        }
        IntentSet { entries: best.into_values().collect() }
    }

    /// Rule-sourced set at confidence 1.0.
    pub fn of(intents: &[Intent]) -> IntentSet {
        IntentSet::from_entries(
            intents.iter().map(|&intent| IntentEntry { intent, confidence: 1.0, source: IntentSource::Rule }),
        )
    }

    pub fn other() -> IntentSet {
        IntentSet { entries: vec![IntentEntry { intent: Intent::Other, confidence: 1.0, source: IntentSource::Rule }] }
    }

    pub fn entries(&self) -> &[IntentEntry] {
        &self.entries
    }

    pub fn intents(&self) -> Vec<Intent> {
        self.entries.iter().map(|e| e.intent).collect()
    }

    pub fn contains(&self, intent: Intent) -> bool {
        self.entries.iter().any(|e| e.intent == intent)
    }

    pub fn is_other(&self) -> bool {
        self.contains(Intent::Other)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<IntentEntry>> for IntentSet {
    type Error = String;

    fn try_from(entries: Vec<IntentEntry>) -> Result<Self, Self::Error> {
        let set = IntentSet::from_entries(entries.clone());
        if set.entries != entries {
            return Err("intent entries are not in normal form".into());
        }
        Ok(set)
    }
}

impl From<IntentSet> for Vec<IntentEntry> {
    fn from(set: IntentSet) -> Self {
        set.entries
    }
}

impl fmt::Display for IntentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.entries.iter().map(|e| e.intent.name()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("line {line}: expected `intent: keyword, keyword`")]
    Malformed { line: usize },
    #[error("line {line}: unknown intent `{name}`")]
    UnknownIntent { line: usize, name: String },
    #[error("line {line}: Other has no keywords")]
    OtherKeywords { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Keyword lists per intent. Multi-word keywords match as phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    keywords: BTreeMap<Intent, BTreeSet<String>>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let mut keywords = BTreeMap::new();
        let mut put = |intent, words: &[&str]| {
            keywords.insert(intent, words.iter().map(|w| w.to_string()).collect::<BTreeSet<_>>());
        };
        put(
            Intent::Visualization,
            &[
                "chart", "plot", "graph", "show", "visualize", "bar", "line", "scatter", "histogram", "heatmap", "pie",
                "trend over time",
            ],
        );
        put(
            Intent::Insight,
            &["trend", "anomaly", "anomalies", "spike", "pattern", "correlation", "unusual", "outlier", "insight"],
        );
        put(Intent::Explanation, &["explain", "why", "reason", "context"]);
        put(
            Intent::Customization,
            &["change", "recolor", "rename", "resize", "retitle", "make it", "set the", "switch to"],
        );
        put(Intent::System, &["connect", "disconnect", "database", "export"]);
        Lexicon { keywords }
    }
}

impl Lexicon {
    /// Default lexicon extended by `intent: kw, kw` lines; `#` starts a
    /// comment.
    pub fn from_config_str(text: &str) -> Result<Lexicon, LexiconError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, words) = line.split_once(':').ok_or(LexiconError::Malformed { line: line_no })?;
            let intent = Intent::parse(name)
                .ok_or_else(|| LexiconError::UnknownIntent { line: line_no, name: name.trim().to_string() })?;
            if intent == Intent::Other {
                return Err(LexiconError::OtherKeywords { line: line_no });
            }
            let entry = lex.keywords.entry(intent).or_default();
            for w in words.split(',') {
                let w = tokenize(w).join(" ");
                if !w.is_empty() {
                    entry.insert(w);
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        Lexicon::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn keywords(&self, intent: Intent) -> impl Iterator<Item = &str> {
        self.keywords.get(&intent).into_iter().flatten().map(String::as_str)
    }

    fn hits(&self, intent: Intent, tokens: &[String]) -> bool {
        self.keywords(intent).any(|kw| {
            let parts: Vec<&str> = kw.split(' ').collect();
            match parts.as_slice() {
                [single] => tokens.iter().any(|t| inflects(single, t)),
                phrase => tokens.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(t, p)| inflects(p, t))),
            }
        })
    }
}

const SUFFIXES: [&str; 9] = ["s", "es", "ed", "ing", "ion", "ions", "ted", "ting", "ly"];

/// `token` is `keyword` or a simple inflection of it ("spikes", "plotting",
/// "visualized"). A trailing `e` may be dropped before the suffix.
fn inflects(keyword: &str, token: &str) -> bool {
    if token == keyword {
        return true;
    }
    let stems = [Some(keyword), keyword.strip_suffix('e')];
    stems.into_iter().flatten().any(|stem| {
        token
            .strip_prefix(stem)
            .is_some_and(|rest| SUFFIXES.contains(&rest))
    })
}

/// What the rules may know about the session.
#[derive(Debug, Clone, Default)]
pub struct RuleContext {
    pub has_chart: bool,
    pub has_insight: bool,
    /// Fields encoded in the active chart.
    pub chart_fields: Vec<String>,
    /// Column names known for the session's data (schema and last result).
    pub dataset_columns: Vec<String>,
}

pub fn rule_classify(text: &str, has_chart: bool, has_insight: bool) -> IntentSet {
    rule_classify_with(text, &Lexicon::default(), &RuleContext { has_chart, has_insight, ..RuleContext::default() })
}

pub fn rule_classify_with(text: &str, lexicon: &Lexicon, ctx: &RuleContext) -> IntentSet {
    let tokens = tokenize(text);
    let mut hits: BTreeSet<Intent> = Intent::ALL
        .into_iter()
        .filter(|&i| i != Intent::Other && lexicon.hits(i, &tokens))
        .collect();

    if hits.contains(&Intent::Customization) && ctx.has_chart && !names_new_column(&tokens, ctx) {
        hits.remove(&Intent::Visualization);
    }
    // Explaining an existing finding should not recompute it.
    if hits.contains(&Intent::Explanation) && ctx.has_insight && !hits.contains(&Intent::Visualization) {
        hits.remove(&Intent::Insight);
    }
    IntentSet::of(&hits.into_iter().collect::<Vec<_>>())
}

fn names_new_column(tokens: &[String], ctx: &RuleContext) -> bool {
    let set: BTreeSet<String> = tokens.iter().cloned().collect();
    ctx.dataset_columns.iter().any(|col| {
        column_matches(col, &set) && !ctx.chart_fields.iter().any(|f| f.eq_ignore_ascii_case(col))
    })
}

/// Result of [`classify`]; `fallback` holds the provider error when the
/// model refinement was attempted and failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub intents: IntentSet,
    pub fallback: Option<ProviderError>,
}

const MODEL_CONFIDENCE_CAP: f64 = 0.99;
const MODEL_DEFAULT_CONFIDENCE: f64 = 0.8;

pub fn refine_prompt_context(text: &str, rule: &IntentSet) -> String {
    let labels: Vec<&str> = Intent::ALL.iter().map(|i| i.name()).collect();
    format!("message: {text}\nrule intents: {rule}\nallowed labels: {}", labels.join(", "))
}

/// Rule classification merged with an optional model refinement. The model
/// can add intents (confidence below 1.0) but never remove a rule hit;
/// labels outside the six are discarded.
pub fn classify(text: &str, lexicon: &Lexicon, ctx: &RuleContext, model: Option<&ModelClient>) -> Classification {
    let rule = rule_classify_with(text, lexicon, ctx);
    let Some(model) = model else {
        return Classification { intents: rule, fallback: None };
    };
    let prompt = StructuredPrompt::new(
        TaskTag::IntentRefine,
        refine_prompt_context(text, &rule),
        vec![SchemaField::required("intents", FieldKind::Array)],
    )
    .expect("intent schema is non-empty");
    let reply = match model.complete(&prompt) {
        Ok(c) => c.value,
        Err(e) => return Classification { intents: rule, fallback: Some(e) },
    };
    let mut entries: Vec<IntentEntry> = rule.entries().to_vec();
    for item in reply.get("intents").and_then(Json::as_array).into_iter().flatten() {
        let (label, confidence) = match item {
            Json::String(s) => (s.as_str(), MODEL_DEFAULT_CONFIDENCE),
            Json::Object(o) => (
                o.get("label").or_else(|| o.get("intent")).and_then(Json::as_str).unwrap_or(""),
                o.get("confidence").and_then(Json::as_f64).unwrap_or(MODEL_DEFAULT_CONFIDENCE),
            ),
            _ => continue,
        };
        let Some(intent) = Intent::parse(label) else { continue };
        if intent == Intent::Other || !confidence.is_finite() {
            continue;
        }
        entries.push(IntentEntry {
            intent,
            confidence: confidence.clamp(0.0, MODEL_CONFIDENCE_CAP),
            source: IntentSource::Model,
        });
    }
    Classification { intents: IntentSet::from_entries(entries), fallback: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(set: &IntentSet) -> Vec<Intent> {
        set.intents()
    }

    #[test]
    fn lexicon_examples() {
        use Intent::*;
        assert_eq!(names(&rule_classify("Show me a bar chart of sales by month", false, false)), [Visualization]);
        assert_eq!(names(&rule_classify("Find any unusual spikes in website traffic", false, false)), [Insight]);
        assert_eq!(names(&rule_classify("Change the color of this chart to blue", true, false)), [Customization]);
        assert_eq!(names(&rule_classify("", false, false)), [Other]);
        assert_eq!(
            names(&rule_classify("Show me a bar chart of sales and explain the biggest trend", false, false)),
            [Visualization, Insight, Explanation]
        );
        assert_eq!(names(&rule_classify("Explain why sales dropped in Q2", false, false)), [Explanation]);
        assert_eq!(names(&rule_classify("Connect to a new database", false, false)), [System]);
    }

    #[test]
    fn customization_without_chart_keeps_visualization() {
        use Intent::*;
        assert_eq!(names(&rule_classify("make it a line chart", false, false)), [Visualization, Customization]);
        assert_eq!(names(&rule_classify("make it a line chart", true, false)), [Customization]);
    }

    #[test]
    fn new_column_keeps_visualization() {
        let ctx = RuleContext {
            has_chart: true,
            has_insight: false,
            chart_fields: vec!["month".into(), "amount".into()],
            dataset_columns: vec!["month".into(), "amount".into(), "region".into()],
        };
        let set = rule_classify_with("change the chart to show region", &Lexicon::default(), &ctx);
        assert_eq!(names(&set), [Intent::Visualization, Intent::Customization]);
        let set = rule_classify_with("change the chart color by month", &Lexicon::default(), &ctx);
        assert_eq!(names(&set), [Intent::Customization]);
    }

    #[test]
    fn explanation_reuses_existing_insight() {
        assert_eq!(names(&rule_classify("explain the trend", false, true)), [Intent::Explanation]);
        assert_eq!(names(&rule_classify("explain the trend", false, false)), [Intent::Insight, Intent::Explanation]);
    }

    #[test]
    fn inflections() {
        assert!(inflects("spike", "spikes"));
        assert!(inflects("visualize", "visualizing"));
        assert!(inflects("plot", "plotting"));
        assert!(inflects("connect", "connection"));
        assert!(!inflects("bar", "barn"));
        assert!(!inflects("show", "shower"));
    }

    #[test]
    fn config_extends_defaults() {
        let lex = Lexicon::from_config_str("# extra\nvisualization: diagram, Draw Me\ninsight: drift\n").unwrap();
        let ctx = RuleContext::default();
        assert_eq!(names(&rule_classify_with("a diagram please", &lex, &ctx)), [Intent::Visualization]);
        assert_eq!(names(&rule_classify_with("draw me sales", &lex, &ctx)), [Intent::Visualization]);
        assert!(lex.keywords(Intent::Visualization).any(|k| k == "chart"));
        assert!(matches!(Lexicon::from_config_str("vibes: x"), Err(LexiconError::UnknownIntent { .. })));
        assert!(matches!(Lexicon::from_config_str("no colon"), Err(LexiconError::Malformed { line: 1 })));
    }

    #[test]
    fn normal_form_drops_other_and_sorts() {
        let set = IntentSet::of(&[Intent::Other, Intent::System, Intent::Visualization, Intent::System]);
        assert_eq!(names(&set), [Intent::Visualization, Intent::System]);
        assert_eq!(names(&IntentSet::of(&[])), [Intent::Other]);
    }

    #[test]
    fn serde_round_trip_and_rejection() {
        let set = IntentSet::of(&[Intent::Insight, Intent::Visualization]);
        let text = serde_json::to_string(&set).unwrap();
        assert_eq!(serde_json::from_str::<IntentSet>(&text).unwrap(), set);
        let bad = r#"[{"intent":"Other","confidence":1.0,"source":"rule"},{"intent":"System","confidence":1.0,"source":"rule"}]"#;
        assert!(serde_json::from_str::<IntentSet>(bad).is_err());
    }
}
