//! Chart ranking from a rule matrix kept as data (`data/chart_rules.json`).
//!
//! A rule matches a set of fields when the fields can be assigned one-to-one
//! to its pattern slots. If some rule matches the whole profile set, only
//! those rules score. Otherwise every field subset of pattern size is tried
//! and each chart type keeps its best score.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::build::{assign_channels, FieldRef};
use super::{Channel, ChartType, ColumnProfile, Encoding, RankedChartTypes, RankedEntry, VizError};
use crate::sql::generate::tokenize;
use crate::table::SemanticType;

pub const DEFAULT_MATRIX_JSON: &str = include_str!("../../data/chart_rules.json");

pub const USER_REQUESTED: &str = "user-requested";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Quantitative,
    Categorical,
    Temporal,
    Unusable,
}

impl FieldRole {
    pub fn of(ty: SemanticType) -> FieldRole {
        match ty {
            SemanticType::Quantitative => FieldRole::Quantitative,
            SemanticType::Categorical | SemanticType::Boolean => FieldRole::Categorical,
            SemanticType::Temporal => FieldRole::Temporal,
            SemanticType::Unknown => FieldRole::Unusable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
enum Slot {
    Q,
    C,
    T,
    D,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RankRule {
    pattern: Vec<Slot>,
    #[serde(default)]
    min_card: Option<usize>,
    #[serde(default)]
    max_card: Option<usize>,
    scores: BTreeMap<ChartType, f64>,
    reason: String,
}

impl RankRule {
    fn slot_accepts(&self, slot: Slot, p: &ColumnProfile) -> bool {
        match (slot, FieldRole::of(p.semantic_type)) {
            (Slot::Q, FieldRole::Quantitative) => true,
            (Slot::T, FieldRole::Temporal) => true,
            (Slot::D, FieldRole::Temporal | FieldRole::Categorical) => true,
            (Slot::C, FieldRole::Categorical) => {
                self.min_card.is_none_or(|m| p.cardinality >= m) && self.max_card.is_none_or(|m| p.cardinality <= m)
            }
            _ => false,
        }
    }

    /// One-to-one assignment of `fields` to the pattern slots.
    fn matches(&self, fields: &[&ColumnProfile]) -> bool {
        if fields.len() != self.pattern.len() {
            return false;
        }
        fn assign(rule: &RankRule, fields: &[&ColumnProfile], slot: usize, used: &mut Vec<bool>) -> bool {
            if slot == rule.pattern.len() {
                return true;
            }
            for i in 0..fields.len() {
                if !used[i] && rule.slot_accepts(rule.pattern[slot], fields[i]) {
                    used[i] = true;
                    if assign(rule, fields, slot + 1, used) {
                        return true;
                    }
                    used[i] = false;
                }
            }
            false
        }
        assign(self, fields, 0, &mut vec![false; fields.len()])
    }
}

#[derive(Debug, Deserialize)]
struct MatrixDoc {
    rules: Vec<RankRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    rules: Vec<RankRule>,
}

impl Default for RankMatrix {
    fn default() -> Self {
        RankMatrix::from_json(DEFAULT_MATRIX_JSON).expect("bundled chart rules parse")
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

impl RankMatrix {
    pub fn from_json(text: &str) -> Result<RankMatrix, String> {
        let doc: MatrixDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for r in &doc.rules {
            if r.pattern.is_empty() {
                return Err("rule with empty pattern".into());
            }
            if r.scores.values().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(format!("score out of [0, 1] in rule `{}`", r.reason));
            }
        }
        Ok(RankMatrix { rules: doc.rules })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RankMatrix, String> {
        RankMatrix::from_json(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
    }

    /// Data-driven scores only, without user promotion.
    pub fn score(&self, profiles: &[ColumnProfile]) -> Vec<RankedEntry> {
        let all: Vec<&ColumnProfile> = profiles.iter().collect();
        let mut best: BTreeMap<ChartType, (f64, String)> = BTreeMap::new();
        let mut offer = |rule: &RankRule| {
            for (&chart, &score) in &rule.scores {
                match best.get(&chart) {
                    Some((s, _)) if *s >= score => {}
                    _ => {
                        best.insert(chart, (score, rule.reason.clone()));
                    }
                }
            }
        };
        let exact: Vec<&RankRule> = self.rules.iter().filter(|r| r.matches(&all)).collect();
        if !exact.is_empty() {
            exact.into_iter().for_each(&mut offer);
        } else {
            let max_len = self.rules.iter().map(|r| r.pattern.len()).max().unwrap_or(0).min(all.len());
            let subsets: Vec<Vec<&ColumnProfile>> = (1..=max_len)
                .flat_map(|k| combinations(all.len(), k))
                .map(|idx| idx.into_iter().map(|i| all[i]).collect())
                .collect();
            for rule in &self.rules {
                if subsets.iter().any(|s| rule.matches(s)) {
                    offer(rule);
                }
            }
        }
        let mut entries: Vec<RankedEntry> = best
            .into_iter()
            .map(|(chart_type, (score, reason))| RankedEntry { chart_type, score, reason })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.chart_type.cmp(&b.chart_type)));
        entries
    }

    pub fn rank(&self, profiles: &[ColumnProfile], explicit: Option<ChartType>) -> Result<RankedChartTypes, VizError> {
        let mut entries = self.score(profiles);
        if let Some(chart) = explicit {
            let fields: Vec<FieldRef> = profiles.iter().map(FieldRef::from).collect();
            if assign_channels(chart, &fields).is_ok() {
                entries.retain(|e| e.chart_type != chart);
                entries.insert(0, RankedEntry { chart_type: chart, score: 1.0, reason: USER_REQUESTED.into() });
            }
        }
        if entries.is_empty() {
            return Err(VizError::NotPlottable);
        }
        Ok(RankedChartTypes { entries })
    }
}

pub fn rank_charts(profiles: &[ColumnProfile], explicit: Option<ChartType>) -> Result<RankedChartTypes, VizError> {
    RankMatrix::default().rank(profiles, explicit)
}

/// Data-driven score of `mark` for these profiles (0 when no rule gives it).
pub fn mark_score(profiles: &[ColumnProfile], mark: ChartType) -> f64 {
    RankMatrix::default()
        .score(profiles)
        .into_iter()
        .find(|e| e.chart_type == mark)
        .map_or(0.0, |e| e.score)
}

/// Chart type named in the text, earliest mention first.
pub fn requested_chart(text: &str) -> Option<ChartType> {
    let tokens = tokenize(text);
    for (i, t) in tokens.iter().enumerate() {
        let next = tokens.get(i + 1).map(String::as_str);
        let hit = match (t.as_str(), next) {
            ("heat", Some("map")) => Some(ChartType::Heatmap),
            ("scatterplot", _) => Some(ChartType::Scatter),
            ("column", Some("chart")) => Some(ChartType::Bar),
            (word, _) => ChartType::parse(word).or_else(|| ChartType::parse(word.strip_suffix('s').unwrap_or(""))),
        };
        if hit.is_some() {
            return hit;
        }
    }
    None
}

/// Whether the encodings fill the channels `mark` needs.
pub fn encodings_satisfy(mark: ChartType, encodings: &BTreeMap<Channel, Encoding>) -> bool {
    let role = |c: Channel| encodings.get(&c).map(|e| FieldRole::of(e.semantic_type));
    let is_dim = |r: Option<FieldRole>| matches!(r, Some(FieldRole::Categorical | FieldRole::Temporal));
    let y_measure = encodings
        .get(&Channel::Y)
        .is_some_and(|e| FieldRole::of(e.semantic_type) == FieldRole::Quantitative || e.aggregate == super::Aggregate::Count);
    match mark {
        ChartType::Histogram => {
            role(Channel::X) == Some(FieldRole::Quantitative) && encodings.keys().all(|c| *c == Channel::X)
        }
        ChartType::Heatmap => {
            is_dim(role(Channel::X)) && is_dim(role(Channel::Y)) && role(Channel::Color) == Some(FieldRole::Quantitative)
        }
        ChartType::Scatter => {
            role(Channel::X) == Some(FieldRole::Quantitative) && role(Channel::Y) == Some(FieldRole::Quantitative)
        }
        ChartType::Bar | ChartType::Line | ChartType::Area | ChartType::Pie => {
            matches!(role(Channel::X), Some(r) if r != FieldRole::Unusable) && y_measure
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::SemanticType::*;

    fn p(name: &str, ty: SemanticType, card: usize) -> ColumnProfile {
        ColumnProfile::of(name, ty, card)
    }

    fn top(profiles: &[ColumnProfile], explicit: Option<ChartType>) -> ChartType {
        rank_charts(profiles, explicit).unwrap().top().unwrap().chart_type
    }

    #[test]
    fn matrix_examples() {
        assert_eq!(top(&[p("month", Temporal, 12), p("total", Quantitative, 12)], None), ChartType::Line);
        let r = rank_charts(&[p("month", Temporal, 12), p("total", Quantitative, 12)], Some(ChartType::Bar)).unwrap();
        assert_eq!(r.entries[0].chart_type, ChartType::Bar);
        assert_eq!(r.entries[0].reason, USER_REQUESTED);
        assert_eq!(r.entries.iter().filter(|e| e.chart_type == ChartType::Bar).count(), 1);

        let r = rank_charts(&[p("region", Categorical, 5), p("revenue", Quantitative, 5)], None).unwrap();
        assert_eq!(r.entries[0].chart_type, ChartType::Bar);
        assert_eq!(r.score_of(ChartType::Pie), Some(0.5));

        assert_eq!(top(&[p("height", Quantitative, 90), p("weight", Quantitative, 80)], None), ChartType::Scatter);
        assert_eq!(rank_charts(&[p("id", Unknown, 3)], None), Err(VizError::NotPlottable));
    }

    #[test]
    fn ordering_is_by_score_then_enum() {
        let r = rank_charts(&[p("month", Temporal, 12), p("total", Quantitative, 12)], None).unwrap();
        let order: Vec<ChartType> = r.entries.iter().map(|e| e.chart_type).collect();
        assert_eq!(order, [ChartType::Line, ChartType::Area, ChartType::Bar]);
    }

    #[test]
    fn subset_fallback_uses_best_rule() {
        // T, Q, Q: no exact rule; line/scatter/histogram all reach 1.0, line wins on enum order
        let r = rank_charts(
            &[p("day", Temporal, 30), p("a", Quantitative, 30), p("b", Quantitative, 30)],
            None,
        )
        .unwrap();
        assert_eq!(r.entries[0].chart_type, ChartType::Line);
        assert_eq!(r.score_of(ChartType::Scatter), Some(1.0));
    }

    #[test]
    fn unsatisfiable_request_is_not_promoted() {
        let r = rank_charts(&[p("region", Categorical, 5), p("revenue", Quantitative, 5)], Some(ChartType::Heatmap))
            .unwrap();
        assert_eq!(r.entries[0].chart_type, ChartType::Bar);
    }

    #[test]
    fn requested_chart_words() {
        assert_eq!(requested_chart("Show me a bar chart of sales by month"), Some(ChartType::Bar));
        assert_eq!(requested_chart("plot a heat map"), Some(ChartType::Heatmap));
        assert_eq!(requested_chart("two histograms please"), Some(ChartType::Histogram));
        assert_eq!(requested_chart("sales by month"), None);
    }

    #[test]
    fn matrix_rejects_bad_scores() {
        assert!(RankMatrix::from_json(r#"{"rules":[{"pattern":["Q"],"scores":{"bar":2.0},"reason":"x"}]}"#).is_err());
    }
}
