//! The three detectors. Each is a pure function of its input series.

use super::{AnomalyFinding, AnomalyRule, CorrelationFinding, Direction, Thresholds, TrendFinding};
use crate::table::{ResultTable, SemanticType};

/// Modified z-score constant (the 0.75 quantile of the standard normal).
pub const MODIFIED_Z_SCALE: f64 = 0.6745;

/// Sentinel score for points off a zero-MAD median.
pub const DEGENERATE_SCORE: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`; `None` when x has no spread or
/// the inputs are not finite.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Some(LinearFit { slope, intercept: my - slope * mx, r2 })
}

/// Trend of `y` over its index.
pub fn detect_trend(y: &[f64]) -> Option<TrendFinding> {
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    detect_trend_with("", &x, y, &Thresholds::default())
}

/// Trend of `y` over `x` (index or day offsets), emitted when `r2` clears
/// the threshold and the slope is non-zero.
pub fn detect_trend_with(field: &str, x: &[f64], y: &[f64], th: &Thresholds) -> Option<TrendFinding> {
    if y.len() < 3 {
        return None;
    }
    let fit = least_squares(x, y)?;
    if fit.slope == 0.0 || fit.r2 < th.trend_r2 {
        return None;
    }
    Some(TrendFinding {
        field: field.to_string(),
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        direction: if fit.slope > 0.0 { Direction::Increasing } else { Direction::Decreasing },
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn detect_anomalies(y: &[f64]) -> Vec<AnomalyFinding> {
    detect_anomalies_with("", y, &Thresholds::default())
}

/// Modified z-scores against the median and MAD. With MAD = 0 every point
/// off the median is flagged with [`DEGENERATE_SCORE`].
pub fn detect_anomalies_with(field: &str, y: &[f64], th: &Thresholds) -> Vec<AnomalyFinding> {
    if y.len() < 4 || y.iter().any(|v| !v.is_finite()) {
        return Vec::new();
    }
    let med = median(y);
    let deviations: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&deviations);
    y.iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            if mad == 0.0 {
                (v != med).then_some(AnomalyFinding {
                    field: field.to_string(),
                    row_index: i,
                    value: v,
                    score: DEGENERATE_SCORE,
                    rule: AnomalyRule::MadDegenerate,
                })
            } else {
                let score = MODIFIED_Z_SCALE * (v - med) / mad;
                (score.abs() > th.anomaly_z).then_some(AnomalyFinding {
                    field: field.to_string(),
                    row_index: i,
                    value: v,
                    score,
                    rule: AnomalyRule::Mad,
                })
            }
        })
        .collect()
}

/// Pearson r over the pairwise-complete rows; `None` below `min_n` or when
/// either side has zero variance.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>], min_n: usize) -> Option<(f64, usize)> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    let n = pairs.len();
    if n < min_n.max(2) {
        return None;
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), n))
}

pub fn detect_correlations(table: &ResultTable) -> Vec<CorrelationFinding> {
    detect_correlations_with(table, &Thresholds::default())
}

/// Every quantitative pair with |r| at or above the threshold, names in
/// lexicographic order within each finding.
pub fn detect_correlations_with(table: &ResultTable, th: &Thresholds) -> Vec<CorrelationFinding> {
    let quants: Vec<usize> = (0..table.column_count())
        .filter(|&i| table.columns[i].semantic_type == SemanticType::Quantitative)
        .collect();
    let mut out = Vec::new();
    for (k, &i) in quants.iter().enumerate() {
        for &j in &quants[k + 1..] {
            let (xi, xj) = (table.numeric_column(i), table.numeric_column(j));
            let Some((r, n)) = pearson(&xi, &xj, th.min_correlation_n) else { continue };
            if r.abs() < th.correlation_r {
                continue;
            }
            let (a, b) = (&table.columns[i].name, &table.columns[j].name);
            let (field_a, field_b) = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            out.push(CorrelationFinding { field_a, field_b, r, n });
        }
    }
    out
}
