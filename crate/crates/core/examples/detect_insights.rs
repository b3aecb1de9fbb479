//! Trend, anomaly and correlation detection with a template narrative.

use nlviz::analysis::{generate_insights, Thresholds};
use nlviz::table::ColumnSpec;
use nlviz::{ResultTable, SemanticType, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let columns = vec![
        ColumnSpec { name: "month".into(), semantic_type: SemanticType::Temporal },
        ColumnSpec { name: "revenue".into(), semantic_type: SemanticType::Quantitative },
        ColumnSpec { name: "visits".into(), semantic_type: SemanticType::Quantitative },
    ];
    let revenue = [110.0, 121.0, 129.0, 142.0, 150.0, 480.0, 171.0, 180.0, 193.0, 201.0, 212.0, 220.0];
    let rows = revenue
        .iter()
        .enumerate()
        .map(|(i, r)| vec![Value::Text(format!("2024-{:02}-01", i + 1)), Value::Float(*r), Value::Float(r * 9.5 + 40.0)])
        .collect();
    let table = ResultTable::new(columns, rows, "SELECT month, revenue, visits FROM kpis")?;

    let report = generate_insights(&table, "Any anomalies in revenue?", None, &Thresholds::default())?;
    for f in &report.findings {
        println!("- {}", f.sentence());
    }
    println!("\n{}", report.narrative);
    Ok(())
}
