//! Preprocessing, chart ranking and spec assembly on an in-memory table.

use nlviz::table::ColumnSpec;
use nlviz::viz::{build_chart_spec, preprocess, rank_charts, ChartType, ColumnProfile};
use nlviz::{ResultTable, SemanticType, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let columns = vec![
        ColumnSpec { name: "month".into(), semantic_type: SemanticType::Unknown },
        ColumnSpec { name: "total".into(), semantic_type: SemanticType::Quantitative },
    ];
    let rows = (1..=12)
        .map(|m| vec![Value::Text(format!("2024-{m:02}-01")), Value::Float(100.0 + 7.5 * m as f64)])
        .collect();
    let table = ResultTable::new(columns, rows, "SELECT month, total FROM monthly")?;

    let prepared = preprocess(&table)?;
    for p in &prepared.profiles {
        println!("{}: {:?}, cardinality {}", p.name, p.semantic_type, p.cardinality);
    }

    let ranked = rank_charts(&prepared.profiles, None)?;
    for e in &ranked.entries {
        println!("  {:<9} {:.1}  {}", e.chart_type.name(), e.score, e.reason);
    }
    let requested = rank_charts(&prepared.profiles, Some(ChartType::Bar))?;
    println!("with an explicit bar request the top is {:?}", requested.top().map(|e| e.chart_type));

    let spec = build_chart_spec(ChartType::Bar, &prepared.profiles, &prepared.table, "show total by month")?;
    spec.check()?;
    println!("{}", serde_json::to_string_pretty(&spec)?);

    let pie = rank_charts(&[ColumnProfile::of("region", SemanticType::Categorical, 5), ColumnProfile::of("revenue", SemanticType::Quantitative, 40)], None)?;
    println!("region x revenue: pie scores {:?}", pie.score_of(ChartType::Pie));
    Ok(())
}
