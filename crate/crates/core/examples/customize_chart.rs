//! Natural-language chart edits turned into validated patches.

use nlviz::customize::{customize, parse_customization, ChartPatch, PatchOp};
use nlviz::table::ColumnSpec;
use nlviz::viz::{build_chart_spec, preprocess, ChartType};
use nlviz::{ResultTable, SemanticType, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let columns = vec![
        ColumnSpec { name: "region".into(), semantic_type: SemanticType::Categorical },
        ColumnSpec { name: "amount".into(), semantic_type: SemanticType::Quantitative },
    ];
    let rows = [("north", 410.0), ("south", 385.5), ("east", 298.0), ("west", 350.25)]
        .iter()
        .map(|(r, a)| vec![Value::Text(r.to_string()), Value::Float(*a)])
        .collect();
    let table = ResultTable::new(columns, rows, "SELECT region, amount FROM totals")?;
    let prepared = preprocess(&table)?;
    let mut chart = build_chart_spec(ChartType::Bar, &prepared.profiles, &prepared.table, "amount by region")?;

    for command in ["Change the color of this chart to blue", "Make it a pie chart", "Sort it descending", "Set the title to Regional totals"] {
        let patch = parse_customization(command, &chart, None)?;
        let (updated, validated) = customize(&chart, &patch)?;
        println!("{command}\n  ops {}\n  warnings {:?}", serde_json::to_string(&patch.ops)?, validated.warnings);
        chart = updated;
    }
    println!("revision {}, mark {:?}, color {:?}", chart.revision, chart.mark, chart.style.mark_color);

    let bad = ChartPatch { target_chart: chart.chart_id.clone(), ops: vec![PatchOp::set("style.mark_color", "ghost")] };
    match customize(&chart, &bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {} ({e})", e.code()),
    }
    Ok(())
}
