//! Search planning and citation-grounded explanation over stub search results.

use nlviz::analysis::{Direction, Finding, InsightReport, TrendFinding};
use nlviz::explain::explain;
use nlviz::providers::StubSearch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let insight = InsightReport {
        findings: vec![Finding::Trend(TrendFinding {
            field: "sales".into(),
            slope: -4.2,
            intercept: 130.0,
            r2: 0.81,
            direction: Direction::Decreasing,
        })],
        narrative: String::new(),
        source_sql: "SELECT month, SUM(amount) FROM sales GROUP BY month".into(),
    };
    let question = "Explain why sales dropped in Q2";

    let search = StubSearch::default().with_items(
        "sales decline dropped Q2",
        &[
            ("Retail slowdown hits Q2", "https://news.example.org/retail-q2", "Consumer spending fell in the second quarter."),
            ("Supply issues", "https://trade.example.org/supply", "Shipping delays reduced stock in April and May."),
        ],
    );
    let (plan, evidence, explanation) = explain(&insight, question, Some(&search), None, 3)?;
    println!("queries: {:?}", plan.queries);
    println!("evidence: {:?}", evidence.urls());
    println!("\n{}\ncitations: {:?}", explanation.text, explanation.citations);

    let (_, _, bare) = explain(&insight, question, None, None, 3)?;
    println!("\nwithout search: {}", bare.text);
    Ok(())
}
