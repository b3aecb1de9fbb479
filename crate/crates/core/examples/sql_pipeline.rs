//! Schema introspection, SQL generation, validation and execution.

use nlviz::demo::create_sales_db;
use nlviz::sql::{execute_sql, generate_sql, retrieve_metadata, validate_sql, ConnectionConfig, Connector, Generator, SqlPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let db = dir.path().join("sales.db");
    create_sales_db(&db)?;

    let connector = Connector::default();
    let config = ConnectionConfig::embedded(db.display().to_string());
    let snapshot = retrieve_metadata(&connector, &config)?;
    println!("schema: {}", snapshot.summary());

    for question in ["total sales by region", "sales trend over time", "average amount by month"] {
        let plan = generate_sql(question, &snapshot, None)?;
        let validated = validate_sql(&plan, &snapshot, 10_000)?;
        let table = execute_sql(&connector, &validated, &config, 10_000, 30_000)?;
        println!("\n{question}\n  {}\n  {} rows, columns {:?}", validated.sql, table.row_count(), table.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>());
    }

    for raw in ["DELETE FROM sales", "SELECT * FROM sales; DROP TABLE sales", "SELECT * FROM missing"] {
        let plan = SqlPlan { raw_sql: raw.into(), rationale: String::new(), referenced_tables: vec![], generator: Generator::Fallback };
        match validate_sql(&plan, &snapshot, 10_000) {
            Ok(v) => println!("\naccepted {raw:?} as {}", v.sql),
            Err(e) => println!("\nrejected {raw:?}: {} ({e})", e.code()),
        }
    }
    Ok(())
}
