//! A three-turn conversation over the seeded sales database.
//!
//! ```bash
//! cargo run -p nlviz --example ask_sales
//! ```

use nlviz::demo::create_sales_db;
use nlviz::sql::ConnectionConfig;
use nlviz::workflow::{run_turn, ConversationState, Runtime, UserMessage, WorkflowGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let db = dir.path().join("sales.db");
    create_sales_db(&db)?;

    let graph = WorkflowGraph::standard();
    let runtime = Runtime::default();
    let mut state = ConversationState::new("demo");

    let questions = [
        "Show me a bar chart of sales by month",
        "Change the color of this chart to blue",
        "What are the trends in sales?",
    ];
    for (i, q) in questions.iter().enumerate() {
        let mut msg = UserMessage::new("demo", *q);
        if i == 0 {
            msg = msg.with_connection(ConnectionConfig::embedded(db.display().to_string()));
        }
        let (next, bundle) = run_turn(state, &msg, &graph, &runtime);
        println!("> {q}\n{}\n", bundle.message);
        state = next;
    }

    let chart = state.charts.last().expect("a chart was drawn");
    println!("{}", serde_json::to_string_pretty(chart)?);
    Ok(())
}
