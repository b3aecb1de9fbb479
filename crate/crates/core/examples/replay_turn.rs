//! Record a turn's trace, replay it, and detect a tampered recording.

use chrono::{TimeZone, Utc};
use nlviz::demo::create_sales_db;
use nlviz::sql::ConnectionConfig;
use nlviz::workflow::{replay_trace, run_turn, trace_from_ndjson, trace_to_ndjson, ConversationState, Runtime, UserMessage, WorkflowGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let db = dir.path().join("sales.db");
    create_sales_db(&db)?;
    let graph = WorkflowGraph::standard();
    let runtime = Runtime::default();
    let at = Utc.with_ymd_and_hms(2025, 1, 15, 12, 0, 0).unwrap();

    let connect = UserMessage::new("r", "connect").at(at).with_connection(ConnectionConfig::embedded(db.display().to_string()));
    let (before, _) = run_turn(ConversationState::new("r"), &connect, &graph, &runtime);

    let msg = UserMessage::new("r", "Show me a bar chart of sales and explain the biggest trend").at(at);
    let (after, bundle) = run_turn(before.clone(), &msg, &graph, &runtime);
    let ndjson = trace_to_ndjson(&after.trace);
    print!("{ndjson}");

    let recorded = trace_from_ndjson(&ndjson)?;
    let replayed = replay_trace(&before, &msg, &recorded, &graph, &runtime)?;
    println!("replay identical: {}", replayed == bundle);

    let mut tampered = recorded.clone();
    tampered[1].output_digest = "0".repeat(64);
    match replay_trace(&before, &msg, &tampered, &graph, &runtime) {
        Ok(_) => println!("tampering went unnoticed"),
        Err(e) => println!("tampered trace: {e}"),
    }
    Ok(())
}
