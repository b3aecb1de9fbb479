//! The session service in-process, then over HTTP with `--serve`.
//!
//! ```bash
//! cargo run -p nlviz --example session_service
//! cargo run -p nlviz --example session_service -- --serve 127.0.0.1:8080
//! ```

use std::sync::Arc;

use nlviz::demo::create_sales_db;
use nlviz::service::{serve, ExportFormat, FileStore, SessionService};
use nlviz::sql::ConnectionConfig;
use nlviz::workflow::Runtime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let db = dir.path().join("sales.db");
    create_sales_db(&db)?;
    let service = Arc::new(SessionService::new(FileStore::open(dir.path().join("sessions"))?, Runtime::default()));

    let id = service.create_session()?;
    let schema = service.register_connection(&id, ConnectionConfig::embedded(db.display().to_string()))?;
    println!("session {id}: {schema}");

    let bundle = service.post_message(&id, "Show me a bar chart of sales by month")?;
    println!("{}", bundle.message);
    let chart_id = &bundle.charts[0].chart_id;
    let csv = service.export_chart(&id, chart_id, ExportFormat::Csv)?;
    print!("{}", String::from_utf8(csv)?);

    let state = service.get_state(&id)?;
    println!("history {} turns, charts {}", state.history.len(), state.charts.len());

    let args: Vec<String> = std::env::args().collect();
    if let Some(pos) = args.iter().position(|a| a == "--serve") {
        let addr = args.get(pos + 1).cloned().unwrap_or_else(|| "127.0.0.1:8080".into());
        println!("serving session {id} on {addr}; Ctrl-C to stop");
        tokio::runtime::Runtime::new()?.block_on(serve(&addr, service, None))?;
    }
    Ok(())
}
