use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use nlviz::providers::Providers;
use nlviz::service::{serve, ServiceConfig, SessionService};
use nlviz::sql::parse_dsn;
use nlviz::workflow::{
    replay_trace, run_turn, trace_from_ndjson, trace_to_ndjson, ConversationState, ResponseBundle, Runtime,
    UserMessage, WorkflowGraph,
};

#[derive(Parser)]
#[command(name = "nlviz", version, about = "Ask questions of a SQL database in plain language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Require `Authorization: Bearer <token>`.
        #[arg(long, env = "NLVIZ_TOKEN")]
        token: Option<String>,
    },
    /// Run one or more turns against a database and print the answers.
    Ask {
        #[command(flatten)]
        turn: TurnArgs,
        /// Write the last turn's trace as NDJSON.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Print response bundles as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-run the turns and check the last one against a recorded trace.
    Replay {
        #[command(flatten)]
        turn: TurnArgs,
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct TurnArgs {
    /// Database file path or DSN.
    #[arg(long)]
    db: String,
    /// Repeat for a multi-turn conversation.
    #[arg(long, required = true)]
    question: Vec<String>,
    /// Serve model and search answers from this fixture directory.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Timestamp stamped on every message (RFC 3339). Replays need the
    /// value the recording used.
    #[arg(long)]
    at: Option<DateTime<Utc>>,
}

impl TurnArgs {
    fn runtime(&self) -> Result<Runtime, String> {
        let config = match &self.config {
            Some(p) => ServiceConfig::load(p).map_err(|e| e.to_string())?,
            None => ServiceConfig::default(),
        };
        let providers = match &self.fixtures {
            Some(dir) => Providers::stub(dir),
            None => config.build_providers(),
        };
        Ok(Runtime::new(providers).with_settings(config.settings))
    }

    /// Runs every question but the last and returns the state before the
    /// last one together with its message.
    fn prepare(&self, runtime: &Runtime) -> Result<(ConversationState, UserMessage, DateTime<Utc>), String> {
        let config = parse_dsn(&self.db).map_err(|e| e.to_string())?;
        let at = self.at.unwrap_or_else(Utc::now);
        let graph = WorkflowGraph::standard();
        let mut state = ConversationState::new("cli");
        let (last, earlier) = self.question.split_last().expect("clap requires a question");
        let mut messages = earlier.iter().chain([last]).enumerate().map(|(i, q)| {
            let m = UserMessage::new("cli", q.as_str()).at(at);
            if i == 0 { m.with_connection(config.clone()) } else { m }
        });
        for _ in earlier {
            let msg = messages.next().expect("one message per question");
            let (after, bundle) = run_turn(state, &msg, &graph, runtime);
            print_bundle(&bundle, false);
            state = after;
        }
        Ok((state, messages.next().expect("last question"), at))
    }
}

fn print_bundle(bundle: &ResponseBundle, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(bundle).expect("bundles serialize"));
    } else {
        println!("{}", bundle.message);
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Serve { config, bind, store, token } => {
            let mut cfg = match config {
                Some(p) => ServiceConfig::load(p).map_err(|e| e.to_string())?,
                None => ServiceConfig::default(),
            };
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(s) = store {
                cfg.store_dir = s;
            }
            let token = token.or(cfg.bearer_token.clone());
            let service = Arc::new(SessionService::from_config(&cfg).map_err(|e| e.to_string())?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(serve(&cfg.bind, service, token)).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ask { turn, trace_out, json } => {
            let runtime = turn.runtime()?;
            let (state, msg, at) = turn.prepare(&runtime)?;
            let (after, bundle) = run_turn(state, &msg, &WorkflowGraph::standard(), &runtime);
            print_bundle(&bundle, json);
            if let Some(path) = trace_out {
                std::fs::write(&path, trace_to_ndjson(&after.trace)).map_err(|e| e.to_string())?;
                eprintln!("trace written to {}; replay with --at {}", path.display(), at.to_rfc3339());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { turn, trace } => {
            let text = std::fs::read_to_string(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let recorded = trace_from_ndjson(&text).map_err(|e| e.to_string())?;
            let runtime = turn.runtime()?;
            let (state, msg, _) = turn.prepare(&runtime)?;
            match replay_trace(&state, &msg, &recorded, &WorkflowGraph::standard(), &runtime) {
                Ok(bundle) => {
                    print_bundle(&bundle, false);
                    eprintln!("replay matched {} events", recorded.len());
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("replay failed: {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
