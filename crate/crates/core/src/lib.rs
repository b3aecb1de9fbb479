//! Conversational data exploration over SQL databases.
//!
//! A user message is classified into one or more intents, routed through a
//! fixed-precedence graph of agents (SQL, visualization, analysis,
//! explanation, customization, system) and compiled into a single
//! [`ResponseBundle`](workflow::ResponseBundle). Every agent is
//! deterministic when the model and search providers are stubbed, so whole
//! turns can be recorded and replayed bit-for-bit.
//!
//! The runnable programs under `examples/` walk through each capability:
//!
//! ```bash
//! cargo run -p nlviz --example ask_sales
//! cargo run -p nlviz --example classify_intents
//! cargo run -p nlviz --example sql_pipeline
//! cargo run -p nlviz --example rank_and_build_chart
//! cargo run -p nlviz --example detect_insights
//! cargo run -p nlviz --example grounded_explanation
//! cargo run -p nlviz --example customize_chart
//! cargo run -p nlviz --example session_service
//! cargo run -p nlviz --example replay_turn
//! ```

pub mod analysis;
pub mod canonical;
pub mod customize;
pub mod demo;
pub mod explain;
pub mod intent;
pub mod providers;
pub mod service;
pub mod sql;
pub mod table;
pub mod viz;
pub mod workflow;

pub use intent::{Intent, IntentSet};
pub use table::{ResultTable, SemanticType, Value};
pub use workflow::{ConversationState, ResponseBundle, UserMessage};
