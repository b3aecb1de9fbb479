//! Rule-based intent classification, with and without session context.

use nlviz::intent::{classify, Lexicon, RuleContext};

fn main() {
    let lexicon = Lexicon::default();
    let fresh = RuleContext::default();
    let with_chart = RuleContext { has_chart: true, chart_fields: vec!["amount".into(), "month".into()], ..Default::default() };

    let messages = [
        "Show me a bar chart of sales by month",
        "Show me a bar chart of sales and explain the biggest trend",
        "Any anomalies in the data?",
        "Change the color of this chart to blue",
        "connect to sqlite:///tmp/sales.db",
        "good morning",
    ];
    for text in messages {
        for (label, ctx) in [("fresh", &fresh), ("with chart", &with_chart)] {
            let c = classify(text, &lexicon, ctx, None);
            let intents: Vec<String> = c
                .intents
                .entries()
                .iter()
                .map(|e| format!("{}({:.2}, {:?})", e.intent.name(), e.confidence, e.source))
                .collect();
            println!("{text:<60} [{label}] {}", intents.join(" "));
        }
    }
}
