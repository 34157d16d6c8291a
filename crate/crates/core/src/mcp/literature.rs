use std::sync::Arc;

use serde_json::{json, Value};

use super::{Tool, ToolDescriptor};
use crate::pubmed::{LitQuery, LiteratureSource};

pub const LITERATURE_TOOL: &str = "literature_search";

fn descriptor() -> ToolDescriptor {
    ToolDescriptor {
        name: LITERATURE_TOOL.into(),
        description: "Search PubMed for recent peer-reviewed articles. Reviews and newer \
                      publications are ranked first. Returns citation records with abstracts."
            .into(),
        input_schema: json!({
            "type": "object",
            "properties": {
                "term": {"type": "string", "minLength": 1, "description": "Search terms"},
                "max_results": {"type": "integer", "minimum": 1, "maximum": 20, "default": 3},
                "years_back": {"type": "integer", "minimum": 0, "maximum": 100, "default": 5},
                "prefer_reviews": {"type": "boolean", "default": true}
            },
            "required": ["term"],
            "additionalProperties": false
        }),
    }
}

fn query_from_args(args: &Value) -> LitQuery {
    // Arguments are schema-validated before this runs.
    let mut q = LitQuery::new(args["term"].as_str().unwrap_or_default().trim());
    if let Some(n) = args.get("max_results").and_then(Value::as_u64) {
        q.max_results = n as usize;
    }
    if let Some(n) = args.get("years_back").and_then(Value::as_u64) {
        q.years_back = n as u32;
    }
    if let Some(b) = args.get("prefer_reviews").and_then(Value::as_bool) {
        q.prefer_reviews = b;
    }
    q
}

/// The literature search tool bound to `source`.
pub fn literature_tool(source: Arc<dyn LiteratureSource>) -> Tool {
    Tool {
        descriptor: descriptor(),
        handler: Box::new(move |args| {
            let q = query_from_args(args);
            let articles = source.search_literature(&q).map_err(|e| e.to_string())?;
            Ok(json!({ "articles": articles }))
        }),
    }
}
