use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use evrag_core::mcp::{literature_tool, serve, McpServer, ToolRegistry, INVALID_PARAMS, LITERATURE_TOOL};
use evrag_core::pubmed::{CannedTransport, MockClock, PubmedClient, PubmedConfig};
use evrag_core::retry::RetryPolicy;
use proptest::prelude::*;
use serde_json::{json, Value};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/literature").join(name))
        .unwrap()
}

fn server(transport: CannedTransport) -> McpServer {
    let client = PubmedClient::with_clock(PubmedConfig::default(), Box::new(transport), Arc::new(MockClock::new()))
        .with_retry(RetryPolicy::no_wait(2));
    McpServer::new(ToolRegistry::new().with(literature_tool(Arc::new(client))))
}

fn canned() -> CannedTransport {
    CannedTransport::pubmed(fixture("esearch_two.json"), fixture("efetch_two.xml"))
}

fn rpc(s: &McpServer, msg: Value) -> Value {
    serde_json::from_str(&s.handle_line(&msg.to_string()).unwrap()).unwrap()
}

#[test]
fn tools_list_has_literature_search() {
    let s = server(canned());
    let r = rpc(&s, json!({"jsonrpc":"2.0","id":1,"method":"tools/list"}));
    let tools = r["result"]["tools"].as_array().unwrap();
    assert_eq!(tools.len(), 1);
    assert_eq!(tools[0]["name"], LITERATURE_TOOL);
    assert_eq!(tools[0]["inputSchema"]["required"], json!(["term"]));
}

#[test]
fn literature_call_returns_one_article() {
    let s = server(canned());
    let r = rpc(
        &s,
        json!({"jsonrpc":"2.0","id":7,"method":"tools/call",
               "params":{"name":"literature_search","arguments":{"term":"cocaine","max_results":1}}}),
    );
    assert_eq!(r["id"], 7);
    let articles = r["result"]["structuredContent"]["articles"].as_array().unwrap();
    assert_eq!(articles.len(), 1);
    assert_eq!(articles[0]["pmid"], "28183512");
    assert_eq!(articles[0]["url"], "https://pubmed.ncbi.nlm.nih.gov/28183512/");
    let text: Value = serde_json::from_str(r["result"]["content"][0]["text"].as_str().unwrap()).unwrap();
    assert_eq!(text["articles"][0]["title"], "The Cardiovascular Effects of Cocaine.");
}

#[test]
fn bad_arguments_are_invalid_params() {
    let s = server(canned());
    for args in [json!({}), json!({"term": ""}), json!({"term": "x", "max_results": 0}), json!({"term": 5})] {
        let r = rpc(
            &s,
            json!({"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"literature_search","arguments":args}}),
        );
        assert_eq!(r["error"]["code"], INVALID_PARAMS, "{args}");
    }
}

#[test]
fn upstream_failure_is_a_tool_error() {
    let s = server(CannedTransport::disabled());
    let r = rpc(
        &s,
        json!({"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"literature_search","arguments":{"term":"x"}}}),
    );
    assert!(r.get("error").is_none());
    assert_eq!(r["result"]["isError"], true);
}

#[test]
fn stdio_session() {
    let s = server(canned());
    let input = [
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"protocolVersion":"2025-03-26","capabilities":{}}}"#,
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
        r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#,
        r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"literature_search","arguments":{"term":"cocaine"}}}"#,
    ]
    .join("\n");
    let mut out = Vec::new();
    serve(input.as_bytes(), &mut out, &s).unwrap();
    let replies: Vec<Value> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ids: Vec<&Value> = replies.iter().map(|r| &r["id"]).collect();
    assert_eq!(ids, [&json!(1), &json!(2), &json!(3)]);
    assert_eq!(replies[2]["result"]["structuredContent"]["articles"].as_array().unwrap().len(), 2);
}

fn message_strategy() -> impl Strategy<Value = String> {
    let id = prop_oneof![
        Just(None),
        (0i64..1000).prop_map(|n| Some(json!(n))),
        "[a-z]{1,6}".prop_map(|s| Some(json!(s))),
    ];
    let method = prop_oneof![
        Just("initialize"),
        Just("ping"),
        Just("tools/list"),
        Just("tools/call"),
        Just("nope"),
    ];
    let valid = (id, method, any::<bool>()).prop_map(|(id, method, good_args)| {
        let mut m = json!({"jsonrpc": "2.0", "method": method});
        if method == "tools/call" {
            m["params"] = if good_args {
                json!({"name": "literature_search", "arguments": {"term": "cocaine"}})
            } else {
                json!({"name": "literature_search", "arguments": {"max_results": "many"}})
            };
        }
        if let Some(id) = id {
            m["id"] = id;
        }
        m.to_string()
    });
    prop_oneof![
        4 => valid,
        1 => "[ -~]{0,30}",
        1 => Just(r#"{"jsonrpc":"2.0","id":1}"#.to_string()),
        1 => Just(r#"{"jsonrpc":"2.0","id":[1],"method":"ping"}"#.to_string()),
        1 => Just("[]".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_request_id_is_answered_once(msgs in proptest::collection::vec(message_strategy(), 1..40)) {
        let s = server(canned());
        let mut expected: HashMap<String, usize> = HashMap::new();
        for m in &msgs {
            if let Ok(v) = serde_json::from_str::<Value>(m) {
                if let Some(id) = v.get("id").filter(|id| id.is_string() || id.is_number()) {
                    if v.get("method").is_some() || v.get("jsonrpc").is_some() {
                        *expected.entry(id.to_string()).or_default() += 1;
                    }
                }
            }
        }
        let input = msgs.join("\n");
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, &s).unwrap();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for line in String::from_utf8(out).unwrap().lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            prop_assert_eq!(&v["jsonrpc"], "2.0");
            prop_assert!(v.get("result").is_some() != v.get("error").is_some());
            if !v["id"].is_null() {
                *seen.entry(v["id"].to_string()).or_default() += 1;
            }
        }
        prop_assert_eq!(seen, expected);
    }
}
