//! JSON-RPC 2.0 tool server in the Model Context Protocol shape, over
//! newline-delimited JSON.

mod literature;
mod schema;

use std::io::{BufRead, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use literature::{literature_tool, LITERATURE_TOOL};
pub use schema::validate as validate_args;

pub const PROTOCOL_VERSION: &str = "2024-11-05";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CallError {
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("invalid arguments: {}", .0.join("; "))]
    ArgValidation(Vec<String>),
    #[error("tool failed: {0}")]
    Handler(String),
}

pub type ToolHandler = Box<dyn Fn(&Value) -> Result<Value, String> + Send + Sync>;

pub struct Tool {
    pub descriptor: ToolDescriptor,
    pub handler: ToolHandler,
}

#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<Tool>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name: registries are built once at startup.
    pub fn register(&mut self, tool: Tool) {
        assert!(
            self.get(&tool.descriptor.name).is_none(),
            "tool {} registered twice",
            tool.descriptor.name
        );
        self.tools.push(tool);
    }

    pub fn with(mut self, tool: Tool) -> Self {
        self.register(tool);
        self
    }

    fn get(&self, name: &str) -> Option<&Tool> {
        self.tools.iter().find(|t| t.descriptor.name == name)
    }

    pub fn descriptors(&self) -> Vec<&ToolDescriptor> {
        self.tools.iter().map(|t| &t.descriptor).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Validates `args` and runs the handler.
    pub fn call_tool(&self, name: &str, args: &Value) -> Result<Value, CallError> {
        let tool = self.get(name).ok_or_else(|| CallError::UnknownTool(name.to_string()))?;
        let problems = schema::validate(&tool.descriptor.input_schema, args);
        if !problems.is_empty() {
            return Err(CallError::ArgValidation(problems));
        }
        (tool.handler)(args).map_err(CallError::Handler)
    }
}

pub struct McpServer {
    registry: ToolRegistry,
    name: String,
    version: String,
}

fn response(id: Value, outcome: Result<Value, RpcError>) -> Value {
    match outcome {
        Ok(result) => json!({"jsonrpc": "2.0", "id": id, "result": result}),
        Err(error) => json!({"jsonrpc": "2.0", "id": id, "error": error}),
    }
}

fn valid_id(id: &Value) -> bool {
    id.is_string() || id.is_number() || id.is_null()
}

impl McpServer {
    pub fn new(registry: ToolRegistry) -> Self {
        Self {
            registry,
            name: "evrag-literature".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    fn initialize(&self) -> Value {
        json!({
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {"tools": {"listChanged": false}},
            "serverInfo": {"name": self.name, "version": self.version},
        })
    }

    fn tools_call(&self, params: Option<&Value>) -> Result<Value, RpcError> {
        let params = params.ok_or_else(|| RpcError::new(INVALID_PARAMS, "tools/call needs params"))?;
        let name = params
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, "tools/call needs a string 'name'"))?;
        let empty = json!({});
        let args = params.get("arguments").unwrap_or(&empty);
        match self.registry.call_tool(name, args) {
            Ok(structured) => Ok(json!({
                "content": [{"type": "text", "text": structured.to_string()}],
                "structuredContent": structured,
                "isError": false,
            })),
            Err(CallError::Handler(reason)) => Ok(json!({
                "content": [{"type": "text", "text": reason}],
                "isError": true,
            })),
            Err(e @ CallError::UnknownTool(_)) => Err(RpcError::new(INVALID_PARAMS, e.to_string())),
            Err(CallError::ArgValidation(problems)) => Err(RpcError {
                code: INVALID_PARAMS,
                message: "invalid tool arguments".into(),
                data: Some(json!({ "errors": problems })),
            }),
        }
    }

    fn dispatch(&self, method: &str, params: Option<&Value>) -> Result<Value, RpcError> {
        match method {
            "initialize" => Ok(self.initialize()),
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": self.registry.descriptors() })),
            "tools/call" => self.tools_call(params),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    /// Handles one decoded message (not a batch). `None` for notifications.
    fn handle_single(&self, msg: &Value) -> Option<Value> {
        let Some(obj) = msg.as_object() else {
            return Some(response(Value::Null, Err(RpcError::new(INVALID_REQUEST, "request must be an object"))));
        };
        let id = obj.get("id");
        if let Some(id) = id {
            if !valid_id(id) {
                return Some(response(
                    Value::Null,
                    Err(RpcError::new(INVALID_REQUEST, "id must be a string, number or null")),
                ));
            }
        }
        let reply_id = id.cloned().unwrap_or(Value::Null);
        let invalid = |why: &str| Some(response(reply_id.clone(), Err(RpcError::new(INVALID_REQUEST, why))));
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
            return if id.is_some() { invalid("jsonrpc must be \"2.0\"") } else { None };
        }
        let Some(method) = obj.get("method").and_then(Value::as_str) else {
            return if id.is_some() { invalid("method must be a string") } else { None };
        };
        let params = obj.get("params");
        if params.is_some_and(|p| !(p.is_object() || p.is_array())) {
            return if id.is_some() { invalid("params must be an object or array") } else { None };
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| self.dispatch(method, params))).unwrap_or_else(|_| {
            tracing::error!(method, "handler panicked");
            Err(RpcError::new(INTERNAL_ERROR, "internal error"))
        });
        if id.is_none() {
            if let Err(e) = outcome {
                tracing::debug!(method, code = e.code, "error on notification, not reported");
            }
            return None;
        }
        Some(response(reply_id, outcome))
    }

    /// Handles a decoded message or batch.
    pub fn handle_value(&self, msg: &Value) -> Option<Value> {
        match msg {
            Value::Array(items) if items.is_empty() => {
                Some(response(Value::Null, Err(RpcError::new(INVALID_REQUEST, "empty batch"))))
            }
            Value::Array(items) => {
                let replies: Vec<Value> = items.iter().filter_map(|m| self.handle_single(m)).collect();
                (!replies.is_empty()).then_some(Value::Array(replies))
            }
            single => self.handle_single(single),
        }
    }

    /// Handles one raw line. Returns the serialized reply, if any.
    pub fn handle_line(&self, line: &str) -> Option<String> {
        let reply = match serde_json::from_str::<Value>(line) {
            Ok(msg) => self.handle_value(&msg)?,
            Err(e) => response(
                Value::Null,
                Err(RpcError::new(PARSE_ERROR, format!("parse error: {e}"))),
            ),
        };
        Some(reply.to_string())
    }
}

/// Serves newline-delimited JSON until EOF. Blank lines are ignored;
/// invalid UTF-8 counts as a parse error.
pub fn serve<R: BufRead, W: Write>(mut input: R, mut output: W, server: &McpServer) -> std::io::Result<()> {
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let reply = match std::str::from_utf8(&buf) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => server.handle_line(line),
            Err(_) => server.handle_line("\u{0}"),
        };
        if let Some(reply) = reply {
            output.write_all(reply.as_bytes())?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo_server() -> McpServer {
        let registry = ToolRegistry::new()
            .with(Tool {
                descriptor: ToolDescriptor {
                    name: "echo".into(),
                    description: "Echo".into(),
                    input_schema: json!({"type":"object","properties":{"x":{"type":"integer"}},"required":["x"]}),
                },
                handler: Box::new(|args| {
                    if args["x"] == 13 {
                        Err("unlucky".into())
                    } else if args["x"] == 99 {
                        panic!("boom")
                    } else {
                        Ok(args.clone())
                    }
                }),
            });
        McpServer::new(registry)
    }

    fn call(server: &McpServer, line: &str) -> Value {
        serde_json::from_str(&server.handle_line(line).expect("a reply")).unwrap()
    }

    #[test]
    fn standard_error_codes() {
        let s = echo_server();
        let r = call(&s, "not json");
        assert_eq!(r["error"]["code"], PARSE_ERROR);
        assert_eq!(r["id"], Value::Null);
        assert_eq!(call(&s, r#"{"jsonrpc":"2.0","id":2,"method":"nope"}"#)["error"]["code"], METHOD_NOT_FOUND);
        assert_eq!(call(&s, r#"{"jsonrpc":"1.0","id":3,"method":"ping"}"#)["error"]["code"], INVALID_REQUEST);
        assert_eq!(call(&s, r#"{"jsonrpc":"2.0","id":{},"method":"ping"}"#)["id"], Value::Null);
        assert_eq!(call(&s, "[]")["error"]["code"], INVALID_REQUEST);
        assert_eq!(call(&s, "42")["error"]["code"], INVALID_REQUEST);
    }

    #[test]
    fn initialize_is_idempotent_and_silent_as_notification() {
        let s = echo_server();
        let a = call(&s, r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#);
        let b = call(&s, r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#);
        assert_eq!(a, b);
        assert!(a["result"]["capabilities"]["tools"].is_object());
        assert!(s.handle_line(r#"{"jsonrpc":"2.0","method":"initialize"}"#).is_none());
        assert!(s.handle_line(r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#).is_none());
    }

    #[test]
    fn tool_call_outcomes() {
        let s = echo_server();
        let ok = call(&s, r#"{"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"echo","arguments":{"x":1}}}"#);
        assert_eq!(ok["result"]["structuredContent"]["x"], 1);
        assert_eq!(ok["result"]["isError"], false);
        let failed =
            call(&s, r#"{"jsonrpc":"2.0","id":2,"method":"tools/call","params":{"name":"echo","arguments":{"x":13}}}"#);
        assert_eq!(failed["result"]["isError"], true);
        let bad = call(&s, r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"echo","arguments":{}}}"#);
        assert_eq!(bad["error"]["code"], INVALID_PARAMS);
        let unknown = call(&s, r#"{"jsonrpc":"2.0","id":4,"method":"tools/call","params":{"name":"zzz"}}"#);
        assert_eq!(unknown["error"]["code"], INVALID_PARAMS);
        let panicked =
            call(&s, r#"{"jsonrpc":"2.0","id":5,"method":"tools/call","params":{"name":"echo","arguments":{"x":99}}}"#);
        assert_eq!(panicked["error"]["code"], INTERNAL_ERROR);
    }

    #[test]
    fn batch_answers_elementwise() {
        let s = echo_server();
        let r = call(
            &s,
            r#"[{"jsonrpc":"2.0","id":"a","method":"ping"},{"jsonrpc":"2.0","method":"ping"},{"jsonrpc":"2.0","id":"b","method":"x"},1]"#,
        );
        let arr = r.as_array().unwrap();
        assert_eq!(arr.len(), 3);
        assert_eq!(arr[0]["id"], "a");
        assert_eq!(arr[1]["error"]["code"], METHOD_NOT_FOUND);
        assert_eq!(arr[2]["error"]["code"], INVALID_REQUEST);
        assert!(s.handle_line(r#"[{"jsonrpc":"2.0","method":"ping"}]"#).is_none());
    }

    #[test]
    fn serve_loop_over_bytes() {
        let s = echo_server();
        let input = b"{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"ping\"}\n\n\xff\xfe\n{\"jsonrpc\":\"2.0\",\"method\":\"ping\"}\n{\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"tools/list\"}";
        let mut out = Vec::new();
        serve(&input[..], &mut out, &s).unwrap();
        let lines: Vec<Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["id"], 1);
        assert_eq!(lines[1]["error"]["code"], PARSE_ERROR);
        assert_eq!(lines[2]["result"]["tools"][0]["name"], "echo");
    }
}
