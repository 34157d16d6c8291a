//! Small blocking HTTP helpers shared by the remote providers.

use std::time::Duration;

use serde_json::Value;

use crate::retry::{Attempt, RetryPolicy};

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn transient_status(status: u16) -> bool {
    status == 429 || status >= 500
}

/// POSTs JSON and parses a JSON reply, retrying network errors, 429 and 5xx.
/// On failure returns the last reason and the attempts made.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &Value,
    retry: RetryPolicy,
) -> Result<Value, (String, u32)> {
    retry.run(|_| {
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        if transient_status(status) {
            return Err(Attempt::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(format!("HTTP {status}: {}", text.trim())));
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("invalid JSON reply: {e}")))
    })
}
