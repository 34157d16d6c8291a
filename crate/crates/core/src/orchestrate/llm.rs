//! Language-model providers: a remote chat-completions client and two
//! offline stand-ins.

use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};
use std::sync::LazyLock;
use thiserror::Error;

use super::prompt::{GenerationRequest, ReformulationPrompt, INSUFFICIENT_ANSWER};
use super::reformulate::substitute_entity;
use super::session::Role;
use crate::retry::RetryPolicy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("language model unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("language model returned an unusable reply: {0}")]
    BadReply(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    pub reasoning_trace: Option<String>,
}

pub trait LlmProvider: Send + Sync {
    /// Rewrites a follow-up into a standalone question.
    fn reformulate(&self, prompt: &ReformulationPrompt) -> Result<String, LlmError>;
    fn generate(&self, request: &GenerationRequest) -> Result<Completion, LlmError>;
}

/// Deterministic offline provider. Reformulation substitutes the heuristic
/// entity; generation quotes the top evidence snippet.
#[derive(Debug, Default, Clone)]
pub struct TemplateLlm;

fn first_sentence(text: &str, max_chars: usize) -> String {
    let text = text.trim();
    let end = text
        .char_indices()
        .find(|&(i, c)| matches!(c, '.' | '!' | '?') && text[i + c.len_utf8()..].starts_with(char::is_whitespace))
        .map_or(text.len(), |(i, c)| i + c.len_utf8());
    let sentence = &text[..end];
    if sentence.chars().count() > max_chars {
        let cut: String = sentence.chars().take(max_chars).collect();
        format!("{}…", cut.trim_end())
    } else {
        sentence.to_string()
    }
}

impl LlmProvider for TemplateLlm {
    fn reformulate(&self, prompt: &ReformulationPrompt) -> Result<String, LlmError> {
        match &prompt.entity_hint {
            Some(entity) => Ok(substitute_entity(&prompt.question, entity)),
            None => Ok(prompt.question.clone()),
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Completion, LlmError> {
        let Some(top) = request.entries.first() else {
            return Ok(Completion {
                text: INSUFFICIENT_ANSWER.to_string(),
                reasoning_trace: None,
            });
        };
        let mut text = format!(
            "According to {}, \"{}\" [1].",
            top.display_title,
            first_sentence(&top.snippet, 240)
        );
        if let Some(second) = request.entries.get(1) {
            text.push_str(&format!(" See also {} [2].", second.display_title));
        }
        Ok(Completion {
            text,
            reasoning_trace: Some(format!(
                "Template answer built from {} evidence item(s).",
                request.entries.len()
            )),
        })
    }
}

/// Replays canned replies in order, then repeats the last one. An `Err`
/// entry simulates an outage.
pub struct ScriptedLlm {
    reformulations: Mutex<Vec<Result<String, LlmError>>>,
    answers: Mutex<Vec<Result<Completion, LlmError>>>,
}

impl ScriptedLlm {
    pub fn new(
        reformulations: Vec<Result<String, LlmError>>,
        answers: Vec<Result<Completion, LlmError>>,
    ) -> Self {
        Self {
            reformulations: Mutex::new(reformulations),
            answers: Mutex::new(answers),
        }
    }

    /// A provider whose every call fails as unavailable.
    pub fn unavailable() -> Self {
        let err = LlmError::Unavailable {
            attempts: 1,
            reason: "scripted outage".into(),
        };
        Self::new(vec![Err(err.clone())], vec![Err(err)])
    }
}

fn next<T: Clone>(queue: &Mutex<Vec<T>>) -> Option<T> {
    let mut q = queue.lock().expect("script poisoned");
    match q.len() {
        0 => None,
        1 => Some(q[0].clone()),
        _ => Some(q.remove(0)),
    }
}

impl LlmProvider for ScriptedLlm {
    fn reformulate(&self, prompt: &ReformulationPrompt) -> Result<String, LlmError> {
        next(&self.reformulations).unwrap_or_else(|| Ok(prompt.question.clone()))
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Completion, LlmError> {
        next(&self.answers).unwrap_or_else(|| TemplateLlm.generate(request))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl LlmConfig {
    /// Reads `LLM_ENDPOINT`, `LLM_MODEL`, `LLM_API_KEY`. `None` when no
    /// endpoint is set.
    pub fn from_env() -> Option<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        Some(Self {
            endpoint: var("LLM_ENDPOINT")?,
            model: var("LLM_MODEL").unwrap_or_else(|| "default".into()),
            api_key: var("LLM_API_KEY"),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        })
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpLlm {
    config: LlmConfig,
    agent: ureq::Agent,
}

static THINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<think>(.*?)</think>").expect("valid regex"));

/// Splits `<think>…</think>` blocks out of a reply.
pub fn split_reasoning(content: &str) -> (String, Option<String>) {
    let traces: Vec<String> = THINK
        .captures_iter(content)
        .map(|c| c[1].trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    let answer = THINK.replace_all(content, "").trim().to_string();
    let trace = (!traces.is_empty()).then(|| traces.join("\n\n"));
    (answer, trace)
}

impl HttpLlm {
    pub fn new(config: LlmConfig) -> Self {
        let agent = crate::http::agent(config.timeout);
        Self { config, agent }
    }

    fn chat(&self, messages: Value, temperature: f64) -> Result<Completion, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": temperature,
        });
        let reply = crate::http::post_json(
            &self.agent,
            &self.config.endpoint,
            self.config.api_key.as_deref(),
            &body,
            self.config.retry,
        )
        .map_err(|(reason, attempts)| LlmError::Unavailable { attempts, reason })?;
        let message = &reply["choices"][0]["message"];
        let content = message["content"]
            .as_str()
            .ok_or_else(|| LlmError::BadReply("no choices[0].message.content".into()))?;
        let (text, inline_trace) = split_reasoning(content);
        let trace = message["reasoning_content"]
            .as_str()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .or(inline_trace);
        Ok(Completion {
            text,
            reasoning_trace: trace,
        })
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl LlmProvider for HttpLlm {
    fn reformulate(&self, prompt: &ReformulationPrompt) -> Result<String, LlmError> {
        let transcript: Vec<String> = prompt
            .history
            .iter()
            .map(|(role, text)| format!("{}: {text}", role_name(*role)))
            .collect();
        let messages = json!([
            {"role": "system", "content": prompt.system_prompt},
            {"role": "user", "content": format!(
                "Conversation so far:\n{}\n\nFollow-up question: {}\n\nStandalone question:",
                transcript.join("\n"),
                prompt.question
            )},
        ]);
        let text = self.chat(messages, 0.0)?.text;
        let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
        if line.is_empty() {
            return Err(LlmError::BadReply("empty reformulation".into()));
        }
        Ok(line.trim_matches('"').to_string())
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Completion, LlmError> {
        let messages = json!([
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_message()},
        ]);
        self.chat(messages, 0.2)
    }
}
