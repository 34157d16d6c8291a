use serde::{Deserialize, Serialize};

use super::session::Role;
use super::{RetrievedEvidence, SourceKind};

pub const PROMPT_VERSION: &str = "v1";
pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system.v1.txt");
pub const INSUFFICIENT_INSTRUCTION: &str = include_str!("../../prompts/insufficient.v1.txt");
pub const REFORMULATE_PROMPT: &str = include_str!("../../prompts/reformulate.v1.txt");

/// What the offline provider says when there is no evidence.
pub const INSUFFICIENT_ANSWER: &str =
    "The available sources do not contain enough information to answer this question reliably.";

pub const SNIPPET_LIMIT: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub grounded: bool,
    pub cite: bool,
    pub admit_uncertainty: bool,
    pub educational_tone: bool,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            grounded: true,
            cite: true,
            admit_uncertainty: true,
            educational_tone: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptEntry {
    /// 1-based citation marker.
    pub marker: usize,
    pub display_title: String,
    pub source_kind: SourceKind,
    pub snippet: String,
}

impl PromptEntry {
    pub fn render(&self) -> String {
        format!(
            "[{}] {} ({}): {}",
            self.marker,
            self.display_title,
            self.source_kind.as_str(),
            self.snippet
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub question: String,
    /// In fusion order; entry `i` has marker `i + 1`.
    pub entries: Vec<PromptEntry>,
    pub constraints: Constraints,
}

impl GenerationRequest {
    pub fn evidence_block(&self) -> Vec<String> {
        self.entries.iter().map(PromptEntry::render).collect()
    }

    /// The user message sent alongside the system prompt.
    pub fn user_message(&self) -> String {
        if self.entries.is_empty() {
            return format!("Evidence: none retrieved.\n\nQuestion: {}", self.question);
        }
        format!("Evidence:\n{}\n\nQuestion: {}", self.evidence_block().join("\n"), self.question)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReformulationPrompt {
    pub system_prompt: String,
    pub history: Vec<(Role, String)>,
    pub question: String,
    /// Entity the heuristic would substitute, if it found exactly one.
    pub entity_hint: Option<String>,
}

pub fn truncate_snippet(text: &str) -> String {
    let text = text.trim();
    if text.chars().count() <= SNIPPET_LIMIT {
        return text.to_string();
    }
    let cut: String = text.chars().take(SNIPPET_LIMIT).collect();
    format!("{cut}…")
}

pub fn compose_prompt(question: &str, evidence: &[RetrievedEvidence]) -> GenerationRequest {
    let entries: Vec<PromptEntry> = evidence
        .iter()
        .enumerate()
        .map(|(i, e)| PromptEntry {
            marker: i + 1,
            display_title: e.display_title.clone(),
            source_kind: e.source_kind,
            snippet: truncate_snippet(&e.snippet),
        })
        .collect();
    let mut system_prompt = SYSTEM_PROMPT.trim_end().to_string();
    if entries.is_empty() {
        system_prompt.push_str("\n\n");
        system_prompt.push_str(INSUFFICIENT_INSTRUCTION.trim_end());
    }
    GenerationRequest {
        system_prompt,
        question: question.to_string(),
        entries,
        constraints: Constraints::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(title: &str, snippet: &str, kind: SourceKind) -> RetrievedEvidence {
        RetrievedEvidence {
            source_kind: kind,
            reference: "x".into(),
            display_title: title.into(),
            score: 0.5,
            weight: 0.5,
            snippet: snippet.into(),
            article: None,
        }
    }

    #[test]
    fn renders_numbered_entries() {
        let req = compose_prompt(
            "q?",
            &[
                ev("Fact sheet", "Body one.", SourceKind::LocalRegulatory),
                ev("Review", "Body two.", SourceKind::Literature),
            ],
        );
        assert_eq!(
            req.evidence_block(),
            ["[1] Fact sheet (local_regulatory): Body one.", "[2] Review (literature): Body two."]
        );
        assert!(!req.system_prompt.contains(INSUFFICIENT_INSTRUCTION.trim()));
        assert!(req.user_message().ends_with("Question: q?"));
    }

    #[test]
    fn empty_evidence_asks_for_insufficiency() {
        let req = compose_prompt("q?", &[]);
        assert!(req.system_prompt.contains("sources are insufficient"));
        assert!(req.entries.is_empty());
    }

    #[test]
    fn system_prompt_states_constraints() {
        let p = compose_prompt("q", &[]).system_prompt;
        for needle in ["Ground every statement", "citations", "Acknowledge uncertainty", "educational tone"] {
            assert!(p.contains(needle), "{needle}");
        }
    }

    #[test]
    fn long_snippets_truncate() {
        let long = "é".repeat(700);
        let req = compose_prompt("q", &[ev("t", &long, SourceKind::Literature)]);
        let s = &req.entries[0].snippet;
        assert_eq!(s.chars().count(), SNIPPET_LIMIT + 1);
        assert!(s.ends_with('…'));
        assert_eq!(truncate_snippet(&"a".repeat(600)).len(), 600);
    }
}
