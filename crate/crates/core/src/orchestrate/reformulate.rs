//! History-aware rewriting of follow-up questions.
//!
//! A question needs rewriting when it contains an anaphoric marker and there
//! is history. Candidate antecedents are noun-ish phrases (maximal runs of
//! non-stopwords) from earlier user questions, preferring the resolved form
//! stored on the following assistant turn. Only the most recent turn that
//! introduced any candidate counts; two or more candidates there make the
//! question ambiguous.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::llm::LlmProvider;
use super::prompt::{ReformulationPrompt, REFORMULATE_PROMPT};
use super::session::{ConversationTurn, Role};

pub const DEFAULT_WINDOW: usize = 6;

pub const DEFAULT_MARKERS: &[&str] = &[
    "it", "its", "they", "them", "their", "there", "that", "this", "these", "those",
];

const STOPWORDS: &[&str] = &[
    // function words
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "doing", "down", "during", "each", "either", "else", "ever", "for", "from", "further", "had", "has", "have",
    "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just",
    "me", "might", "more", "most", "much", "must", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only",
    "or", "other", "our", "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "us", "very", "versus", "vs", "was", "we", "were", "what", "when", "where", "whether",
    "which", "while", "who", "whom", "whose", "why", "will", "with", "would", "you", "your", "yours",
    // conversational verbs
    "tell", "explain", "describe", "know", "want", "need", "say", "says", "said", "mean", "means", "compare",
    "compared", "comparison", "happen", "happens", "cause", "causes", "caused", "affect", "affects", "make",
    "makes", "get", "gets", "take", "takes", "taking", "work", "works", "use", "used", "using", "help", "helps",
    "give", "show", "list", "please", "thanks", "thank", "like",
    // generic nouns and adjectives of the domain
    "health", "effect", "effects", "risk", "risks", "danger", "dangers", "dangerous", "harm", "harms", "harmful",
    "safe", "safety", "common", "commonly", "difference", "differences", "different", "similar", "similarities",
    "drug", "drugs", "substance", "substances", "people", "person", "someone", "users", "user", "information",
    "info", "way", "ways", "thing", "things", "type", "types", "kind", "kinds", "sign", "signs", "symptom",
    "symptoms", "long", "short", "term", "body", "main", "major", "many", "new", "current", "recent", "addictive",
    "addiction", "legal", "illegal", "strong", "stronger", "potent", "time", "times", "lot", "exactly", "really",
    "generally", "typically", "usually", "often", "today", "currently", "adolescents", "teens", "young", "adults",
];

static STOP: LazyLock<HashSet<&'static str>> = LazyLock::new(|| STOPWORDS.iter().copied().collect());

/// Clause boundaries: anything that is not a word character, apostrophe,
/// hyphen or space.
static CLAUSE_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^\p{L}\p{N}'\- ]+").expect("valid regex"));

fn normalize_token(t: &str) -> String {
    let t = t.trim_matches(|c: char| c == '\'' || c == '-');
    let t = t.strip_suffix("'s").unwrap_or(t);
    t.to_lowercase()
}

fn is_stop(token: &str) -> bool {
    let n = normalize_token(token);
    n.is_empty() || STOP.contains(n.as_str()) || n.chars().all(|c| c.is_ascii_digit())
}

/// Maximal runs of non-stopword tokens, in order of appearance, deduplicated
/// case-insensitively.
pub fn extract_entities(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for clause in CLAUSE_SPLIT.split(text) {
        let mut run: Vec<&str> = Vec::new();
        let tokens: Vec<&str> = clause.split_whitespace().collect();
        for (i, tok) in tokens.iter().enumerate() {
            if !is_stop(tok) {
                run.push(tok);
            }
            let end = i + 1 == tokens.len() || is_stop(tok);
            if end && !run.is_empty() {
                let phrase = run
                    .iter()
                    .map(|t| {
                        let t = t.trim_matches(|c: char| c == '\'' || c == '-');
                        t.strip_suffix("'s").unwrap_or(t)
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                if seen.insert(phrase.to_lowercase()) {
                    out.push(phrase);
                }
                run.clear();
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReformulationConfig {
    pub markers: Vec<String>,
    /// Number of most recent turns considered.
    pub window: usize,
}

impl Default for ReformulationConfig {
    fn default() -> Self {
        Self {
            markers: DEFAULT_MARKERS.iter().map(|s| s.to_string()).collect(),
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReformulationMethod {
    Unchanged,
    Llm,
    Fallback,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reformulation {
    pub query: String,
    pub ambiguous: bool,
    /// Antecedent candidates from the deciding turn.
    pub candidates: Vec<String>,
    pub method: ReformulationMethod,
}

impl Reformulation {
    fn unchanged(question: &str) -> Self {
        Self {
            query: question.to_string(),
            ambiguous: false,
            candidates: Vec::new(),
            method: ReformulationMethod::Unchanged,
        }
    }
}

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{L}\p{N}']+").expect("valid regex"));

/// First anaphoric marker in `question`: (byte range, lowercased marker).
fn find_marker(question: &str, markers: &[String]) -> Option<(std::ops::Range<usize>, String)> {
    WORD.find_iter(question).find_map(|m| {
        let w = m.as_str().to_lowercase();
        markers.iter().any(|k| *k == w).then(|| (m.range(), w))
    })
}

/// Replaces the first marker with `entity`. Possessives get "'s"; "there"
/// is usually existential, so the entity is appended as context instead.
pub fn substitute_entity(question: &str, entity: &str) -> String {
    let markers: Vec<String> = DEFAULT_MARKERS.iter().map(|s| s.to_string()).collect();
    let Some((range, marker)) = find_marker(question, &markers) else {
        return question.to_string();
    };
    let replacement = match marker.as_str() {
        "its" | "their" => format!("{entity}'s"),
        "there" => {
            let trimmed = question.trim_end();
            let (body, end) = match trimmed.char_indices().last() {
                Some((i, c)) if matches!(c, '?' | '.' | '!') => (&trimmed[..i], &trimmed[i..]),
                _ => (trimmed, ""),
            };
            return format!("{body} (regarding {entity}){end}");
        }
        _ => entity.to_string(),
    };
    format!("{}{}{}", &question[..range.start], replacement, &question[range.end..])
}

/// User questions in the window, most recent first, each in its resolved
/// form when the next assistant turn recorded one.
fn prior_questions<'a>(window: &'a [ConversationTurn]) -> Vec<&'a str> {
    let mut out = Vec::new();
    for (i, turn) in window.iter().enumerate().rev() {
        if turn.role != Role::User {
            continue;
        }
        let resolved = window
            .get(i + 1)
            .filter(|t| t.role == Role::Assistant)
            .and_then(|t| t.reformulated_query.as_deref());
        out.push(resolved.unwrap_or(&turn.text));
    }
    out
}

/// Rewrites `question` into a standalone query using `history`.
pub fn reformulate_query(
    history: &[ConversationTurn],
    question: &str,
    llm: &dyn LlmProvider,
    config: &ReformulationConfig,
) -> Reformulation {
    let question = question.trim();
    if history.is_empty() || find_marker(question, &config.markers).is_none() {
        return Reformulation::unchanged(question);
    }
    let window = &history[history.len().saturating_sub(config.window)..];
    let in_question: HashSet<String> = extract_entities(question).iter().map(|e| e.to_lowercase()).collect();
    let candidates = prior_questions(window)
        .into_iter()
        .map(|text| {
            extract_entities(text)
                .into_iter()
                .filter(|e| !in_question.contains(&e.to_lowercase()))
                .collect::<Vec<_>>()
        })
        .find(|c| !c.is_empty());
    let candidates = candidates.unwrap_or_default();
    if candidates.len() >= 2 {
        return Reformulation {
            query: question.to_string(),
            ambiguous: true,
            candidates,
            method: ReformulationMethod::Ambiguous,
        };
    }
    let entity = candidates.first().cloned();
    let prompt = ReformulationPrompt {
        system_prompt: REFORMULATE_PROMPT.trim_end().to_string(),
        history: window.iter().map(|t| (t.role, t.text.clone())).collect(),
        question: question.to_string(),
        entity_hint: entity.clone(),
    };
    let fallback = || match &entity {
        Some(e) => substitute_entity(question, e),
        None => question.to_string(),
    };
    let (query, method) = match llm.reformulate(&prompt) {
        Ok(q) if !q.trim().is_empty() => (q.trim().to_string(), ReformulationMethod::Llm),
        Ok(_) => {
            tracing::warn!("empty reformulation from provider, using heuristic rewrite");
            (fallback(), ReformulationMethod::Fallback)
        }
        Err(e) => {
            tracing::warn!(error = %e, "reformulation provider failed, using heuristic rewrite");
            (fallback(), ReformulationMethod::Fallback)
        }
    };
    Reformulation {
        query,
        ambiguous: false,
        candidates,
        method,
    }
}

/// Clarification question for an ambiguous follow-up.
pub fn clarification_text(candidates: &[String]) -> String {
    let options = match candidates {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    };
    format!("Your question could refer to more than one topic. Do you mean {options}?")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrate::llm::{ScriptedLlm, TemplateLlm};

    fn dialogue(user: &[&str]) -> Vec<ConversationTurn> {
        let mut turns = Vec::new();
        for (i, text) in user.iter().enumerate() {
            turns.push(ConversationTurn::new(2 * i as u64 + 1, Role::User, *text));
            turns.push(ConversationTurn::new(2 * i as u64 + 2, Role::Assistant, "Some answer about opioids [1]."));
        }
        turns
    }

    #[test]
    fn entity_extraction() {
        assert_eq!(extract_entities("What is fentanyl?"), ["fentanyl"]);
        assert_eq!(extract_entities("What are the health effects of fentanyl?"), ["fentanyl"]);
        assert_eq!(
            extract_entities("What is the difference between prescription opioids and heroin?"),
            ["prescription opioids", "heroin"]
        );
        assert_eq!(extract_entities("Is cocaine's effect, in short, strong?"), ["cocaine"]);
        assert!(extract_entities("What does it do?").is_empty());
    }

    #[test]
    fn no_history_or_no_marker_is_unchanged() {
        let r = reformulate_query(&[], "What is fentanyl?", &TemplateLlm, &ReformulationConfig::default());
        assert_eq!(r, Reformulation::unchanged("What is fentanyl?"));
        let h = dialogue(&["What is fentanyl?"]);
        let r = reformulate_query(&h, "What is heroin?", &TemplateLlm, &ReformulationConfig::default());
        assert_eq!(r.method, ReformulationMethod::Unchanged);
    }

    #[test]
    fn fallback_substitutes_entity() {
        let h = dialogue(&["What is fentanyl?"]);
        let r = reformulate_query(
            &h,
            "How does it compare to heroin?",
            &ScriptedLlm::unavailable(),
            &ReformulationConfig::default(),
        );
        assert_eq!(r.query, "How does fentanyl compare to heroin?");
        assert_eq!(r.method, ReformulationMethod::Fallback);
    }

    #[test]
    fn llm_rewrite_is_used() {
        let h = dialogue(&["What is fentanyl?"]);
        let llm = ScriptedLlm::new(vec![Ok("How do the health effects of fentanyl compare to heroin?".into())], vec![]);
        let r = reformulate_query(&h, "How does it compare to heroin?", &llm, &ReformulationConfig::default());
        assert_eq!(r.query, "How do the health effects of fentanyl compare to heroin?");
        assert_eq!(r.method, ReformulationMethod::Llm);
    }

    #[test]
    fn two_entities_in_one_turn_is_ambiguous() {
        let h = dialogue(&["What is the difference between prescription opioids and heroin?"]);
        let q = "How common is its use among adolescents?";
        let r = reformulate_query(&h, q, &TemplateLlm, &ReformulationConfig::default());
        assert!(r.ambiguous);
        assert_eq!(r.query, q);
        assert_eq!(
            clarification_text(&r.candidates),
            "Your question could refer to more than one topic. Do you mean prescription opioids or heroin?"
        );
    }

    #[test]
    fn resolved_queries_chain() {
        let mut h = dialogue(&["Tell me about fentanyl", "Is it addictive?"]);
        h[3].reformulated_query = Some("Is fentanyl addictive?".into());
        let r = reformulate_query(&h, "How is it treated?", &TemplateLlm, &ReformulationConfig::default());
        assert_eq!(r.query, "How is fentanyl treated?");
    }

    #[test]
    fn window_limits_lookback() {
        let h = dialogue(&["What is fentanyl?", "Thanks", "Thanks"]);
        let narrow = ReformulationConfig {
            window: 4,
            ..Default::default()
        };
        let r = reformulate_query(&h, "Is it bad?", &TemplateLlm, &narrow);
        assert_eq!(r.query, "Is it bad?");
        assert!(r.candidates.is_empty());
        let r = reformulate_query(&h, "Is it bad?", &TemplateLlm, &ReformulationConfig::default());
        assert_eq!(r.query, "Is fentanyl bad?");
    }

    #[test]
    fn substitution_forms() {
        assert_eq!(substitute_entity("What are its risks?", "heroin"), "What are heroin's risks?");
        assert_eq!(substitute_entity("Is there a cure?", "heroin"), "Is there a cure (regarding heroin)?");
        assert_eq!(substitute_entity("It is legal?", "kratom"), "kratom is legal?");
        assert_eq!(substitute_entity("no marker", "x"), "no marker");
    }
}
