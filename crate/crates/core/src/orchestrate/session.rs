use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{RetrievedEvidence, SourceWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

/// Why an assistant turn carries no answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnFailure {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub turn_id: u64,
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<RetrievedEvidence>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cited_markers: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reformulated_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<SourceWeights>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clarification: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<TurnFailure>,
}

impl ConversationTurn {
    pub fn new(turn_id: u64, role: Role, text: impl Into<String>) -> Self {
        Self {
            turn_id,
            role,
            text: text.into(),
            timestamp: Utc::now(),
            evidence: Vec::new(),
            cited_markers: Vec::new(),
            reformulated_query: None,
            reasoning_trace: None,
            weights: None,
            degraded: false,
            clarification: false,
            failure: None,
        }
    }
}

/// One conversation. Turns alternate user/assistant starting with user, and
/// turn ids strictly increase from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub turns: Vec<ConversationTurn>,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            created_at: Utc::now(),
            turns: Vec::new(),
        }
    }

    pub fn next_turn_id(&self) -> u64 {
        self.turns.last().map_or(1, |t| t.turn_id + 1)
    }

    /// Role the next turn must have.
    pub fn expected_role(&self) -> Role {
        match self.turns.last() {
            Some(t) if t.role == Role::User => Role::Assistant,
            _ => Role::User,
        }
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.turns.last().map_or(self.created_at, |t| t.timestamp.max(self.created_at))
    }

    /// Checks alternation and id monotonicity.
    pub fn validate(&self) -> Result<(), String> {
        let mut prev_id = 0;
        for (i, t) in self.turns.iter().enumerate() {
            if t.turn_id <= prev_id {
                return Err(format!("turn {} does not increase on {prev_id}", t.turn_id));
            }
            let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if t.role != want {
                return Err(format!("turn {} has role {:?}, expected {want:?}", t.turn_id, t.role));
            }
            prev_id = t.turn_id;
        }
        Ok(())
    }

    /// Appends a turn with the next id. Panics if the role breaks alternation.
    pub fn push(&mut self, mut turn: ConversationTurn) -> &ConversationTurn {
        assert_eq!(turn.role, self.expected_role(), "turn roles must alternate");
        turn.turn_id = self.next_turn_id();
        self.turns.push(turn);
        self.turns.last().expect("just pushed")
    }

    /// Text of the first user turn, for listings.
    pub fn title(&self) -> Option<&str> {
        self.turns.iter().find(|t| t.role == Role::User).map(|t| t.text.as_str())
    }
}
