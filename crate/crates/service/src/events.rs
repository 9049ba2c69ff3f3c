use axum::response::sse::Event as SseEvent;
use equicity::badges::PublicBadges;
use equicity::evaluation::ScoreVector;
use serde::{Deserialize, Serialize};

/// One entry of a game's append-only event log. Ids start at 1 and are
/// consecutive per game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    DecisionReceived { round: usize, count: usize },
    RoundStarted { round: usize },
    RoundComplete { round: usize, scores: ScoreVector, badges: PublicBadges },
    RoundFailed { round: usize, code: String, message: String },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::DecisionReceived { .. } => "DECISION_RECEIVED",
            EventKind::RoundStarted { .. } => "ROUND_STARTED",
            EventKind::RoundComplete { .. } => "ROUND_COMPLETE",
            EventKind::RoundFailed { .. } => "ROUND_FAILED",
        }
    }
}

impl Event {
    pub(crate) fn to_sse(&self) -> SseEvent {
        let base = SseEvent::default().id(self.id.to_string()).event(self.kind.name());
        match serde_json::to_string(self) {
            Ok(json) => base.data(json),
            Err(e) => base.comment(format!("unencodable event: {e}")),
        }
    }
}

/// Sent to a subscriber that fell too far behind; it should reconnect with
/// the given id.
pub(crate) fn resync(last_delivered: u64) -> SseEvent {
    SseEvent::default()
        .event("RESYNC")
        .data(format!("{{\"lastEventId\":{last_delivered}}}"))
}
