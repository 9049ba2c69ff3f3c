//! Versioned JSON state files.

use std::io::Write;
use std::path::Path;

use super::{EngineError, GameState, Phase};

pub const STATE_FORMAT: &str = "equicity-state";
pub const STATE_VERSION: u32 = 1;

/// Writes the state through a temporary file so a crash never leaves a
/// half-written state behind.
pub fn save_state(state: &GameState, path: &Path) -> Result<(), EngineError> {
    let io = |e: std::io::Error| EngineError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    serde_json::to_writer(&mut tmp, state).map_err(|e| EngineError::Io(e.to_string()))?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<GameState, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
    parse_state(&text)
}

pub(crate) fn parse_state(text: &str) -> Result<GameState, EngineError> {
    let header: serde_json::Value =
        serde_json::from_str(text).map_err(|e| EngineError::CorruptState(format!("not valid JSON: {e}")))?;
    match (header.get("format").and_then(|v| v.as_str()), header.get("version").and_then(|v| v.as_u64())) {
        (Some(STATE_FORMAT), Some(v)) if v == STATE_VERSION as u64 => {}
        (Some(STATE_FORMAT), v) => return Err(EngineError::CorruptState(format!("unsupported version {v:?}"))),
        _ => return Err(EngineError::CorruptState("missing state header".into())),
    }
    let state: GameState = serde_json::from_value(header).map_err(|e| EngineError::CorruptState(e.to_string()))?;
    check(&state)?;
    Ok(state)
}

fn check(state: &GameState) -> Result<(), EngineError> {
    let corrupt = |msg: String| Err(EngineError::CorruptState(msg));
    let m = state.config.actors.len();
    if state.pending.len() != m {
        return corrupt(format!("{} pending slots for {m} actors", state.pending.len()));
    }
    if state.history.len() != state.round {
        return corrupt(format!("round {} with {} records", state.round, state.history.len()));
    }
    if let Some(r) = state.history.iter().enumerate().find(|(t, r)| r.round != *t) {
        return corrupt(format!("record {} is stamped round {}", r.0, r.1.round));
    }
    let all_in = state.pending.iter().all(Option::is_some);
    let consistent = match state.phase {
        Phase::Collecting => true,
        Phase::Processing => all_in,
        Phase::Reporting => state.pending.iter().all(Option::is_none) && state.round > 0,
    };
    if !consistent {
        return corrupt(format!("phase {} does not match the pending decisions", state.phase));
    }
    Ok(())
}
