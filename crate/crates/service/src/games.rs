use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use equicity::engine::{load_state, save_state, Clock, Game, GameConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::error::ApiError;
use crate::events::{Event, EventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Master,
    Actor(usize),
}

/// Static credentials issued when a game is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tokens {
    pub master: String,
    /// One per actor, in config order.
    pub actors: Vec<String>,
}

impl Tokens {
    fn issue(actors: usize) -> Self {
        Tokens {
            master: new_secret(),
            actors: (0..actors).map(|_| new_secret()).collect(),
        }
    }

    pub fn role(&self, token: &str) -> Option<Role> {
        if token == self.master {
            return Some(Role::Master);
        }
        self.actors.iter().position(|t| t == token).map(Role::Actor)
    }
}

fn new_secret() -> String {
    hex::encode(rand::rng().random::<[u8; 16]>())
}

pub(crate) struct Slot {
    pub game: Game,
    pub log: Vec<Event>,
}

pub(crate) struct GameHandle {
    pub id: String,
    pub tokens: Tokens,
    slot: Mutex<Slot>,
    pub events: broadcast::Sender<Event>,
    state_path: Option<PathBuf>,
}

impl GameHandle {
    pub fn lock(&self) -> MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends to the log and fans out. Call with the slot locked so the log
    /// order and the broadcast order agree.
    pub fn emit(&self, slot: &mut Slot, kind: EventKind) {
        let event = Event {
            id: slot.log.len() as u64 + 1,
            kind,
        };
        slot.log.push(event.clone());
        // No subscribers is fine; the log keeps the event for replay.
        let _ = self.events.send(event);
    }

    pub fn persist(&self, slot: &Slot) -> Result<(), ApiError> {
        match &self.state_path {
            Some(path) => save_state(slot.game.state(), path).map_err(ApiError::from),
            None => Ok(()),
        }
    }
}

pub(crate) struct Registry {
    games: RwLock<HashMap<String, Arc<GameHandle>>>,
    state_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    buffer: usize,
}

impl Registry {
    pub fn new(state_dir: Option<PathBuf>, clock: Arc<dyn Clock>, buffer: usize) -> Self {
        Registry {
            games: RwLock::new(HashMap::new()),
            state_dir,
            clock,
            buffer: buffer.max(1),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<GameHandle>> {
        self.games.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    fn insert(&self, id: String, tokens: Tokens, game: Game) -> Arc<GameHandle> {
        let (events, _) = broadcast::channel(self.buffer);
        let handle = Arc::new(GameHandle {
            state_path: self.state_dir.as_ref().map(|d| d.join(format!("{id}.json"))),
            id: id.clone(),
            tokens,
            slot: Mutex::new(Slot { game, log: Vec::new() }),
            events,
        });
        self.games.write().unwrap_or_else(|p| p.into_inner()).insert(id, handle.clone());
        handle
    }

    pub fn create(&self, config: GameConfig) -> Result<Arc<GameHandle>, ApiError> {
        let m = config.actors.len();
        let game = Game::create(config, self.clock.clone())?;
        let id = new_secret()[..12].to_string();
        let tokens = Tokens::issue(m);
        if let Some(dir) = &self.state_dir {
            let text = serde_json::to_vec(&tokens).map_err(|e| ApiError::internal(e.to_string()))?;
            std::fs::write(dir.join(format!("{id}.tokens.json")), text)
                .map_err(|e| ApiError::internal(format!("writing tokens: {e}")))?;
        }
        let handle = self.insert(id, tokens, game);
        {
            let mut slot = handle.lock();
            handle.emit(&mut slot, EventKind::RoundStarted { round: 0 });
            handle.persist(&slot)?;
        }
        Ok(handle)
    }

    /// Reopens every game saved in the state directory. Event logs are not
    /// persisted, so reopened games start with an empty log.
    pub fn load_saved(&self) -> Result<usize, String> {
        let Some(dir) = &self.state_dir else { return Ok(0) };
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut count = 0;
        for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".tokens.json")) else {
                continue;
            };
            let id = id.to_string();
            let tokens: Tokens = read_json(&path)?;
            let state = load_state(&dir.join(format!("{id}.json"))).map_err(|e| e.to_string())?;
            let game = Game::from_state(state, self.clock.clone()).map_err(|e| e.to_string())?;
            self.insert(id, tokens, game);
            count += 1;
        }
        Ok(count)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    let text = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", path.display()))
}
