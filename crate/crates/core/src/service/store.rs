use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::puzzle::Puzzle;

/// Opaque 32-hex-character challenge token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub String);

impl Token {
    /// 128 bits from the thread-local CSPRNG.
    pub fn generate() -> Self {
        let mut bytes = [0u8; 16];
        rand::Rng::fill(&mut rand::rng(), &mut bytes);
        Token(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Token {
    fn from(s: &str) -> Self {
        Token(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChallengeState {
    Pending,
    Solved,
    Failed,
    Expired,
    Consumed,
}

impl ChallengeState {
    /// Allowed moves: pending to solved, failed or expired; solved to
    /// consumed or (when the verify window lapses) expired.
    pub fn can_transition_to(self, next: ChallengeState) -> bool {
        use ChallengeState::*;
        matches!(
            (self, next),
            (Pending, Solved) | (Pending, Failed) | (Pending, Expired) | (Solved, Consumed) | (Solved, Expired)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ChallengeState::Failed | ChallengeState::Expired | ChallengeState::Consumed
        )
    }
}

#[derive(Debug, Clone)]
pub struct Challenge {
    pub token: Token,
    pub puzzle: Puzzle,
    state: ChallengeState,
    pub site_key: String,
    pub client_fingerprint: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub solved_at: Option<DateTime<Utc>>,
    pub solve_duration_ms: Option<u64>,
    /// Failures in the client's rolling window when this challenge was issued.
    pub failure_count_for_client: usize,
}

impl Challenge {
    pub fn new(
        token: Token,
        puzzle: Puzzle,
        site_key: String,
        client_fingerprint: String,
        issued_at: DateTime<Utc>,
        expires_at: DateTime<Utc>,
        failure_count_for_client: usize,
    ) -> Self {
        Challenge {
            token,
            puzzle,
            state: ChallengeState::Pending,
            site_key,
            client_fingerprint,
            issued_at,
            expires_at,
            solved_at: None,
            solve_duration_ms: None,
            failure_count_for_client,
        }
    }

    pub fn state(&self) -> ChallengeState {
        self.state
    }

    /// Moves to `next` if the state machine allows it.
    pub fn transition(&mut self, next: ChallengeState) -> bool {
        if self.state.can_transition_to(next) {
            self.state = next;
            true
        } else {
            false
        }
    }
}

/// Storage for live challenges. Each challenge is mutated under its own
/// lock so that every state transition is atomic.
pub trait ChallengeStore: Send + Sync {
    fn insert(&self, challenge: Challenge);

    /// Runs `f` with exclusive access to the challenge. Returns false if the
    /// token is unknown.
    fn update(&self, token: &Token, f: &mut dyn FnMut(&mut Challenge)) -> bool;

    fn for_each(&self, f: &mut dyn FnMut(&mut Challenge));

    fn retain(&self, keep: &mut dyn FnMut(&Challenge) -> bool);

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    challenges: RwLock<HashMap<Token, Arc<Mutex<Challenge>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn snapshot(&self) -> Vec<Arc<Mutex<Challenge>>> {
        self.challenges.read().values().cloned().collect()
    }
}

impl ChallengeStore for MemoryStore {
    fn insert(&self, challenge: Challenge) {
        self.challenges
            .write()
            .insert(challenge.token.clone(), Arc::new(Mutex::new(challenge)));
    }

    fn update(&self, token: &Token, f: &mut dyn FnMut(&mut Challenge)) -> bool {
        let entry = self.challenges.read().get(token).cloned();
        match entry {
            Some(cell) => {
                f(&mut cell.lock());
                true
            }
            None => false,
        }
    }

    fn for_each(&self, f: &mut dyn FnMut(&mut Challenge)) {
        for cell in self.snapshot() {
            f(&mut cell.lock());
        }
    }

    fn retain(&self, keep: &mut dyn FnMut(&Challenge) -> bool) {
        self.challenges.write().retain(|_, cell| keep(&cell.lock()));
    }

    fn len(&self) -> usize {
        self.challenges.read().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChallengeState::*;

    #[test]
    fn token_shape() {
        let a = Token::generate();
        let b = Token::generate();
        assert_eq!(a.as_str().len(), 32);
        assert!(a.as_str().chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(a, b);
    }

    #[test]
    fn transition_table() {
        let all = [Pending, Solved, Failed, Expired, Consumed];
        let mut allowed = Vec::new();
        for from in all {
            for to in all {
                if from.can_transition_to(to) {
                    allowed.push((from, to));
                }
            }
        }
        assert_eq!(
            allowed,
            vec![
                (Pending, Solved),
                (Pending, Failed),
                (Pending, Expired),
                (Solved, Expired),
                (Solved, Consumed)
            ]
        );
    }
}
