//! One-shot challenge protocol.
//!
//! A client asks for a challenge and gets a token plus `n` image URLs. It
//! answers once; a pass leaves the token in `solved`, where the relying
//! party can redeem it exactly once through [`ChallengeService::verify_token`].
//! A failed answer counts against the client and the replacement challenge
//! is drawn from an escalated spec.

pub mod api;
mod clock;
mod limits;
mod store;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pool::{transform, PoolError, SharedPool};
use crate::puzzle::{escalate_by, generate_puzzle, verify_answer, Polarity, PuzzleError, PuzzleSpec};

pub use api::{
    image_url, AnswerOutcome, AnswerRequest, AnswerStatus, ChallengeDescriptor, ChallengeRequest, ImageLocator,
    ServiceStats, VerifyReason, VerifyRequest, VerifyResult,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use limits::{FailureWindow, FixedWindowLimiter};
pub use store::{Challenge, ChallengeState, ChallengeStore, MemoryStore, Token};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("rate limited; retry in {retry_after_secs}s")]
    RateLimited { retry_after_secs: u64 },
    #[error("cannot build a puzzle from the current pool: {0}")]
    PoolExhausted(#[source] PuzzleError),
    #[error("malformed selection: {0}")]
    MalformedSelection(#[source] PuzzleError),
    #[error("shared secret mismatch")]
    Unauthorized,
    #[error("not found")]
    NotFound,
    #[error("image unavailable: {0}")]
    Image(#[from] PoolError),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Level-0 puzzle shape. Its polarity is the default one.
    pub base_spec: PuzzleSpec,
    /// Fraction of challenges issued with the reversed polarity.
    pub polarity_mix: f64,
    pub pending_ttl: TimeDelta,
    /// How long a solved token stays redeemable.
    pub solved_ttl: TimeDelta,
    /// Challenge creations per client per `rate_window`; `None` disables.
    pub rate_limit: Option<u32>,
    pub rate_window: TimeDelta,
    pub escalation: bool,
    pub escalation_window: TimeDelta,
    /// Terminal challenges are dropped this long after they expire.
    pub retention: TimeDelta,
    pub secret: String,
    /// Seed for puzzle generation; `None` seeds from the OS.
    pub seed: Option<u64>,
}

impl ServiceConfig {
    pub fn new(secret: impl Into<String>) -> Self {
        ServiceConfig {
            base_spec: PuzzleSpec::default(),
            polarity_mix: 0.25,
            pending_ttl: TimeDelta::seconds(120),
            solved_ttl: TimeDelta::seconds(120),
            rate_limit: Some(100),
            rate_window: TimeDelta::minutes(1),
            escalation: true,
            escalation_window: TimeDelta::minutes(10),
            retention: TimeDelta::minutes(10),
            secret: secret.into(),
            seed: None,
        }
    }

    /// Configuration for measuring a fixed spec: no rate limit, no
    /// escalation, seeded generation.
    pub fn measurement(spec: PuzzleSpec, secret: impl Into<String>, seed: u64) -> Self {
        ServiceConfig {
            base_spec: spec,
            rate_limit: None,
            escalation: false,
            seed: Some(seed),
            ..ServiceConfig::new(secret)
        }
    }
}

/// Hex SHA-256 of the client address and site key.
pub fn client_fingerprint(client_addr: &str, site_key: &str) -> String {
    let mut h = Sha256::new();
    h.update(client_addr.as_bytes());
    h.update([0u8]);
    h.update(site_key.as_bytes());
    hex::encode(h.finalize())
}

fn secrets_match(given: &str, expected: &str) -> bool {
    // Compare digests so timing leaks neither content nor length.
    let a = Sha256::digest(given.as_bytes());
    let b = Sha256::digest(expected.as_bytes());
    a.iter().zip(b.iter()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Default)]
struct Telemetry {
    issued: AtomicU64,
    passes: AtomicU64,
    fails: AtomicU64,
    solve_ms_total: AtomicU64,
}

pub struct ChallengeService<S: ChallengeStore = MemoryStore> {
    config: ServiceConfig,
    pool: Arc<SharedPool>,
    store: S,
    clock: Arc<dyn Clock>,
    rng: Mutex<ChaCha8Rng>,
    limiter: Option<FixedWindowLimiter>,
    failures: FailureWindow,
    telemetry: Telemetry,
}

impl ChallengeService<MemoryStore> {
    pub fn new(config: ServiceConfig, pool: Arc<SharedPool>) -> Self {
        Self::with_parts(config, pool, MemoryStore::new(), Arc::new(SystemClock))
    }

    pub fn with_clock(config: ServiceConfig, pool: Arc<SharedPool>, clock: Arc<dyn Clock>) -> Self {
        Self::with_parts(config, pool, MemoryStore::new(), clock)
    }
}

enum Submitted {
    Pass { fingerprint: String, duration_ms: u64 },
    Fail { fingerprint: String, site_key: String },
    Expired,
    Unknown,
    Malformed(PuzzleError),
}

impl<S: ChallengeStore> ChallengeService<S> {
    pub fn with_parts(config: ServiceConfig, pool: Arc<SharedPool>, store: S, clock: Arc<dyn Clock>) -> Self {
        let rng = match config.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        ChallengeService {
            limiter: config
                .rate_limit
                .map(|limit| FixedWindowLimiter::new(limit, config.rate_window)),
            failures: FailureWindow::new(config.escalation_window),
            config,
            pool,
            store,
            clock,
            rng: Mutex::new(rng),
            telemetry: Telemetry::default(),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn pool(&self) -> &Arc<SharedPool> {
        &self.pool
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Spec the next challenge for this client would be drawn from, before
    /// polarity is chosen.
    pub fn spec_for_client(&self, client_fingerprint: &str) -> PuzzleSpec {
        if !self.config.escalation {
            return self.config.base_spec;
        }
        let failures = self.failures.recent(client_fingerprint, self.clock.now());
        escalate_by(&self.config.base_spec, failures)
    }

    pub fn create_challenge(
        &self,
        site_key: &str,
        client_fingerprint: &str,
    ) -> Result<ChallengeDescriptor, ServiceError> {
        let now = self.clock.now();
        if let Some(limiter) = &self.limiter {
            limiter
                .check(client_fingerprint, now)
                .map_err(|wait| ServiceError::RateLimited {
                    retry_after_secs: wait.num_seconds().max(1) as u64,
                })?;
        }

        let failures = if self.config.escalation {
            self.failures.recent(client_fingerprint, now)
        } else {
            0
        };
        let mut spec = escalate_by(&self.config.base_spec, failures);
        let pool = self.pool.snapshot();
        let puzzle = {
            let mut rng = self.rng.lock();
            if rng.random_bool(self.config.polarity_mix.clamp(0.0, 1.0)) {
                spec = spec.with_polarity(match spec.polarity {
                    Polarity::FindDispleasing => Polarity::FindPleasing,
                    Polarity::FindPleasing => Polarity::FindDispleasing,
                });
            }
            generate_puzzle(&spec, &pool, &mut *rng).map_err(ServiceError::PoolExhausted)?
        };

        let token = Token::generate();
        let descriptor = ChallengeDescriptor {
            token: token.0.clone(),
            n: puzzle.spec.n,
            instruction: puzzle.instruction.clone(),
            images: (0..puzzle.spec.n)
                .map(|slot| ImageLocator {
                    slot,
                    url: image_url(token.as_str(), slot),
                })
                .collect(),
            expires_at: now + self.config.pending_ttl,
        };
        self.store.insert(Challenge::new(
            token,
            puzzle,
            site_key.to_owned(),
            client_fingerprint.to_owned(),
            now,
            now + self.config.pending_ttl,
            failures,
        ));
        self.telemetry.issued.fetch_add(1, Ordering::Relaxed);
        Ok(descriptor)
    }

    /// Evaluates the one and only answer a challenge accepts.
    pub fn submit_answer(&self, token: &str, selection: &[usize]) -> Result<AnswerOutcome, ServiceError> {
        let selection: BTreeSet<usize> = selection.iter().copied().collect();
        let now = self.clock.now();
        let mut result = Submitted::Unknown;
        self.store.update(&Token::from(token), &mut |c| {
            result = match c.state() {
                ChallengeState::Pending if now >= c.expires_at => {
                    c.transition(ChallengeState::Expired);
                    Submitted::Expired
                }
                ChallengeState::Pending => match verify_answer(&c.puzzle, &selection) {
                    Err(e) => Submitted::Malformed(e),
                    Ok(true) => {
                        let duration_ms = (now - c.issued_at).num_milliseconds().max(0) as u64;
                        c.transition(ChallengeState::Solved);
                        c.solved_at = Some(now);
                        c.solve_duration_ms = Some(duration_ms);
                        Submitted::Pass {
                            fingerprint: c.client_fingerprint.clone(),
                            duration_ms,
                        }
                    }
                    Ok(false) => {
                        c.transition(ChallengeState::Failed);
                        Submitted::Fail {
                            fingerprint: c.client_fingerprint.clone(),
                            site_key: c.site_key.clone(),
                        }
                    }
                },
                ChallengeState::Expired => Submitted::Expired,
                _ => Submitted::Unknown,
            };
        });

        let outcome = |status| AnswerOutcome {
            status,
            next_challenge: None,
        };
        match result {
            Submitted::Malformed(e) => Err(ServiceError::MalformedSelection(e)),
            Submitted::Unknown => Ok(outcome(AnswerStatus::Unknown)),
            Submitted::Expired => Ok(outcome(AnswerStatus::Expired)),
            Submitted::Pass {
                fingerprint,
                duration_ms,
            } => {
                self.telemetry.passes.fetch_add(1, Ordering::Relaxed);
                self.telemetry.solve_ms_total.fetch_add(duration_ms, Ordering::Relaxed);
                self.failures.reset(&fingerprint);
                Ok(outcome(AnswerStatus::Pass))
            }
            Submitted::Fail { fingerprint, site_key } => {
                self.telemetry.fails.fetch_add(1, Ordering::Relaxed);
                if self.config.escalation {
                    self.failures.record(&fingerprint, now);
                }
                // A rate-limited or exhausted service still reports the failure.
                let next = self.create_challenge(&site_key, &fingerprint).ok();
                Ok(AnswerOutcome {
                    status: AnswerStatus::Fail,
                    next_challenge: next,
                })
            }
        }
    }

    /// Relying-party redemption. Succeeds at most once per solved token.
    pub fn verify_token(&self, shared_secret: &str, token: &str) -> Result<VerifyResult, ServiceError> {
        if !secrets_match(shared_secret, &self.config.secret) {
            return Err(ServiceError::Unauthorized);
        }
        let now = self.clock.now();
        let solved_ttl = self.config.solved_ttl;
        let mut result = VerifyResult::rejected(VerifyReason::UnknownToken);
        self.store.update(&Token::from(token), &mut |c| {
            result = match c.state() {
                ChallengeState::Solved => {
                    let solved_at = c.solved_at.expect("solved challenge records solved_at");
                    if now < solved_at + solved_ttl {
                        c.transition(ChallengeState::Consumed);
                        VerifyResult::ok(solved_at)
                    } else {
                        c.transition(ChallengeState::Expired);
                        VerifyResult::rejected(VerifyReason::Expired)
                    }
                }
                ChallengeState::Consumed => VerifyResult::rejected(VerifyReason::AlreadyConsumed),
                ChallengeState::Expired => VerifyResult::rejected(VerifyReason::Expired),
                ChallengeState::Pending | ChallengeState::Failed => VerifyResult::rejected(VerifyReason::NotSolved),
            };
        });
        Ok(result)
    }

    /// Expires every pending challenge past its deadline and every solved
    /// one past its redemption window. Returns how many changed state.
    /// Terminal challenges older than the retention period are dropped.
    pub fn sweep_expired(&self, now: DateTime<Utc>) -> usize {
        let solved_ttl = self.config.solved_ttl;
        let mut expired = 0;
        self.store.for_each(&mut |c| {
            let due = match c.state() {
                ChallengeState::Pending => c.expires_at <= now,
                ChallengeState::Solved => c.solved_at.is_some_and(|t| t + solved_ttl <= now),
                _ => false,
            };
            if due && c.transition(ChallengeState::Expired) {
                expired += 1;
            }
        });
        let retention = self.config.retention;
        self.store
            .retain(&mut |c| !(c.state().is_terminal() && c.expires_at + retention <= now));
        if let Some(limiter) = &self.limiter {
            limiter.prune(now);
        }
        self.failures.prune(now);
        expired
    }

    /// Transformed PNG for one slot of a pending, unexpired challenge.
    pub fn image_png(&self, token: &str, slot: usize) -> Result<Vec<u8>, ServiceError> {
        let now = self.clock.now();
        let mut found = None;
        self.store.update(&Token::from(token), &mut |c| {
            if c.state() == ChallengeState::Pending && now < c.expires_at {
                found = c.puzzle.slots.get(slot).map(|s| (s.image.bytes_ref.clone(), s.seed));
            }
        });
        let (path, seed) = found.ok_or(ServiceError::NotFound)?;
        let raw = std::fs::read(&path).map_err(|source| PoolError::Io { path, source })?;
        Ok(transform(&raw, seed)?)
    }

    pub fn challenge_state(&self, token: &str) -> Option<ChallengeState> {
        let mut state = None;
        self.store.update(&Token::from(token), &mut |c| state = Some(c.state()));
        state
    }

    pub fn stats(&self) -> ServiceStats {
        let t = &self.telemetry;
        let passes = t.passes.load(Ordering::Relaxed);
        let answered = passes + t.fails.load(Ordering::Relaxed);
        ServiceStats {
            pool: self.pool.stats(),
            challenges_issued: t.issued.load(Ordering::Relaxed),
            pass_rate: if answered == 0 {
                0.0
            } else {
                passes as f64 / answered as f64
            },
            mean_solve_ms: if passes == 0 {
                0.0
            } else {
                t.solve_ms_total.load(Ordering::Relaxed) as f64 / passes as f64
            },
        }
    }
}
