//! Scripted attackers run against the challenge service.
//!
//! * random guess: click a uniformly random `k`-subset of slots;
//! * replay: click the same recorded slots on every fresh challenge, and
//!   re-present a token that was already solved and redeemed;
//! * catalogue: record every image shown over many puzzles and measure how
//!   much of the pool has been seen.
//!
//! Attacks talk to the service through [`CaptchaApi`], implemented in-process
//! by [`InProcessClient`] and over HTTP by the server crate.

mod catalogue;
mod table;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::puzzle::{random_guess_probability, PuzzleError, PuzzleSpec};
use crate::service::{
    AnswerOutcome, AnswerStatus, ChallengeDescriptor, ChallengeService, ChallengeStore, MemoryStore, ServiceError,
    VerifyResult,
};

pub use catalogue::{
    expected_coverage, run_catalogue, run_catalogue_repeats, synthetic_pool, CatalogueState, CatalogueSummary,
};
pub use table::{comparison_table, render_table, GuessEntry, TableRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("service unreachable: {0}")]
    Unreachable(String),
    /// The service answered but refused the request.
    #[error("service answered {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("service issued n={got}, expected n={expected}")]
    SpecMismatch { expected: usize, got: usize },
    #[error("selection {selection:?} does not fit an {n}-image challenge")]
    InvalidSelection { selection: Vec<usize>, n: usize },
    #[error("no challenge was solved within {0} attempts")]
    NoSolvedToken(usize),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
}

/// The three calls a bot can make.
pub trait CaptchaApi: Sync {
    fn create_challenge(&self) -> Result<ChallengeDescriptor, HarnessError>;
    fn submit_answer(&self, token: &str, selection: &[usize]) -> Result<AnswerOutcome, HarnessError>;
    /// Redeems a token the way a relying party would.
    fn verify_token(&self, token: &str) -> Result<VerifyResult, HarnessError>;
}

/// Calls a [`ChallengeService`] directly as one client.
pub struct InProcessClient<S: ChallengeStore = MemoryStore> {
    service: Arc<ChallengeService<S>>,
    site_key: String,
    fingerprint: String,
    secret: String,
}

impl<S: ChallengeStore> InProcessClient<S> {
    pub fn new(service: Arc<ChallengeService<S>>, fingerprint: impl Into<String>) -> Self {
        let secret = service.config().secret.clone();
        InProcessClient {
            service,
            site_key: "harness".into(),
            fingerprint: fingerprint.into(),
            secret,
        }
    }

    pub fn service(&self) -> &Arc<ChallengeService<S>> {
        &self.service
    }
}

impl<S: ChallengeStore> CaptchaApi for InProcessClient<S> {
    fn create_challenge(&self) -> Result<ChallengeDescriptor, HarnessError> {
        Ok(self.service.create_challenge(&self.site_key, &self.fingerprint)?)
    }

    fn submit_answer(&self, token: &str, selection: &[usize]) -> Result<AnswerOutcome, HarnessError> {
        Ok(self.service.submit_answer(token, selection)?)
    }

    fn verify_token(&self, token: &str) -> Result<VerifyResult, HarnessError> {
        Ok(self.service.verify_token(&self.secret, token)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attacker {
    Random,
    Replay,
    TokenReplay,
    Catalogue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attacker: Attacker,
    pub trials: u64,
    pub successes: u64,
    pub empirical_rate: f64,
    pub theoretical_rate: Option<f64>,
    /// `sqrt(rate * (1 - rate) / trials)` of the empirical rate.
    pub stderr: f64,
    #[serde(with = "duration_ms")]
    pub wall_time: Duration,
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)? / 1000.0))
    }
}

impl AttackReport {
    pub fn new(
        attacker: Attacker,
        trials: u64,
        successes: u64,
        theoretical_rate: Option<f64>,
        wall_time: Duration,
    ) -> Self {
        let empirical_rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let stderr = if trials == 0 {
            0.0
        } else {
            (empirical_rate * (1.0 - empirical_rate) / trials as f64).sqrt()
        };
        AttackReport {
            attacker,
            trials,
            successes,
            empirical_rate,
            theoretical_rate,
            stderr,
            wall_time,
        }
    }

    /// Combines reports from parallel workers. Counts add; wall time is the
    /// longest worker's.
    pub fn merge(&self, other: &AttackReport) -> AttackReport {
        AttackReport::new(
            self.attacker,
            self.trials + other.trials,
            self.successes + other.successes,
            self.theoretical_rate.or(other.theoretical_rate),
            self.wall_time.max(other.wall_time),
        )
    }

    /// Standard error of a proportion at the theoretical rate.
    pub fn theoretical_stderr(&self) -> Option<f64> {
        let p = self.theoretical_rate?;
        (self.trials > 0).then(|| (p * (1.0 - p) / self.trials as f64).sqrt())
    }

    /// Whether the empirical rate lies within `sigmas` theoretical standard
    /// errors of the theoretical rate. `None` without a theoretical rate.
    pub fn within_sigmas(&self, sigmas: f64) -> Option<bool> {
        let p = self.theoretical_rate?;
        let se = self.theoretical_stderr()?;
        Some((self.empirical_rate - p).abs() <= sigmas * se)
    }

    /// Copy with wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> AttackReport {
        AttackReport {
            wall_time: Duration::ZERO,
            ..self.clone()
        }
    }
}

fn check_shape(d: &ChallengeDescriptor, spec: &PuzzleSpec) -> Result<(), HarnessError> {
    if d.n != spec.n {
        return Err(HarnessError::SpecMismatch {
            expected: spec.n,
            got: d.n,
        });
    }
    Ok(())
}

fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, n, k).into_vec();
    s.sort_unstable();
    s
}

/// Requests `trials` challenges and answers each with a uniformly random
/// `k`-subset of slots. The service must be in a measurement configuration
/// (no escalation); otherwise the first escalated challenge surfaces as
/// [`HarnessError::SpecMismatch`].
pub fn run_random_guess<A: CaptchaApi + ?Sized, R: Rng + ?Sized>(
    api: &A,
    spec: &PuzzleSpec,
    trials: u64,
    rng: &mut R,
) -> Result<AttackReport, HarnessError> {
    let theoretical = random_guess_probability(spec)?.value();
    let start = Instant::now();
    let mut successes = 0;
    for _ in 0..trials {
        let d = api.create_challenge()?;
        check_shape(&d, spec)?;
        let guess = random_subset(rng, d.n, spec.k);
        if api.submit_answer(&d.token, &guess)?.status == AnswerStatus::Pass {
            successes += 1;
        }
    }
    Ok(AttackReport::new(
        Attacker::Random,
        trials,
        successes,
        Some(theoretical),
        start.elapsed(),
    ))
}

/// Worker `i` of a parallel run draws from ChaCha stream `i` of `seed`.
pub fn worker_rng(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// [`run_random_guess`] split over `workers` threads. With one worker the
/// result equals a sequential run driven by `worker_rng(seed, 0)`.
pub fn run_random_guess_parallel<A: CaptchaApi + ?Sized>(
    api: &A,
    spec: &PuzzleSpec,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<AttackReport, HarnessError> {
    let workers = workers.max(1) as u64;
    let start = Instant::now();
    let parts: Vec<Result<AttackReport, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let share = trials / workers + u64::from(w < trials % workers);
                s.spawn(move || run_random_guess(api, spec, share, &mut worker_rng(seed, w)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut merged: Option<AttackReport> = None;
    for part in parts {
        let part = part?;
        merged = Some(match merged {
            Some(m) => m.merge(&part),
            None => part,
        });
    }
    let mut report = merged.expect("at least one worker");
    report.wall_time = start.elapsed();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// The recorded clicks replayed on fresh challenges.
    pub fresh: AttackReport,
    /// A solved and redeemed token presented again, both to the answer
    /// endpoint and to the relying party.
    pub token_replay: AttackReport,
}

const SOLVE_ATTEMPTS: usize = 100_000;

/// Replays `fixed_selection` on `trials` fresh challenges, then takes one
/// token that was legitimately solved and redeemed and presents it again
/// `trials` times. A token-replay attempt counts as a success if either the
/// resubmission passes or the relying party accepts it.
pub fn run_replay<A: CaptchaApi + ?Sized, R: Rng + ?Sized>(
    api: &A,
    spec: &PuzzleSpec,
    trials: u64,
    fixed_selection: &[usize],
    rng: &mut R,
) -> Result<ReplayReport, HarnessError> {
    if fixed_selection.iter().any(|&i| i >= spec.n) {
        return Err(HarnessError::InvalidSelection {
            selection: fixed_selection.to_vec(),
            n: spec.n,
        });
    }
    let mut distinct = fixed_selection.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let theoretical = if distinct.len() == spec.k {
        random_guess_probability(spec)?.value()
    } else {
        0.0
    };

    let start = Instant::now();
    let mut successes = 0;
    let mut recorded: Option<(String, Vec<usize>)> = None;
    for _ in 0..trials {
        let d = api.create_challenge()?;
        check_shape(&d, spec)?;
        if api.submit_answer(&d.token, fixed_selection)?.status == AnswerStatus::Pass {
            successes += 1;
            if recorded.is_none() {
                recorded = Some((d.token, fixed_selection.to_vec()));
            }
        }
    }
    let fresh = AttackReport::new(Attacker::Replay, trials, successes, Some(theoretical), start.elapsed());

    let start = Instant::now();
    let (token, clicks) = match recorded {
        Some(r) => r,
        None => solve_by_guessing(api, spec, rng)?,
    };
    // The original session redeems its token once; everything after is replay.
    api.verify_token(&token)?;
    let mut replay_successes = 0;
    for _ in 0..trials {
        let resubmitted = api.submit_answer(&token, &clicks)?.status == AnswerStatus::Pass;
        let redeemed = api.verify_token(&token)?.success;
        if resubmitted || redeemed {
            replay_successes += 1;
        }
    }
    let token_replay = AttackReport::new(
        Attacker::TokenReplay,
        trials,
        replay_successes,
        Some(0.0),
        start.elapsed(),
    );
    Ok(ReplayReport { fresh, token_replay })
}

/// Guesses on fresh challenges until one passes. Returns the solved token
/// and the clicks that solved it.
pub fn solve_by_guessing<A: CaptchaApi + ?Sized, R: Rng + ?Sized>(
    api: &A,
    spec: &PuzzleSpec,
    rng: &mut R,
) -> Result<(String, Vec<usize>), HarnessError> {
    for _ in 0..SOLVE_ATTEMPTS {
        let d = api.create_challenge()?;
        check_shape(&d, spec)?;
        let guess = random_subset(rng, d.n, spec.k);
        if api.submit_answer(&d.token, &guess)?.status == AnswerStatus::Pass {
            return Ok((d.token, guess));
        }
    }
    Err(HarnessError::NoSolvedToken(SOLVE_ATTEMPTS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationStep {
    pub n: usize,
    pub status: AnswerStatus,
}

/// A bot that always clicks one random slot and keeps following the
/// replacement challenge it gets after each failure. Records the size of
/// every challenge it was shown and how its answer fared.
pub fn probe_escalation<A: CaptchaApi + ?Sized, R: Rng + ?Sized>(
    api: &A,
    attempts: usize,
    rng: &mut R,
) -> Result<Vec<EscalationStep>, HarnessError> {
    let mut steps = Vec::with_capacity(attempts);
    let mut current = api.create_challenge()?;
    for _ in 0..attempts {
        let guess = vec![rng.random_range(0..current.n)];
        let outcome = api.submit_answer(&current.token, &guess)?;
        steps.push(EscalationStep {
            n: current.n,
            status: outcome.status,
        });
        current = match outcome.next_challenge {
            Some(next) => next,
            None => api.create_challenge()?,
        };
    }
    Ok(steps)
}

/// Fixed-width text table of reports.
pub fn render_reports(reports: &[AttackReport]) -> String {
    let mut out = format!(
        "{:<13} {:>8} {:>9} {:>10} {:>11} {:>9} {:>8} {:>10}\n",
        "attacker", "trials", "successes", "empirical", "theoretical", "stderr", "in 3σ", "wall ms"
    );
    for r in reports {
        let theo = r.theoretical_rate.map_or("-".to_string(), |t| format!("{t:.4}"));
        let within = r.within_sigmas(3.0).map_or("-", |ok| if ok { "yes" } else { "NO" });
        let name = serde_json::to_value(r.attacker)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        out.push_str(&format!(
            "{:<13} {:>8} {:>9} {:>10.4} {:>11} {:>9.5} {:>8} {:>10.1}\n",
            name,
            r.trials,
            r.successes,
            r.empirical_rate,
            theo,
            r.stderr,
            within,
            r.wall_time.as_secs_f64() * 1000.0
        ));
    }
    out
}
