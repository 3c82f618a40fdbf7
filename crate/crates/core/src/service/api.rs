//! Wire types shared by the in-process service and the HTTP front end.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::pool::PoolStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLocator {
    pub slot: usize,
    pub url: String,
}

/// What the client gets to see of a challenge. Carries no valence or
/// answer information and no pool identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeDescriptor {
    pub token: String,
    pub n: usize,
    pub instruction: String,
    pub images: Vec<ImageLocator>,
    pub expires_at: DateTime<Utc>,
}

pub fn image_url(token: &str, slot: usize) -> String {
    format!("/img/{token}/{slot}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerStatus {
    Pass,
    Fail,
    Expired,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub status: AnswerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_challenge: Option<ChallengeDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyReason {
    Ok,
    UnknownToken,
    NotSolved,
    AlreadyConsumed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub success: bool,
    pub reason: VerifyReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved_at: Option<DateTime<Utc>>,
}

impl VerifyResult {
    pub fn ok(solved_at: DateTime<Utc>) -> Self {
        VerifyResult {
            success: true,
            reason: VerifyReason::Ok,
            solved_at: Some(solved_at),
        }
    }

    pub fn rejected(reason: VerifyReason) -> Self {
        debug_assert_ne!(reason, VerifyReason::Ok);
        VerifyResult {
            success: false,
            reason,
            solved_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub pool: PoolStats,
    pub challenges_issued: u64,
    /// Passes over all answered challenges; 0 before any answer.
    pub pass_rate: f64,
    /// Mean server-measured solve time of passed challenges; 0 before any pass.
    pub mean_solve_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeRequest {
    pub site_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub token: String,
    pub selection: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub secret: String,
    pub token: String,
}
