//! Blocking HTTP client for running the attacks against a live server.

use std::time::Duration;

use aesthetic_captcha::harness::{CaptchaApi, HarnessError};
use aesthetic_captcha::service::{
    AnswerOutcome, AnswerRequest, ChallengeDescriptor, ChallengeRequest, VerifyRequest, VerifyResult,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct HttpClient {
    base: String,
    site_key: String,
    secret: String,
    client: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(base_url: &str, site_key: impl Into<String>, secret: impl Into<String>) -> Result<Self, HarnessError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| HarnessError::Unreachable(e.to_string()))?;
        Ok(HttpClient {
            base: base_url.trim_end_matches('/').to_owned(),
            site_key: site_key.into(),
            secret: secret.into(),
            client,
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, HarnessError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| HarnessError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp
                .json::<serde_json::Value>()
                .ok()
                .and_then(|v| v["error"].as_str().map(str::to_owned))
                .unwrap_or_default();
            return Err(HarnessError::Rejected {
                status: status.as_u16(),
                message,
            });
        }
        resp.json().map_err(|e| HarnessError::Unreachable(e.to_string()))
    }
}

impl CaptchaApi for HttpClient {
    fn create_challenge(&self) -> Result<ChallengeDescriptor, HarnessError> {
        self.post(
            "/api/v1/challenge",
            &ChallengeRequest {
                site_key: self.site_key.clone(),
            },
        )
    }

    fn submit_answer(&self, token: &str, selection: &[usize]) -> Result<AnswerOutcome, HarnessError> {
        self.post(
            "/api/v1/answer",
            &AnswerRequest {
                token: token.to_owned(),
                selection: selection.to_vec(),
            },
        )
    }

    fn verify_token(&self, token: &str) -> Result<VerifyResult, HarnessError> {
        self.post(
            "/api/v1/verify",
            &VerifyRequest {
                secret: self.secret.clone(),
                token: token.to_owned(),
            },
        )
    }
}
