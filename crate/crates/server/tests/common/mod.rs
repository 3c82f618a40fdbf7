#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use aesthetic_captcha::pool::{ImagePool, SharedPool};
use aesthetic_captcha::service::{ChallengeService, ChallengeStore, Clock, ServiceConfig, Token};
use aesthetic_captcha_server::http::{router, AppState};
use axum::Router;

pub const SECRET: &str = "test-secret";

pub fn fixture_manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pool/manifest.json")
}

pub fn fixture_pool() -> ImagePool {
    ImagePool::load_manifest(&fixture_manifest()).unwrap()
}

pub fn service(config: ServiceConfig) -> Arc<ChallengeService> {
    Arc::new(ChallengeService::new(config, Arc::new(SharedPool::new(fixture_pool()))))
}

pub fn service_with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Arc<ChallengeService> {
    Arc::new(ChallengeService::with_clock(
        config,
        Arc::new(SharedPool::new(fixture_pool())),
        clock,
    ))
}

pub fn app(service: &Arc<ChallengeService>) -> Router {
    router(AppState {
        service: service.clone(),
        trust_proxy: false,
    })
}

/// Reads the answer straight out of the store, as only the server can.
pub fn answer_of(service: &ChallengeService, token: &str) -> Vec<usize> {
    let mut answer = BTreeSet::new();
    service
        .store()
        .update(&Token::from(token), &mut |c| answer = c.puzzle.answer_set.clone());
    answer.into_iter().collect()
}
