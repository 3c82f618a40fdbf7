//! JSON API and image endpoint.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use aesthetic_captcha::service::{
    client_fingerprint, AnswerOutcome, AnswerRequest, ChallengeDescriptor, ChallengeRequest, ChallengeService,
    ServiceError, ServiceStats, VerifyRequest, VerifyResult,
};
use axum::extract::rejection::JsonRejection;
use axum::extract::{ConnectInfo, FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::task::JoinHandle;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<ChallengeService>,
    /// Take the client address from `X-Forwarded-For` when present.
    pub trust_proxy: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/challenge", post(create_challenge))
        .route("/api/v1/answer", post(submit_answer))
        .route("/api/v1/verify", post(verify))
        .route("/api/v1/stats", get(stats))
        .route("/img/{token}/{slot}", get(image))
        .with_state(state)
}

/// Serves `app` with peer addresses available to the handlers.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>()).await
}

/// Periodically drops expired and long-finished challenges.
pub fn spawn_sweeper(service: Arc<ChallengeService>, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let removed = service.sweep_expired(service.now());
            if removed > 0 {
                tracing::debug!(removed, "swept challenges");
            }
        }
    })
}

#[derive(Debug)]
pub enum ApiError {
    Service(ServiceError),
    BadRequest(String),
    Internal(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Service(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Service(e) => match e {
                ServiceError::RateLimited { .. } => StatusCode::TOO_MANY_REQUESTS,
                ServiceError::PoolExhausted(_) => StatusCode::SERVICE_UNAVAILABLE,
                ServiceError::MalformedSelection(_) => StatusCode::BAD_REQUEST,
                ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
                ServiceError::NotFound => StatusCode::NOT_FOUND,
                ServiceError::Image(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let message = match &self {
            ApiError::Service(ServiceError::Image(e)) => {
                tracing::error!(error = %e, "image transform failed");
                "image unavailable".to_owned()
            }
            ApiError::Service(e) => e.to_string(),
            ApiError::BadRequest(m) => m.clone(),
            ApiError::Internal(m) => {
                tracing::error!(error = %m, "internal error");
                "internal error".to_owned()
            }
        };
        let mut resp = (status, Json(serde_json::json!({ "error": message }))).into_response();
        if let ApiError::Service(ServiceError::RateLimited { retry_after_secs }) = self {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(retry_after_secs));
        }
        resp
    }
}

fn body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(t)| t).map_err(|e| ApiError::BadRequest(e.body_text()))
}

/// Best-effort client address: the TCP peer, or the first
/// `X-Forwarded-For` hop behind a trusted proxy.
pub struct ClientAddr(pub String);

impl FromRequestParts<AppState> for ClientAddr {
    type Rejection = Infallible;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        if state.trust_proxy {
            let forwarded = parts
                .headers
                .get("x-forwarded-for")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.split(',').next())
                .map(str::trim)
                .filter(|v| !v.is_empty());
            if let Some(addr) = forwarded {
                return Ok(ClientAddr(addr.to_owned()));
            }
        }
        let peer = parts
            .extensions
            .get::<ConnectInfo<SocketAddr>>()
            .map(|c| c.0.ip().to_string())
            .unwrap_or_else(|| "unknown".to_owned());
        Ok(ClientAddr(peer))
    }
}

async fn create_challenge(
    State(st): State<AppState>,
    ClientAddr(addr): ClientAddr,
    req: Result<Json<ChallengeRequest>, JsonRejection>,
) -> Result<Json<ChallengeDescriptor>, ApiError> {
    let req = body(req)?;
    let fingerprint = client_fingerprint(&addr, &req.site_key);
    Ok(Json(st.service.create_challenge(&req.site_key, &fingerprint)?))
}

async fn submit_answer(
    State(st): State<AppState>,
    req: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerOutcome>, ApiError> {
    let req = body(req)?;
    Ok(Json(st.service.submit_answer(&req.token, &req.selection)?))
}

async fn verify(
    State(st): State<AppState>,
    req: Result<Json<VerifyRequest>, JsonRejection>,
) -> Result<Json<VerifyResult>, ApiError> {
    let req = body(req)?;
    Ok(Json(st.service.verify_token(&req.secret, &req.token)?))
}

async fn stats(State(st): State<AppState>) -> Json<ServiceStats> {
    Json(st.service.stats())
}

async fn image(State(st): State<AppState>, Path((token, slot)): Path<(String, String)>) -> Result<Response, ApiError> {
    let slot: usize = slot.parse().map_err(|_| ServiceError::NotFound)?;
    let service = st.service.clone();
    let png = tokio::task::spawn_blocking(move || service.image_png(&token, slot))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((
        [(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")],
        png,
    )
        .into_response())
}
