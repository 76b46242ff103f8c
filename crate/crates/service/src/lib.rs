//! Axum router over the library's request handlers. Numeric work runs on
//! the blocking pool so the async workers stay responsive.

use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use inplay_core::api::{self, ErrorBody, Health};
use inplay_core::Error;

pub fn app() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/implied", post(|b| run(b, |r| api::implied(&r))))
        .route("/v1/rate", post(|b| run(b, |r| api::rate(&r))))
        .route("/v1/forecast", post(|b| run(b, |r| api::run_forecast(&r))))
        .route("/v1/calibrate", post(|b| run(b, |r| api::calibrate(&r))))
        .route("/v1/score", post(|b| run(b, |r| Ok(api::score(&r)))))
        .route("/v1/kelly", post(|b| run(b, |r| api::kelly(&r))))
        .route("/v1/settle", post(|b| run(b, |r| api::settle_bets(&r))))
        .route("/v1/zou/forecast", post(|b| run(b, |r| api::zou_forecast(&r))))
        .route("/v1/maia/forecast", post(|b| run(b, |r| api::maia_forecast_request(&r))))
        .route("/v1/fit", post(|b| run(b, |r| api::fit(&r))))
        .route("/v1/evaluate", post(|b| run(b, |r| api::evaluate_points(&r))))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

fn error_response(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        Error::Parse { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn run<Req, Resp, F>(body: Result<Json<Req>, JsonRejection>, handler: F) -> Response
where
    Req: Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(Req) -> inplay_core::Result<Resp> + Send + 'static,
{
    let req = match body {
        Ok(Json(r)) => r,
        Err(rej) => {
            let body = ErrorBody { error: "bad-request".into(), message: rej.body_text() };
            return error_response(rej.status(), body);
        }
    };
    match tokio::task::spawn_blocking(move || handler(req)).await {
        Ok(Ok(v)) => Json(v).into_response(),
        Ok(Err(e)) => {
            tracing::debug!(kind = e.kind(), "request rejected: {e}");
            error_response(status_for(&e), ErrorBody::from(&e))
        }
        Err(join) => {
            tracing::error!("handler panicked: {join}");
            let body = ErrorBody { error: "internal".into(), message: "request handler failed".into() };
            error_response(StatusCode::INTERNAL_SERVER_ERROR, body)
        }
    }
}
