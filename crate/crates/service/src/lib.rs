//! HTTP/JSON API over the explanation engine.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/api/datasets` | | `[DatasetInfo]` |
//! | GET | `/api/models` | | `[TrainResponse]` |
//! | POST | `/api/models` | `TrainRequest` | `TrainResponse` |
//! | GET | `/api/models/{id}` | | `ModelDocument` |
//! | POST | `/api/models/{id}/explain` | `ExplainRequest` | `Explanation` |
//! | POST | `/api/models/{id}/pick` | `PickRequest` | `PickResponse` |
//! | POST | `/api/sessions` | `SessionRequest` | `Session` |
//! | GET | `/api/sessions/{id}` | | `Session` |
//! | POST | `/api/sessions/{id}/rounds` | `RoundRequest` | `Round` |
//!
//! Errors are `{"error": message}` with status 404, 409, 422 or 500.

pub mod api;
pub mod error;
pub mod state;
pub mod store;

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use lime_core::lime::Explanation;
use tower_http::cors::CorsLayer;

pub use api::*;
pub use error::{ApiError, ApiResult};
pub use state::{AppState, Dataset, ServiceConfig};

type Shared = State<Arc<AppState>>;

/// Runs CPU-bound work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn list_datasets(State(st): Shared) -> Json<Vec<DatasetInfo>> {
    Json(st.list_datasets())
}

async fn list_models(State(st): Shared) -> Json<Vec<TrainResponse>> {
    Json(st.list_models())
}

async fn train_model(State(st): Shared, Json(req): Json<TrainRequest>) -> ApiResult<Json<TrainResponse>> {
    blocking(move || st.handle_train(req)).await.map(Json)
}

async fn get_model(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<ModelDocument>> {
    Ok(Json(st.model(&id)?.as_ref().clone()))
}

async fn explain(
    State(st): Shared,
    Path(id): Path<String>,
    Json(req): Json<ExplainRequest>,
) -> ApiResult<Json<Explanation>> {
    blocking(move || st.handle_explain(&id, req)).await.map(Json)
}

async fn pick(State(st): Shared, Path(id): Path<String>, Json(req): Json<PickRequest>) -> ApiResult<Json<PickResponse>> {
    blocking(move || st.handle_pick(&id, req)).await.map(Json)
}

async fn create_session(State(st): Shared, Json(req): Json<SessionRequest>) -> ApiResult<Json<Session>> {
    blocking(move || st.create_session(req)).await.map(Json)
}

async fn get_session(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(st.session(&id)?.as_ref().clone()))
}

async fn add_round(State(st): Shared, Path(id): Path<String>, Json(req): Json<RoundRequest>) -> ApiResult<Json<Round>> {
    let guard = st.begin_round(&id)?;
    blocking(move || st.add_round(&id, req, &guard)).await.map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/datasets", get(list_datasets))
        .route("/api/models", get(list_models).post(train_model))
        .route("/api/models/{id}", get(get_model))
        .route("/api/models/{id}/explain", post(explain))
        .route("/api/models/{id}/pick", post(pick))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/rounds", post(add_round))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `state.config().listen` until the process is stopped.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let addr = state.config().listen.clone();
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
