//! JSON-over-HTTP front end for [`Service`].

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::oneshot;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::session::Service;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type Reply = Result<Response, ServiceError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ServiceError::Usage(format!("malformed request body: {e}")))
}

/// Runs blocking work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Core(retouch_core::Error::Backend(format!("worker failed: {e}"))))?
}

fn json<T: Serialize>(value: T) -> Reply {
    Ok(Json(value).into_response())
}

async fn create_session(State(svc): State<Arc<Service>>, body: Bytes) -> Reply {
    let req = parse(&body)?;
    json(blocking(move || svc.create_session(req)).await?)
}

async fn instruct(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Reply {
    let req = parse(&body)?;
    json(blocking(move || svc.instruct(&id, req)).await?)
}

async fn adjust(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Reply {
    let req = parse(&body)?;
    json(blocking(move || svc.adjust(&id, req)).await?)
}

async fn confirm(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Reply {
    let req = parse(&body)?;
    json(blocking(move || svc.confirm(&id, req)).await?)
}

async fn state(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Reply {
    json(blocking(move || svc.state(&id)).await?)
}

async fn memory_summary(State(svc): State<Arc<Service>>) -> Reply {
    json(svc.memory_summary())
}

async fn render(State(svc): State<Arc<Service>>, body: Bytes) -> Reply {
    let req = parse(&body)?;
    let png = blocking(move || svc.render(req)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn health() -> &'static str {
    "ok"
}

async fn not_found() -> Response {
    ServiceError::Core(retouch_core::Error::NotFound {
        what: "route".into(),
        available: vec![
            "POST /v1/session".into(),
            "GET /v1/session/{id}".into(),
            "POST /v1/session/{id}/instruct".into(),
            "POST /v1/session/{id}/adjust".into(),
            "POST /v1/session/{id}/confirm".into(),
            "GET /v1/memory/summary".into(),
            "POST /v1/render".into(),
        ],
    })
    .into_response()
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| o.parse().ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods(Any)
            .allow_headers([header::CONTENT_TYPE]),
    )
}

pub fn router(svc: Arc<Service>) -> Router {
    let limit = svc.config().max_body_bytes;
    let cors = cors(&svc.config().cors_origins);
    let router = Router::new()
        .route("/healthz", get(health))
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}", get(state))
        .route("/v1/session/{id}/instruct", post(instruct))
        .route("/v1/session/{id}/adjust", post(adjust))
        .route("/v1/session/{id}/confirm", post(confirm))
        .route("/v1/memory/summary", get(memory_summary))
        .route("/v1/render", post(render))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(svc);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime; stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `cfg.listen` (port 0 picks a free port) and serves in the background.
pub fn spawn(cfg: ServiceConfig) -> Result<ServerHandle, ServiceError> {
    let service = Arc::new(Service::new(cfg)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ServiceError::Core(e.into()))?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(&service.config().listen))
        .map_err(|e| ServiceError::Usage(format!("cannot listen on {}: {e}", service.config().listen)))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Core(e.into()))?;
    let (stop, stopped) = oneshot::channel::<()>();
    let svc = service.clone();
    let thread = std::thread::spawn(move || {
        let _ = runtime.block_on(serve(listener, svc, async {
            let _ = stopped.await;
        }));
    });
    Ok(ServerHandle {
        addr,
        service,
        stop: Some(stop),
        thread: Some(thread),
    })
}
