//! HTTP API.
//!
//! | route                                  | response                          |
//! |----------------------------------------|-----------------------------------|
//! | `GET /healthz`                         | `{status, model_fingerprint}`     |
//! | `GET /api/v1/meta`                     | taxonomy, schema, eval, fingerprints |
//! | `GET /api/v1/cell/{geohash}`           | cell prediction and history       |
//! | `GET /api/v1/surface?bbox=&precision=` | GeoJSON FeatureCollection         |
//!
//! `bbox` is `minLon,minLat,maxLon,maxLat` (GeoJSON order). Errors are
//! `{"error": code, "message": text}` with codes `invalid_geohash`,
//! `invalid_bbox`, `invalid_precision` (400), `outside_region`, `not_found`
//! (404), `cell_cap_exceeded` (422) and `schema_mismatch` (500).
//!
//! Successful responses carry an `ETag` derived from the model and data
//! fingerprints and honor `If-None-Match` with 304.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde_json::{json, Value};

use super::{surface_to_geojson, Engine, ServiceError};
use crate::geogrid::BBox;

const CACHE_CONTROL: &str = "public, max-age=300, must-revalidate";

fn etag(engine: &Engine) -> String {
    format!("\"{}-{}\"", &engine.fingerprint()[..16], &engine.data_fingerprint()[..16])
}

fn json_response(status: StatusCode, content_type: &str, body: &Value) -> Response {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, content_type)
        .body(Body::from(serde_json::to_vec(body).expect("json body")))
        .expect("valid response")
}

fn error_response(e: &ServiceError) -> Response {
    let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json_response(status, "application/json", &e.to_json())
}

fn not_modified(engine: &Engine, headers: &HeaderMap) -> Option<Response> {
    let tag = etag(engine);
    let inm = headers.get(header::IF_NONE_MATCH)?.to_str().ok()?;
    let hit = inm.split(',').map(str::trim).any(|t| t == "*" || t == tag || t.strip_prefix("W/") == Some(&tag));
    hit.then(|| {
        Response::builder()
            .status(StatusCode::NOT_MODIFIED)
            .header(header::ETAG, tag)
            .header(header::CACHE_CONTROL, CACHE_CONTROL)
            .body(Body::empty())
            .expect("valid response")
    })
}

fn cached(engine: &Engine, mut resp: Response) -> Response {
    let h = resp.headers_mut();
    h.insert(header::ETAG, HeaderValue::from_str(&etag(engine)).expect("ascii etag"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static(CACHE_CONTROL));
    resp
}

async fn healthz(State(engine): State<Arc<Engine>>) -> Response {
    let status = if engine.schema_error().is_some() { "degraded" } else { "ok" };
    json_response(
        StatusCode::OK,
        "application/json",
        &json!({ "status": status, "model_fingerprint": engine.fingerprint() }),
    )
}

async fn meta(State(engine): State<Arc<Engine>>, headers: HeaderMap) -> Response {
    if let Some(r) = not_modified(&engine, &headers) {
        return r;
    }
    cached(&engine, json_response(StatusCode::OK, "application/json", &engine.meta()))
}

async fn cell(State(engine): State<Arc<Engine>>, Path(code): Path<String>, headers: HeaderMap) -> Response {
    let g = match Engine::parse_geohash(&code) {
        Ok(g) => g,
        Err(e) => return error_response(&e),
    };
    if !engine.region().intersects(&g.bbox()) {
        return error_response(&ServiceError::OutsideRegion(g.to_string()));
    }
    if let Some(m) = engine.schema_error() {
        return error_response(&ServiceError::SchemaMismatch(m.to_string()));
    }
    if let Some(r) = not_modified(&engine, &headers) {
        return r;
    }
    let task = {
        let engine = engine.clone();
        tokio::task::spawn_blocking(move || engine.cell(&g))
    };
    match task.await {
        Ok(Ok(report)) => cached(
            &engine,
            json_response(StatusCode::OK, "application/json", &serde_json::to_value(report).expect("report json")),
        ),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ServiceError::Internal(e.to_string())),
    }
}

async fn surface(
    State(engine): State<Arc<Engine>>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let bbox = match q.get("bbox") {
        None => return error_response(&ServiceError::InvalidBBox("missing bbox=minLon,minLat,maxLon,maxLat".into())),
        Some(s) => match BBox::parse_lon_lat(s) {
            Ok(b) => b,
            Err(e) => return error_response(&ServiceError::InvalidBBox(e.to_string())),
        },
    };
    let precision = match q.get("precision").map(|p| p.parse::<usize>()) {
        None => None,
        Some(Ok(p)) => Some(p),
        Some(Err(_)) => {
            return error_response(&ServiceError::InvalidPrecision(format!(
                "precision {:?} is not an integer",
                q["precision"]
            )))
        }
    };
    if let Some(r) = not_modified(&engine, &headers) {
        return r;
    }
    let task = {
        let engine = engine.clone();
        tokio::task::spawn_blocking(move || engine.surface(bbox, precision))
    };
    match task.await {
        Ok(Ok(s)) => cached(&engine, json_response(StatusCode::OK, "application/geo+json", &surface_to_geojson(&s))),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ServiceError::Internal(e.to_string())),
    }
}

async fn fallback() -> Response {
    json_response(
        StatusCode::NOT_FOUND,
        "application/json",
        &json!({ "error": "not_found", "message": "no such route" }),
    )
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/meta", get(meta))
        .route("/api/v1/cell/{geohash}", get(cell))
        .route("/api/v1/surface", get(surface))
        .fallback(fallback)
        .with_state(engine)
}

/// Serves until the process is stopped.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(engine)).await
}
