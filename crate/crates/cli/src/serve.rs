//! HTTP backend for the labeling tool.
//!
//! | route | |
//! |---|---|
//! | `GET /images` | JSON list of image names |
//! | `GET /images/{name}` | image bytes |
//! | `GET /annotations/{stem}` | the stem's annotation file, empty if none yet |
//! | `POST /annotations/{stem}` | replace the file; the body must validate |
//! | `GET /` | the UI bundle, or a placeholder page |

use std::collections::HashMap;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::check::check_annotations;
use crate::commands::image_names;

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>ctw annotator</title></head>
<body><h1>ctw annotator</h1>
<p>No UI bundle configured. Start the server with <code>--ui-dir</code> pointing at a built bundle.</p>
<p>API: <code>GET /images</code>, <code>GET /images/{name}</code>, <code>GET|POST /annotations/{stem}</code>.</p>
</body></html>
";

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub images: PathBuf,
    pub annotations: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    images: Arc<PathBuf>,
    annotations: Arc<PathBuf>,
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    fn lock_for(&self, stem: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut m = self.locks.lock().expect("lock table poisoned");
        m.entry(stem.to_string()).or_default().clone()
    }
}

pub fn router(cfg: ServeConfig) -> Router {
    let state = AppState {
        images: Arc::new(cfg.images),
        annotations: Arc::new(cfg.annotations),
        locks: Arc::default(),
    };
    let api = Router::new()
        .route("/images", get(list_images))
        .route("/images/{name}", get(get_image))
        .route("/annotations/{stem}", get(get_annotations).post(post_annotations))
        .with_state(state);
    match cfg.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub async fn serve(cfg: ServeConfig, addr: SocketAddr) -> anyhow::Result<()> {
    for d in [&cfg.images, &cfg.annotations] {
        anyhow::ensure!(d.is_dir(), "{} is not a directory", d.display());
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(cfg)).await?;
    Ok(())
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn names(dir: &Path) -> Result<Vec<String>, Response> {
    let dir = dir.to_path_buf();
    tokio::task::spawn_blocking(move || image_names(&dir))
        .await
        .map_err(internal)?
        .map_err(internal)
}

async fn list_images(State(s): State<AppState>) -> Response {
    match names(&s.images).await {
        Ok(n) => Json(n).into_response(),
        Err(r) => r,
    }
}

fn content_type(name: &str) -> &'static str {
    let ext = name.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        "bmp" => "image/bmp",
        "webp" => "image/webp",
        "tif" => "image/tiff",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(s): State<AppState>, UrlPath(name): UrlPath<String>) -> Response {
    let known = match names(&s.images).await {
        Ok(n) => n,
        Err(r) => return r,
    };
    // only names from the listing are served, so no path can escape the directory
    if !known.contains(&name) {
        return error(StatusCode::NOT_FOUND, format!("unknown image '{name}'"));
    }
    match tokio::fs::read(s.images.join(&name)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&name))], bytes).into_response(),
        Err(e) => internal(e),
    }
}

/// Annotation stems must name an existing image.
async fn known_stem(s: &AppState, stem: &str) -> Result<PathBuf, Response> {
    let known = names(&s.images).await?;
    let matches = known
        .iter()
        .any(|n| Path::new(n).file_stem().is_some_and(|f| f.to_string_lossy() == stem));
    if !matches {
        return Err(error(StatusCode::NOT_FOUND, format!("no image with stem '{stem}'")));
    }
    Ok(s.annotations.join(format!("{stem}.txt")))
}

async fn get_annotations(State(s): State<AppState>, UrlPath(stem): UrlPath<String>) -> Response {
    let path = match known_stem(&s, &stem).await {
        Ok(p) => p,
        Err(r) => return r,
    };
    let lock = s.lock_for(&stem);
    let _guard = lock.lock().await;
    let body = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return internal(e),
    };
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

fn write_atomic(dir: &Path, dest: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dest).map_err(|e| e.error)?;
    Ok(())
}

async fn post_annotations(State(s): State<AppState>, UrlPath(stem): UrlPath<String>, body: Bytes) -> Response {
    let path = match known_stem(&s, &stem).await {
        Ok(p) => p,
        Err(r) => return r,
    };
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not UTF-8");
    };
    let (ok, violations) = check_annotations(text);
    if !violations.is_empty() {
        let body = json!({ "error": "invalid annotation", "violations": violations });
        return (StatusCode::BAD_REQUEST, Json(body)).into_response();
    }
    let lock = s.lock_for(&stem);
    let _guard = lock.lock().await;
    let dir = s.annotations.as_ref().clone();
    let written = tokio::task::spawn_blocking(move || write_atomic(&dir, &path, &body)).await;
    match written {
        Ok(Ok(())) => Json(json!({ "stem": stem, "regions": ok.len() })).into_response(),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}
