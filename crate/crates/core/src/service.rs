//! HTTP session service for the interactive loop.
//!
//! | method | path                          | body                    |
//! |--------|-------------------------------|-------------------------|
//! | POST   | `/sessions`                   | [`SessionRequest`]      |
//! | POST   | `/sessions/{id}/click`        | `{"x","y","k"?}`        |
//! | POST   | `/sessions/{id}/vertex-click` | `{"v","k"?}`            |
//! | GET    | `/sessions/{id}/mesh`         |                         |
//! | GET    | `/sessions/{id}/image`        |                         |
//! | DELETE | `/sessions/{id}`              |                         |
//!
//! 2D masks travel as row-major runs `[[start, len], ...]`, 3D masks as
//! sorted vertex index lists. Errors are `{"error": "..."}` with status 404
//! for unknown sessions and 400 for everything the caller can fix.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::matcher::{bsb_match_reverse, Candidate, ClickContext, ReverseCandidate, ReverseContext, DEFAULT_K};
use crate::mesh::{load_mesh, normalize_mesh, Mesh};
use crate::segmenters::{correspond, ProviderSpec, Seg2DProvider, Seg3DProvider, DEFAULT_TAU};
use crate::tensor_io::{resolve_path, FeatureImage, Mask2D, Pixel, VertexFeatureField};

pub const DEFAULT_SESSION_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

fn bad(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::BadRequest(e.to_string())
}

/// Session bundle. Relative paths resolve against `base_dir` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(default)]
    pub base_dir: Option<PathBuf>,
    pub image_features: PathBuf,
    pub vertex_features: PathBuf,
    pub mesh: PathBuf,
    /// 2D provider spec.
    pub seg2d: String,
    /// 3D provider spec; flood fill at the default threshold when absent.
    #[serde(default)]
    pub seg3d: Option<String>,
    /// Display image served back unchanged.
    #[serde(default)]
    pub image: Option<PathBuf>,
    /// Pixels eligible in the vertex-click direction; whole image when absent.
    #[serde(default)]
    pub scope_mask: Option<PathBuf>,
    #[serde(default)]
    pub k: Option<usize>,
}

/// Immutable contents of a session.
pub struct SessionBundle {
    pub image: FeatureImage,
    pub vertices: Arc<VertexFeatureField>,
    pub mesh: Arc<Mesh>,
    pub display_mesh: Mesh,
    pub seg2d: Arc<dyn Seg2DProvider>,
    pub seg3d: Arc<dyn Seg3DProvider>,
    pub display_image: Option<PathBuf>,
    pub scope: Mask2D,
    pub k: usize,
}

impl SessionBundle {
    pub fn load(req: &SessionRequest) -> Result<Self, ServiceError> {
        let base = req.base_dir.clone().unwrap_or_default();
        let path = |p: &PathBuf| resolve_path(&base, p);
        let image = FeatureImage::load(path(&req.image_features)).map_err(bad)?;
        let vertices = Arc::new(VertexFeatureField::load(path(&req.vertex_features)).map_err(bad)?);
        let mesh = Arc::new(load_mesh(path(&req.mesh)).map_err(bad)?);
        if mesh.vertex_count() != vertices.len() {
            return Err(bad(format!(
                "mesh has {} vertices, vertex features have {}",
                mesh.vertex_count(),
                vertices.len()
            )));
        }
        if vertices.dim() != image.dim() {
            return Err(bad(format!(
                "vertex features have {} channels, image features have {}",
                vertices.dim(),
                image.dim()
            )));
        }
        let display_mesh = normalize_mesh(&mesh).map_err(bad)?;
        let seg2d = req
            .seg2d
            .parse::<ProviderSpec>()
            .map_err(bad)?
            .rebased(&base)
            .build_seg2d()
            .map_err(bad)?;
        if seg2d.dims() != (image.width(), image.height()) {
            return Err(bad(format!(
                "2D provider is {:?}, image is {}x{}",
                seg2d.dims(),
                image.width(),
                image.height()
            )));
        }
        let spec3d = match &req.seg3d {
            Some(s) => s.parse::<ProviderSpec>().map_err(bad)?.rebased(&base),
            None => ProviderSpec::FloodFill { tau: DEFAULT_TAU },
        };
        let seg3d = spec3d
            .build_seg3d(Some(vertices.clone()), Some(mesh.clone()))
            .map_err(bad)?;
        if seg3d.vertex_count() != vertices.len() {
            return Err(bad("3D provider vertex count does not match the mesh"));
        }
        let scope = match &req.scope_mask {
            Some(p) => Mask2D::load(path(p)).map_err(bad)?,
            None => Mask2D::full(image.width(), image.height()),
        };
        let display_image = req.image.as_ref().map(path);
        if let Some(p) = &display_image {
            if !p.is_file() {
                return Err(bad(format!("{}: display image not found", p.display())));
            }
        }
        if req.k == Some(0) {
            return Err(bad("k must be positive"));
        }
        Ok(Self {
            image,
            vertices,
            mesh,
            display_mesh,
            seg2d,
            seg3d,
            display_image,
            scope,
            k: req.k.unwrap_or(DEFAULT_K),
        })
    }
}

pub struct Session {
    pub id: String,
    pub bundle: SessionBundle,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub x: usize,
    pub y: usize,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexClickRequest {
    pub v: usize,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClickResponse {
    pub vertex: Option<usize>,
    /// Matched pixel `q*`.
    pub pixel: Option<Pixel>,
    pub iou: Option<f32>,
    pub width: usize,
    pub height: usize,
    pub part_mask: Vec<[usize; 2]>,
    pub match_mask: Option<Vec<[usize; 2]>>,
    pub mask3d: Vec<usize>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexClickResponse {
    pub pixel: Option<Pixel>,
    pub vertex: Option<usize>,
    pub iou: Option<f32>,
    pub width: usize,
    pub height: usize,
    /// 3D part of the clicked vertex.
    pub mask3d: Vec<usize>,
    /// 2D part at the matched pixel; empty on a no-match.
    pub mask2d: Vec<[usize; 2]>,
    pub candidates: Vec<ReverseCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshResponse {
    pub vertices: Vec<[f32; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Session {
    fn k(&self, k: Option<usize>) -> Result<usize, ServiceError> {
        match k {
            Some(0) => Err(bad("k must be positive")),
            Some(k) => Ok(k),
            None => Ok(self.bundle.k),
        }
    }

    pub fn click(&self, req: ClickRequest) -> Result<ClickResponse, ServiceError> {
        let b = &self.bundle;
        let p = Pixel::new(req.x, req.y);
        if !b.image.contains(p) {
            return Err(bad(format!(
                "click {p} outside image {}x{}",
                b.image.width(),
                b.image.height()
            )));
        }
        let masks = b.seg2d.query(p).map_err(bad)?;
        let ctx = ClickContext::new(&b.image, p, &masks.part, &masks.object, &b.vertices, self.k(req.k)?)
            .map_err(bad)?;
        let c = correspond(&ctx, b.seg2d.as_ref(), b.seg3d.as_ref()).map_err(bad)?;
        Ok(ClickResponse {
            vertex: c.result.vertex,
            pixel: c.result.pixel,
            iou: c.result.iou,
            width: b.image.width(),
            height: b.image.height(),
            part_mask: masks.part.to_rle(),
            match_mask: c.result.match_mask.as_ref().map(Mask2D::to_rle),
            mask3d: c.mask3d.indices(),
            candidates: c.result.candidates,
        })
    }

    pub fn vertex_click(&self, req: VertexClickRequest) -> Result<VertexClickResponse, ServiceError> {
        let b = &self.bundle;
        if req.v >= b.vertices.len() {
            return Err(bad(format!("vertex {} out of range ({} vertices)", req.v, b.vertices.len())));
        }
        let part3d = b.seg3d.query(req.v).map_err(bad)?;
        let ctx = ReverseContext {
            image: &b.image,
            scope: &b.scope,
            vertices: &b.vertices,
            vertex: req.v,
            part3d: &part3d,
            k: self.k(req.k)?,
        };
        let r = bsb_match_reverse(&ctx, b.seg3d.as_ref()).map_err(bad)?;
        let mask2d = match r.pixel {
            Some(p) => b.seg2d.query(p).map_err(bad)?.part.to_rle(),
            None => Vec::new(),
        };
        Ok(VertexClickResponse {
            pixel: r.pixel,
            vertex: r.vertex,
            iou: r.iou,
            width: b.image.width(),
            height: b.image.height(),
            mask3d: part3d.indices(),
            mask2d,
            candidates: r.candidates,
        })
    }

    pub fn mesh(&self) -> MeshResponse {
        MeshResponse {
            vertices: self.bundle.display_mesh.vertices().to_vec(),
            faces: self.bundle.display_mesh.faces().to_vec(),
        }
    }
}

struct Entry {
    session: Arc<Session>,
    last_used: u64,
}

struct Registry {
    sessions: HashMap<String, Entry>,
    tick: u64,
}

/// In-memory sessions with least-recently-used eviction.
pub struct SessionRegistry {
    cap: usize,
    inner: Mutex<Registry>,
}

impl SessionRegistry {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            inner: Mutex::new(Registry {
                sessions: HashMap::new(),
                tick: 0,
            }),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("registry lock").sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads the bundle and registers it, evicting the least recently used
    /// session when full. Nothing is registered if loading fails.
    pub fn create(&self, req: &SessionRequest) -> Result<String, ServiceError> {
        let bundle = SessionBundle::load(req)?;
        Ok(self.insert(bundle))
    }

    pub fn insert(&self, bundle: SessionBundle) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let session = Arc::new(Session {
            id: id.clone(),
            bundle,
            created_at,
        });
        let mut g = self.inner.lock().expect("registry lock");
        while g.sessions.len() >= self.cap {
            let oldest = g
                .sessions
                .iter()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            log::info!("evicting session {oldest}");
            g.sessions.remove(&oldest);
        }
        g.tick += 1;
        let last_used = g.tick;
        g.sessions.insert(id.clone(), Entry { session, last_used });
        id
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        let mut g = self.inner.lock().expect("registry lock");
        g.tick += 1;
        let tick = g.tick;
        let e = g
            .sessions
            .get_mut(id)
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))?;
        e.last_used = tick;
        Ok(e.session.clone())
    }

    pub fn remove(&self, id: &str) -> Result<(), ServiceError> {
        self.inner
            .lock()
            .expect("registry lock")
            .sessions
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }
}

type AppState = Arc<SessionRegistry>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| bad(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(State(reg): State<AppState>, body: Bytes) -> Result<Json<serde_json::Value>, ServiceError> {
    let req: SessionRequest = parse_body(&body)?;
    let id = blocking(move || reg.create(&req)).await?;
    Ok(Json(serde_json::json!({ "id": id })))
}

async fn click(
    State(reg): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<ClickResponse>, ServiceError> {
    let session = reg.get(&id)?;
    let req: ClickRequest = parse_body(&body)?;
    Ok(Json(blocking(move || session.click(req)).await?))
}

async fn vertex_click(
    State(reg): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<VertexClickResponse>, ServiceError> {
    let session = reg.get(&id)?;
    let req: VertexClickRequest = parse_body(&body)?;
    Ok(Json(blocking(move || session.vertex_click(req)).await?))
}

async fn mesh(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<MeshResponse>, ServiceError> {
    Ok(Json(reg.get(&id)?.mesh()))
}

async fn image(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let session = reg.get(&id)?;
    let path = session
        .bundle
        .display_image
        .clone()
        .ok_or_else(|| ServiceError::NotFound(format!("{id}/image")))?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("ppm" | "pgm") => "image/x-portable-anymap",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn delete_session(State(reg): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ServiceError> {
    reg.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(registry: Arc<SessionRegistry>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/click", post(click))
        .route("/sessions/{id}/vertex-click", post(vertex_click))
        .route("/sessions/{id}/mesh", get(mesh))
        .route("/sessions/{id}/image", get(image))
        .with_state(registry)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, session_cap: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(SessionRegistry::new(session_cap))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
