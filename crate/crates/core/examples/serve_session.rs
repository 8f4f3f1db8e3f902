//! Drive the HTTP service in-process: create a session, click, fetch the
//! mesh. `bsb serve` exposes the same router on a socket.

use std::error::Error;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use bsb::service::{router, SessionRegistry};
use bsb::synthetic::{decoy_family, write_manifest};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> Result<(StatusCode, Value), Box<dyn Error>> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    write_manifest(dir.path(), &decoy_family()[..1])?;
    let app = router(Arc::new(SessionRegistry::new(4)));

    tokio::runtime::Runtime::new()?.block_on(async {
        let (status, created) = call(
            &app,
            "POST",
            "/sessions",
            json!({
                "base_dir": dir.path(),
                "image_features": "decoy-00.image.bsbt",
                "vertex_features": "decoy-00.vertices.bsbt",
                "mesh": "decoy-00.obj",
                "seg2d": "synthetic:decoy-00.labels.bsbt",
                "seg3d": "synthetic:decoy-00.vlabels.bsbt",
            }),
        )
        .await?;
        println!("POST /sessions -> {status} {created}");
        let id = created["id"].as_str().ok_or("no session id")?.to_string();

        let (status, click) = call(&app, "POST", &format!("/sessions/{id}/click"), json!({"x": 4, "y": 4})).await?;
        println!("click -> {status}: vertex {}, iou {}, 3D part {}", click["vertex"], click["iou"], click["mask3d"]);

        let (_, mesh) = call(&app, "GET", &format!("/sessions/{id}/mesh"), Value::Null).await?;
        println!("mesh: {} vertices", mesh["vertices"].as_array().map_or(0, Vec::len));

        let (status, err) = call(&app, "POST", "/sessions/nope/click", json!({"x": 0, "y": 0})).await?;
        println!("unknown session -> {status} {err}");
        Ok(())
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
