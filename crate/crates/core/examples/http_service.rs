//! Serves a freshly trained small model over HTTP. Without `--listen` it
//! issues a few in-process requests against the router and exits.
//!
//! cargo run --release --example http_service -- [--listen 127.0.0.1:8080]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use tower::ServiceExt;

use riskgrid::service::api::{router, serve};
use riskgrid::service::{cli, Engine};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/small.toml");
    let (data, model) = (tmp.path().join("data"), tmp.path().join("model.bin"));
    let (c, d, m) = (config.to_str().unwrap(), data.to_str().unwrap(), model.to_str().unwrap());
    for argv in [vec!["riskgrid", "synth", "--config", c, "--out", d], vec!["riskgrid", "train", "--data", d, "--config", c, "--out", m]] {
        let code = cli::run(argv, &mut std::io::sink(), &mut std::io::stderr());
        if code != 0 {
            return Err(format!("cli exited {code}").into());
        }
    }
    let engine = Arc::new(Engine::open(&model, &data, 10_000)?);

    let args: Vec<String> = std::env::args().collect();
    if let Some(i) = args.iter().position(|a| a == "--listen") {
        let addr = args.get(i + 1).ok_or("--listen needs an address")?.parse()?;
        println!("listening on http://{addr}/healthz");
        serve(engine, addr).await?;
        return Ok(());
    }

    let b = engine.region();
    let center = riskgrid::geogrid::encode(b.center(), 7)?;
    for uri in [
        "/healthz".to_string(),
        "/api/v1/meta".to_string(),
        format!("/api/v1/cell/{center}"),
        "/api/v1/cell/not-a-hash".to_string(),
        format!("/api/v1/surface?bbox={},{},{},{}", b.min_lon(), b.min_lat(), b.min_lon() + 0.003, b.min_lat() + 0.003),
    ] {
        let resp = router(engine.clone()).oneshot(Request::builder().uri(&uri).body(Body::empty())?).await?;
        let status = resp.status();
        let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await?;
        let text = String::from_utf8_lossy(&body);
        let shown: String = text.chars().take(240).collect();
        println!("GET {uri}\n  {status} {shown}{}\n", if text.len() > 240 { "..." } else { "" });
    }
    Ok(())
}
