mod common;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use rand::Rng;
use serde_json::Value;
use tower::ServiceExt;

use riskgrid::data::PoiSet;
use riskgrid::geogrid::{cover_count, encode, BBox, GeoPoint};
use riskgrid::service::api::router;
use riskgrid::service::cli::{self, predict_json};
use riskgrid::service::{render_surface, surface_to_geojson, Engine};

use common::{rng, small_fixture};

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    engine: Arc<Engine>,
}

fn fixture(cap: usize) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model, _) = small_fixture(tmp.path());
    let engine = Arc::new(Engine::open(&model, &data, cap).unwrap());
    Fixture { _tmp: tmp, data, model, engine }
}

async fn get(engine: &Arc<Engine>, uri: &str, etag: Option<&str>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let mut req = Request::builder().uri(uri);
    if let Some(t) = etag {
        req = req.header(header::IF_NONE_MATCH, t);
    }
    let resp = router(engine.clone()).oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, headers, body.to_vec())
}

fn json(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap()
}

fn inside_cell(engine: &Engine) -> String {
    encode(engine.region().center(), engine.model().features.precision).unwrap().to_string()
}

#[tokio::test]
async fn health_and_meta() {
    let f = fixture(250_000);
    let (s, _, body) = get(&f.engine, "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json(&body)["status"], "ok");

    let (s, h, body) = get(&f.engine, "/api/v1/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    let meta = json(&body);
    assert_eq!(meta["model_fingerprint"], f.engine.fingerprint());
    assert_eq!(meta["feature_schema"].as_array().unwrap().len(), 18);
    assert_eq!(meta["eval"]["rows"].as_array().unwrap().len(), 3);
    assert!(meta["taxonomy"].as_array().unwrap().iter().any(|t| t == "fraud"));

    let tag = h[header::ETAG].to_str().unwrap().to_string();
    let (s, _, body) = get(&f.engine, "/api/v1/meta", Some(&tag)).await;
    assert_eq!(s, StatusCode::NOT_MODIFIED);
    assert!(body.is_empty());
    let (s, _, _) = get(&f.engine, "/api/v1/meta", Some("\"other\"")).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn cell_contract_and_errors() {
    let f = fixture(250_000);
    let code = inside_cell(&f.engine);
    let (s, h, body) = get(&f.engine, &format!("/api/v1/cell/{code}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let doc = json(&body);
    for key in [
        "geohash",
        "p_crime",
        "expected_fine_usd",
        "unconditional_fine_usd",
        "type_probs",
        "severity_histogram",
        "top_risks",
        "historical_records",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["geohash"], code.as_str());
    let hist: f64 = doc["severity_histogram"].as_array().unwrap().iter().map(|b| b["probability"].as_f64().unwrap()).sum();
    assert!((hist - 1.0).abs() < 1e-9);

    let tag = h[header::ETAG].to_str().unwrap();
    let (s, _, _) = get(&f.engine, &format!("/api/v1/cell/{code}"), Some(tag)).await;
    assert_eq!(s, StatusCode::NOT_MODIFIED);

    let (s, _, body) = get(&f.engine, "/api/v1/cell/!!bad!!", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"], "invalid_geohash");

    let (s, _, body) = get(&f.engine, "/api/v1/cell/s000000", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"], "outside_region");

    let (s, _, body) = get(&f.engine, "/api/v1/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"], "not_found");
}

#[tokio::test]
async fn cells_echo_their_incidents() {
    let f = fixture(250_000);
    let ds = riskgrid::dataset::Dataset::load(&f.data, Some(&f.engine.model().taxonomy), &Default::default(), None).unwrap();
    let inc = &ds.incidents[0];
    let code = encode(inc.location, 7).unwrap();
    let (s, _, body) = get(&f.engine, &format!("/api/v1/cell/{code}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let records = json(&body)["historical_records"].as_array().unwrap().clone();
    let expected = ds.incidents.iter().filter(|i| encode(i.location, 7).unwrap() == code).count();
    assert_eq!(records.len(), expected);
    assert!(records.iter().any(|r| r["id"] == inc.id.as_str()));
}

fn bbox_param(b: &BBox) -> String {
    format!("{},{},{},{}", b.min_lon(), b.min_lat(), b.max_lon(), b.max_lat())
}

fn check_geojson(body: &[u8]) -> geojson::FeatureCollection {
    let text = std::str::from_utf8(body).unwrap();
    let fc = match geojson::GeoJson::from_str(text).unwrap() {
        geojson::GeoJson::FeatureCollection(fc) => fc,
        other => panic!("not a FeatureCollection: {other:?}"),
    };
    for feature in &fc.features {
        let geom = feature.geometry.as_ref().expect("geometry");
        let geojson::Value::Polygon(rings) = &geom.value else { panic!("not a polygon") };
        assert_eq!(rings.len(), 1);
        let ring = &rings[0];
        assert_eq!(ring.len(), 5);
        assert_eq!(ring[0], ring[4]);
        let area: f64 = ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum();
        assert!(area > 0.0, "ring is not counter-clockwise");
        let props = feature.properties.as_ref().unwrap();
        for key in ["geohash", "p_crime", "expected_fine_usd"] {
            assert!(props.contains_key(key));
        }
    }
    fc
}

#[tokio::test]
async fn surface_contract() {
    let f = fixture(250_000);
    let region = f.engine.region();
    let c = region.center();
    let b = BBox::new(c.lat() - 0.004, c.lat() + 0.004, c.lon() - 0.006, c.lon() + 0.006).unwrap();
    let (s, h, body) = get(&f.engine, &format!("/api/v1/surface?bbox={}", bbox_param(&b)), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h[header::CONTENT_TYPE], "application/geo+json");
    let fc = check_geojson(&body);
    assert_eq!(fc.features.len() as u64, cover_count(&b, 7).unwrap());

    let (s, _, body) = get(&f.engine, &format!("/api/v1/surface?bbox={}&precision=6", bbox_param(&b)), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(check_geojson(&body).features.len() as u64, cover_count(&b, 6).unwrap());

    let doc = json(&body);
    let model = f.engine.model();
    for feat in doc["features"].as_array().unwrap() {
        let g = riskgrid::geogrid::Geohash::parse(feat["properties"]["geohash"].as_str().unwrap()).unwrap();
        let p = model.predict_cell(&f.engine.features(&g), &g).unwrap();
        assert_eq!(feat["properties"]["p_crime"].as_f64().unwrap(), p.p_crime);
    }

    let tiny = BBox::new(c.lat(), c.lat() + 1e-6, c.lon(), c.lon() + 1e-6).unwrap();
    let (_, _, body) = get(&f.engine, &format!("/api/v1/surface?bbox={}", bbox_param(&tiny)), None).await;
    assert_eq!(check_geojson(&body).features.len(), 1);
}

#[tokio::test]
async fn surface_errors() {
    let f = fixture(50);
    let region = f.engine.region();
    for (query, status, code) in [
        (String::new(), 400, "invalid_bbox"),
        ("bbox=1,2,3".to_string(), 400, "invalid_bbox"),
        ("bbox=10,5,0,6".to_string(), 400, "invalid_bbox"),
        (format!("bbox={}&precision=x", bbox_param(&region)), 400, "invalid_precision"),
        (format!("bbox={}&precision=13", bbox_param(&region)), 400, "invalid_precision"),
        (format!("bbox={}", bbox_param(&region)), 422, "cell_cap_exceeded"),
    ] {
        let (s, _, body) = get(&f.engine, &format!("/api/v1/surface?{query}"), None).await;
        assert_eq!(s.as_u16(), status, "{query}");
        assert_eq!(json(&body)["error"], code, "{query}");
    }
}

#[tokio::test]
async fn schema_mismatch_is_a_server_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _, model) = small_fixture(tmp.path());
    let ds = riskgrid::dataset::Dataset::load(&data, None, &Default::default(), None).unwrap();
    let mut sets: Vec<PoiSet> = ds.poi_sets.clone();
    sets[0].category = "bowling_alleys".into();
    let engine = Arc::new(Engine::new(model, &sets, ds.manifest.bbox, &[], 250_000).unwrap());
    assert!(engine.schema_error().is_some());
    let code = inside_cell(&engine);
    let (s, _, body) = get(&engine, &format!("/api/v1/cell/{code}"), None).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(json(&body)["error"], "schema_mismatch");
    let (_, _, body) = get(&engine, "/healthz", None).await;
    assert_eq!(json(&body)["status"], "degraded");
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("riskgrid").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn cli_usage_errors() {
    let (code, _, err) = run(&["train", "--bogus"]);
    assert_eq!(code, 2);
    assert!(err.contains("--bogus"));
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["synth", "train", "evaluate", "predict", "surface", "serve"] {
        assert!(out.contains(sub), "help lacks {sub}");
    }
    let (code, _, err) = run(&["evaluate", "--model", "/nonexistent/model.bin"]);
    assert_eq!(code, 1);
    let e: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(e["error"], "model_error");
}

#[test]
fn cli_synth_twice_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, common::SMALL_TOML).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&a)]).0, 0);
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&b)]).0, 0);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let c = tmp.path().join("c");
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&c), "--seed", "8"]).0, 0);
    assert_ne!(std::fs::read(a.join("incidents.csv")).unwrap(), std::fs::read(c.join("incidents.csv")).unwrap());
}

#[test]
fn cli_train_evaluate_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, common::SMALL_TOML).unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model.bin");
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&data)]).0, 0);
    let (code, out, err) = run(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&model), "--threads", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("M_crime") && out.contains("M_fine") && out.contains("M_type"));

    let (code, out, _) = run(&["evaluate", "--model", p(&model)]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4, "{out}");
    assert!(lines[0].contains("mean") && lines[0].contains("std"));
    let (_, out, _) = run(&["evaluate", "--model", p(&model), "--json"]);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);

    // Predicting a cell far from the training region still works.
    let (code, out, err) = run(&["predict", "--model", p(&model), "--data", p(&data), "--geohash", "kzzzzzz"]);
    assert_eq!(code, 0, "{err}");
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["geohash"], "kzzzzzz");
    assert!(doc["p_crime"].as_f64().unwrap() >= 0.0);

    let (code, _, err) = run(&["predict", "--model", p(&model), "--data", p(&data), "--geohash", "a!"]);
    assert_eq!(code, 1);
    assert!(err.contains("invalid_geohash"));
}

#[tokio::test]
async fn api_and_cli_agree() {
    let f = fixture(250_000);
    let region = f.engine.region();
    let mut r = rng(31);
    for _ in 0..25 {
        let pt = GeoPoint::new(
            r.random_range(region.min_lat()..region.max_lat()),
            r.random_range(region.min_lon()..region.max_lon()),
        )
        .unwrap();
        let code = encode(pt, 7).unwrap().to_string();
        let (s, _, body) = get(&f.engine, &format!("/api/v1/cell/{code}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let (exit, out, _) = run(&["predict", "--model", p(&f.model), "--data", p(&f.data), "--geohash", &code]);
        assert_eq!(exit, 0);
        let cli_doc: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json(&body), cli_doc);
        assert_eq!(predict_json(&f.engine, &code).unwrap(), cli_doc);
    }

    let c = region.center();
    let b = BBox::new(c.lat() - 0.003, c.lat() + 0.003, c.lon() - 0.004, c.lon() + 0.004).unwrap();
    let out_file = f._tmp.path().join("surface.geojson");
    let (exit, _, err) = run(&[
        "surface",
        "--model",
        p(&f.model),
        "--data",
        p(&f.data),
        &format!("--bbox={}", bbox_param(&b)),
        "--out",
        p(&out_file),
    ]);
    assert_eq!(exit, 0, "{err}");
    let cli_surface: Value = serde_json::from_slice(&std::fs::read(&out_file).unwrap()).unwrap();
    let (_, _, body) = get(&f.engine, &format!("/api/v1/surface?bbox={}", bbox_param(&b)), None).await;
    assert_eq!(json(&body), cli_surface);

    let ds = riskgrid::dataset::Dataset::load(&f.data, None, &Default::default(), None).unwrap();
    let direct = render_surface(f.engine.model(), &ds.poi_sets, b, 7, 250_000).unwrap();
    assert_eq!(surface_to_geojson(&direct), cli_surface);
}

#[test]
fn empty_surface_is_an_empty_collection() {
    let s = riskgrid::service::RiskSurface {
        precision: 7,
        bbox: BBox::new(0.0, 1.0, 0.0, 1.0).unwrap(),
        model_fingerprint: String::new(),
        cells: Vec::new(),
    };
    let doc = surface_to_geojson(&s);
    let fc = check_geojson(doc.to_string().as_bytes());
    assert!(fc.features.is_empty());
}

#[test]
fn one_cell_ring_is_its_box() {
    let g = riskgrid::geogrid::Geohash::parse("dr5ru7v").unwrap();
    let s = riskgrid::service::RiskSurface {
        precision: 7,
        bbox: g.bbox(),
        model_fingerprint: String::new(),
        cells: vec![riskgrid::service::SurfaceCell { geohash: g.clone(), p_crime: 0.5, expected_fine_usd: 1.0 }],
    };
    let doc = surface_to_geojson(&s);
    let ring = doc["features"][0]["geometry"]["coordinates"][0].as_array().unwrap();
    let b = g.bbox();
    let r6 = |v: f64| (v * 1e6).round() / 1e6;
    let corners = [
        (b.min_lon(), b.min_lat()),
        (b.max_lon(), b.min_lat()),
        (b.max_lon(), b.max_lat()),
        (b.min_lon(), b.max_lat()),
        (b.min_lon(), b.min_lat()),
    ];
    for (v, (lon, lat)) in ring.iter().zip(corners) {
        assert_eq!(v[0].as_f64().unwrap(), r6(lon));
        assert_eq!(v[1].as_f64().unwrap(), r6(lat));
    }
}

#[test]
fn all_negative_crime_model_stays_below_half() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _, mut model) = small_fixture(tmp.path());
    let ds = riskgrid::dataset::Dataset::load(&data, None, &Default::default(), None).unwrap();
    let f = riskgrid::features::Featurizer::new(&ds.poi_sets, model.features.config).unwrap();
    let grid = riskgrid::features::build_grid(ds.manifest.bbox, 7).unwrap();
    let x = f.featurize(&grid).rows;
    let params = *model.m_crime.params();
    model.m_crime = riskgrid::learn::fit_forest(&x, &vec![0; x.len()], 2, &params).unwrap();
    let s = render_surface(&model, &ds.poi_sets, ds.manifest.bbox, 7, 250_000).unwrap();
    assert_eq!(s.cells.len(), grid.len());
    assert!(s.cells.iter().all(|c| c.p_crime < 0.5));
}
