use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cayley_atlas::atlas::{AtlasConfig, Session, SteerCommand};
use cayley_atlas::cayley::SamplerConfig;
use cayley_atlas::io::load_problem;
use cayley_atlas::model::Problem;
use cayley_atlas::paths::{shortest_path, PathQueryConfig};
use cayley_atlas_server::{router, serve, AppState, AtlasView, NodeView, PathView, ServerError, SteerAck};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

fn toy() -> Arc<Problem> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy3.txt");
    Arc::new(load_problem(&path).unwrap().problem)
}

fn config(step: f64) -> AtlasConfig {
    AtlasConfig {
        sampler: SamplerConfig {
            step,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn fresh() -> (Arc<Session>, Router) {
    let session = Arc::new(Session::new(toy(), config(0.5)));
    let app = router(AppState::new(session.clone()));
    (session, app)
}

fn built() -> (Arc<Session>, Router) {
    let (session, app) = fresh();
    session.run();
    session.finalize();
    (session, app)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get<T: DeserializeOwned>(app: &Router, uri: &str) -> (StatusCode, Option<T>) {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).ok())
}

async fn post(app: &Router, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/steer")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, body) = call(app, req).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

#[tokio::test]
async fn empty_session_lists_only_roots() {
    let (session, app) = fresh();
    let (status, view) = get::<AtlasView>(&app, "/atlas").await;
    assert_eq!(status, StatusCode::OK);
    let view = view.unwrap();
    assert_eq!(view.total_nodes, session.atlas().read().unwrap().len());
    assert!(view.nodes.iter().all(|n| n.size == 1 && n.status == "Unsampled"));
    assert!(view.edges.is_empty());
    assert!(view.idle);
}

#[tokio::test]
async fn atlas_view_matches_roadmap() {
    let (session, app) = built();
    let rm = session.atlas().read().unwrap().roadmap();
    let view = get::<AtlasView>(&app, "/atlas").await.1.unwrap();
    assert_eq!(view.nodes.len(), rm.len());
    assert_eq!(view.edges.len(), rm.edge_count());
    for (n, e) in view.nodes.iter().zip(&rm.entries) {
        assert_eq!((n.id, &n.label, n.dim, n.evaluated, n.good), (e.id, &e.label, e.dim, e.evaluated, e.good));
    }
    let ids: Vec<usize> = view.nodes.iter().map(|n| n.id).collect();
    assert!(view.edges.iter().all(|[p, c]| ids.contains(p) && ids.contains(c)));
}

#[tokio::test]
async fn atlas_pages_are_self_consistent() {
    let (session, app) = built();
    let total = session.atlas().read().unwrap().len();
    let mut seen = 0;
    let mut offset = 0;
    while offset < total {
        let page = get::<AtlasView>(&app, &format!("/atlas?offset={offset}&limit=7")).await.1.unwrap();
        assert_eq!(page.total_nodes, total);
        assert!(page.nodes.len() <= 7);
        let ids: Vec<usize> = page.nodes.iter().map(|n| n.id).collect();
        assert!(page.edges.iter().all(|[p, c]| ids.contains(p) && ids.contains(c)));
        seen += page.nodes.len();
        offset += 7;
    }
    assert_eq!(seen, total);
    let past = get::<AtlasView>(&app, &format!("/atlas?offset={}", total + 5)).await.1.unwrap();
    assert!(past.nodes.is_empty());
}

#[tokio::test]
async fn long_poll_waits_for_a_newer_epoch() {
    let (session, app) = fresh();
    let epoch = session.atlas().read().unwrap().epoch();
    // nothing changes: returns after the wait with the same epoch
    let view = get::<AtlasView>(&app, &format!("/atlas?since={epoch}&wait_ms=60")).await.1.unwrap();
    assert_eq!(view.epoch, epoch);
    let s2 = session.clone();
    tokio::spawn(async move {
        tokio::time::sleep(Duration::from_millis(100)).await;
        s2.steer(SteerCommand::Limit { dim_floor: 0 }).unwrap();
    });
    let view = get::<AtlasView>(&app, &format!("/atlas?since={epoch}&wait_ms=5000")).await.1.unwrap();
    assert!(view.epoch > epoch);
}

#[tokio::test]
async fn node_views() {
    let (session, app) = built();
    let (vertex, edge_node, root) = {
        let shared = session.atlas();
        let atlas = shared.read().unwrap();
        let pick = |d: usize| {
            atlas
                .nodes()
                .iter()
                .find(|n| n.dim() == d && n.partial_3tree && n.good_samples() > 0)
                .unwrap()
                .id
        };
        (pick(0), pick(1), pick(5))
    };
    let problem = toy();

    let v = get::<NodeView>(&app, &format!("/node/{vertex}")).await.1.unwrap();
    assert!(v.params.is_empty() && v.ranges.is_empty());
    assert_eq!(v.points.len(), 1);
    assert!(v.points[0].values.is_empty());
    let placements: usize = v.sweep.iter().map(|f| f.placements.len()).sum();
    assert!(placements >= 1 && placements <= 8);
    // active pairs of every placement sit in their intervals
    let label_edges = cayley_atlas::acg::ActiveConstraintGraph::parse_label(&problem, &v.label).unwrap();
    for f in &v.sweep {
        for p in &f.placements {
            for e in label_edges.edges() {
                let a = problem.a.points[e.a].pos;
                let b = p.b[e.b];
                let d = ((a.x - b[0]).powi(2) + (a.y - b[1]).powi(2) + (a.z - b[2]).powi(2)).sqrt();
                let tol = 1e-6 * problem.scale();
                assert!(d >= problem.rho(*e) - tol && d <= problem.rho(*e) + problem.delta(*e) + tol);
            }
        }
    }

    let e = get::<NodeView>(&app, &format!("/node/{edge_node}")).await.1.unwrap();
    assert_eq!(e.params.len(), 1);
    assert_eq!(e.ranges.len(), 1);
    let grid: Vec<u32> = e.points.iter().filter(|p| !p.tags.contains(&"refined".to_string())).map(|p| p.grid[0]).collect();
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    assert!(e.points.iter().any(|p| p.tags.contains(&"witness".to_string())));

    let r = get::<NodeView>(&app, &format!("/node/{root}?offset=3&limit=10")).await.1.unwrap();
    assert_eq!(r.offset, 3);
    assert_eq!(r.points.len(), 10);
    assert_eq!(r.points[0].index, 3);
    assert!(r.total_samples > 13);
    assert_eq!(r.a.len(), 3);

    let (status, _) = get::<Value>(&app, "/node/99999").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get::<Value>(&app, "/node/abc").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unsampled_node_has_ranges_only() {
    let (_, app) = fresh();
    let v = get::<NodeView>(&app, "/node/0").await.1.unwrap();
    assert_eq!(v.status, "Unsampled");
    assert_eq!(v.dim, 5);
    assert_eq!(v.ranges.len(), 5);
    assert!(v.ranges.iter().all(|[lo, hi]| lo <= hi));
    assert!(v.points.is_empty() && v.sweep.is_empty());
}

#[tokio::test]
async fn steer_acks_and_errors() {
    let (session, app) = fresh();
    let (status, body) = post(&app, json!({"kind": "Stop"})).await;
    assert_eq!(status, StatusCode::OK);
    let ack: SteerAck = serde_json::from_value(body).unwrap();
    assert!(session.is_stopped());
    assert_eq!(ack.epoch, session.atlas().read().unwrap().epoch());

    let (status, _) = post(&app, json!({"kind": "Refine", "node": 999, "step": 0.1})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(&app, json!({"kind": "Redirect", "node": 999})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(&app, json!({"kind": "Refine", "node": 0, "step": -1.0})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post(&app, json!({"kind": "Limit", "dim_floor": 9})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post(&app, json!({"kind": "Teleport"})).await;
    assert!(status.is_client_error());

    // a client that saw the first steer conflicts after a newer one
    let (_, second) = post(&app, json!({"kind": "Resume", "last_steer": ack.epoch})).await;
    let second: SteerAck = serde_json::from_value(second).unwrap();
    let (status, _) = post(&app, json!({"kind": "Stop", "last_steer": ack.epoch})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = post(&app, json!({"kind": "Stop", "last_steer": second.epoch})).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn path_queries() {
    let (session, app) = built();
    let rm = session.atlas().read().unwrap().roadmap();
    let zero = rm.ids_of_dim(0);
    let (s, d) = (zero[0], zero[zero.len() - 1]);
    let view = get::<PathView>(&app, &format!("/paths?src={s}&dst={d}")).await.1.unwrap();
    assert_eq!(view.path, shortest_path(&rm, s, d, &PathQueryConfig::default()).unwrap());
    let (status, _) = get::<Value>(&app, &format!("/paths?src={s}&dst=99999")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let higher = rm.ids_of_dim(1)[0];
    let (status, _) = get::<Value>(&app, &format!("/paths?src={s}&dst={higher}")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get::<Value>(&app, &format!("/paths?src={s}&dst={d}&max_dim=9")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_run_grows_and_obeys_steering() {
    let session = Arc::new(Session::new(toy(), config(0.25)));
    let app = router(AppState::new(session.clone()));
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let sampler = {
        let (session, stop) = (session.clone(), stop.clone());
        std::thread::spawn(move || session.serve(|| stop.load(std::sync::atomic::Ordering::Relaxed)))
    };
    let mut counts = Vec::new();
    let mut epoch = 0;
    loop {
        let v = get::<AtlasView>(&app, &format!("/atlas?since={epoch}&wait_ms=2000")).await.1.unwrap();
        counts.push(v.total_nodes);
        epoch = v.epoch;
        if v.idle && v.nodes.iter().all(|n| n.status != "Unsampled" && n.status != "Sampling") {
            break;
        }
    }
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");

    let root = get::<NodeView>(&app, "/node/0").await.1.unwrap();
    let before = root.total_samples;
    let (status, _) = post(&app, json!({"kind": "Refine", "node": 0, "step": 0.125})).await;
    assert_eq!(status, StatusCode::OK);
    let mut after = before;
    for _ in 0..200 {
        tokio::time::sleep(Duration::from_millis(50)).await;
        let v = get::<NodeView>(&app, "/node/0?limit=1").await.1.unwrap();
        if v.status == "Complete" || v.status == "NonGeneric" {
            after = v.total_samples;
            if after != before {
                break;
            }
        }
    }
    assert!(after > before, "{before} -> {after}");
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    sampler.join().unwrap();
}

#[tokio::test]
async fn limit_before_sampling_bounds_dimensions() {
    let (session, app) = fresh();
    let (status, _) = post(&app, json!({"kind": "Limit", "dim_floor": 3})).await;
    assert_eq!(status, StatusCode::OK);
    session.run();
    let view = get::<AtlasView>(&app, "/atlas").await.1.unwrap();
    assert!(view.nodes.iter().all(|n| n.dim >= 3));
    assert!(view.nodes.iter().any(|n| n.dim == 3));
}

#[tokio::test]
async fn serve_reports_port_in_use() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    let session = Arc::new(Session::new(toy(), config(0.5)));
    let err = serve(session, addr, async {}).await.unwrap_err();
    assert!(matches!(err, ServerError::PortInUse(p) if p == addr.port()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serve_answers_over_tcp() {
    let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = probe.local_addr().unwrap();
    drop(probe);
    let session = Arc::new(Session::new(toy(), config(0.5)));
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(session.clone(), addr, async {
        rx.await.ok();
    }));
    let mut stream = None;
    for _ in 0..100 {
        if let Ok(s) = tokio::net::TcpStream::connect(addr).await {
            stream = Some(s);
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let mut stream = stream.expect("server accepts connections");
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /atlas?limit=1 HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).await.unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    assert!(text.contains("\"total_nodes\""));
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
    assert!(session.is_stopped());
}
