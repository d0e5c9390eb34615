//! JSON over HTTP views of a live atlas and its steering commands.
//!
//! Sampling runs on its own thread through [`Session::serve`]; handlers only
//! take short read locks on the atlas or queue commands with the session.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cayley_atlas::atlas::{Atlas, Session, SteerCommand, SteerError, WitnessKind};
use cayley_atlas::paths::{shortest_path, PathError, PathQueryConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nodes per `/atlas` page when no limit is given.
pub const PAGE_SIZE: usize = 10_000;
/// Samples per `/node` page when no limit is given.
pub const NODE_PAGE_SIZE: usize = 2_000;
const DEFAULT_WAIT_MS: u64 = 25_000;
const MAX_WAIT_MS: u64 = 60_000;
const POLL_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("port {0} is in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    session: Arc<Session>,
    /// Epoch returned by the most recent successful steer.
    last_steer: AtomicU64,
}

impl AppState {
    pub fn new(session: Arc<Session>) -> Arc<Self> {
        Arc::new(Self {
            session,
            last_steer: AtomicU64::new(0),
        })
    }

    pub fn session(&self) -> &Arc<Session> {
        &self.session
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/atlas", get(atlas_view))
        .route("/node/{id}", get(node_view))
        .route("/steer", post(steer))
        .route("/paths", get(paths))
        .with_state(state)
}

/// Run sampling and the HTTP API until `shutdown` resolves.
pub async fn serve(
    session: Arc<Session>,
    addr: SocketAddr,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServerError::PortInUse(addr.port()),
        _ => ServerError::Io(e),
    })?;
    log::info!("listening on {}", listener.local_addr()?);
    let stop = Arc::new(AtomicBool::new(false));
    let sampler = {
        let session = session.clone();
        let stop = stop.clone();
        std::thread::spawn(move || session.serve(|| stop.load(Ordering::Relaxed)))
    };
    let result = axum::serve(listener, router(AppState::new(session.clone())))
        .with_graceful_shutdown(shutdown)
        .await;
    stop.store(true, Ordering::Relaxed);
    session.steer(SteerCommand::Stop).ok();
    sampler.join().ok();
    session.finalize();
    result.map_err(ServerError::Io)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(ErrorBody { error: msg.to_string() })).into_response()
}

// ---------------------------------------------------------------------------
// GET /atlas

#[derive(Debug, Default, Deserialize)]
pub struct AtlasQuery {
    /// Wait until the epoch exceeds this value.
    pub since: Option<u64>,
    pub wait_ms: Option<u64>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeSummary {
    pub id: usize,
    pub label: String,
    pub dim: usize,
    pub size: usize,
    pub status: String,
    pub evaluated: usize,
    pub samples: usize,
    pub good: usize,
    pub witnesses: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AtlasView {
    pub epoch: u64,
    pub idle: bool,
    pub stopped: bool,
    pub total_nodes: usize,
    pub offset: usize,
    pub nodes: Vec<NodeSummary>,
    /// `[parent, child]` pairs with both ends in `nodes`.
    pub edges: Vec<[usize; 2]>,
}

fn atlas_snapshot(session: &Session, offset: usize, limit: usize) -> AtlasView {
    let (idle, stopped) = (session.is_idle(), session.is_stopped());
    let shared = session.atlas();
    let atlas = shared.read().unwrap();
    let end = offset.saturating_add(limit).min(atlas.len());
    let page = atlas.nodes().get(offset..end).unwrap_or(&[]);
    let nodes = page
        .iter()
        .map(|n| NodeSummary {
            id: n.id,
            label: atlas.label(n.id),
            dim: n.dim(),
            size: n.graph.len(),
            status: n.status.to_string(),
            evaluated: n.evaluated,
            samples: n.samples.len(),
            good: n.good_samples(),
            witnesses: n.witnesses.len(),
        })
        .collect();
    let in_page = |id: usize| id >= offset && id < end;
    let edges = page
        .iter()
        .flat_map(|n| n.children.iter().filter(|c| in_page(**c)).map(move |c| [n.id, *c]))
        .collect();
    AtlasView {
        epoch: atlas.epoch(),
        idle,
        stopped,
        total_nodes: atlas.len(),
        offset,
        nodes,
        edges,
    }
}

async fn atlas_view(State(state): State<Arc<AppState>>, Query(q): Query<AtlasQuery>) -> Json<AtlasView> {
    if let Some(since) = q.since {
        let wait = Duration::from_millis(q.wait_ms.unwrap_or(DEFAULT_WAIT_MS).min(MAX_WAIT_MS));
        let deadline = tokio::time::Instant::now() + wait;
        while state.session.atlas().read().unwrap().epoch() <= since && tokio::time::Instant::now() < deadline {
            tokio::time::sleep(POLL_INTERVAL).await;
        }
    }
    let limit = q.limit.unwrap_or(PAGE_SIZE).clamp(1, PAGE_SIZE);
    Json(atlas_snapshot(&state.session, q.offset.unwrap_or(0), limit))
}

// ---------------------------------------------------------------------------
// GET /node/{id}

#[derive(Debug, Default, Deserialize)]
pub struct NodeQuery {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PointView {
    pub index: usize,
    pub values: Vec<f64>,
    pub grid: Vec<u32>,
    pub flips: Vec<u8>,
    /// Any of `boundary`, `witness`, `refined`.
    pub tags: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WitnessView {
    pub parent: usize,
    pub kind: String,
    pub values: Vec<f64>,
    pub flip: u8,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Placement {
    /// Index of the sample this placement realizes.
    pub sample: usize,
    pub b: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FlipSweep {
    pub flip: u8,
    pub placements: Vec<Placement>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeView {
    pub id: usize,
    pub label: String,
    pub dim: usize,
    pub status: String,
    pub epoch: u64,
    pub parents: Vec<usize>,
    pub children: Vec<usize>,
    /// Cayley parameter labels, in sweep order.
    pub params: Vec<String>,
    /// Range of each parameter with the earlier ones at the midpoints of
    /// their ranges; empty when the region has no chart.
    pub ranges: Vec<[f64; 2]>,
    pub total_samples: usize,
    pub offset: usize,
    pub points: Vec<PointView>,
    pub witnesses: Vec<WitnessView>,
    /// Fixed A positions, for drawing placements against.
    pub a: Vec<[f64; 3]>,
    pub sweep: Vec<FlipSweep>,
}

fn arr(v: &cayley_atlas::geometry::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn node_snapshot(atlas: &Atlas, id: usize, offset: usize, limit: usize) -> Option<NodeView> {
    let problem = atlas.problem();
    let node = atlas.node(id)?;
    let chart = node.chart(problem);
    let mut ranges = Vec::new();
    if let Some(c) = &chart {
        let mut prefix = Vec::new();
        for i in 0..c.dim() {
            let Some((lo, hi)) = c.parameter_range(i, &prefix) else { break };
            ranges.push([lo, hi]);
            prefix.push(0.5 * (lo + hi));
        }
    }
    let params = match &chart {
        Some(c) => c.params.iter().map(|p| problem.pair_label(*p)).collect(),
        None => Vec::new(),
    };
    let end = offset.saturating_add(limit).min(node.samples.len());
    let page = node.samples.get(offset..end).unwrap_or(&[]);
    let mut points = Vec::with_capacity(page.len());
    let mut sweep: Vec<FlipSweep> = Vec::new();
    for (k, s) in page.iter().enumerate() {
        let index = offset + k;
        let tags = [("boundary", s.boundary), ("witness", s.witness), ("refined", s.refined)]
            .iter()
            .filter(|(_, on)| *on)
            .map(|(t, _)| t.to_string())
            .collect();
        points.push(PointView {
            index,
            values: s.values.clone(),
            grid: s.grid.clone(),
            flips: s.flip_list().collect(),
            tags,
        });
        for (flip, t) in node.poses(chart.as_ref(), s) {
            let placement = Placement {
                sample: index,
                b: problem.b_positions(&t).iter().map(arr).collect(),
            };
            match sweep.iter_mut().find(|f| f.flip == flip) {
                Some(f) => f.placements.push(placement),
                None => sweep.push(FlipSweep {
                    flip,
                    placements: vec![placement],
                }),
            }
        }
    }
    sweep.sort_by_key(|f| f.flip);
    Some(NodeView {
        id,
        label: atlas.label(id),
        dim: node.dim(),
        status: node.status.to_string(),
        epoch: atlas.epoch(),
        parents: node.parents.iter().copied().collect(),
        children: node.children.iter().copied().collect(),
        params,
        ranges,
        total_samples: node.samples.len(),
        offset,
        points,
        witnesses: node
            .witnesses
            .iter()
            .map(|w| WitnessView {
                parent: w.parent,
                kind: match w.kind {
                    WitnessKind::Hit => "hit",
                    WitnessKind::Closure => "closure",
                }
                .into(),
                values: w.values.clone(),
                flip: w.flip,
            })
            .collect(),
        a: problem.a.points.iter().map(|p| arr(&p.pos)).collect(),
        sweep,
    })
}

async fn node_view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<usize>,
    Query(q): Query<NodeQuery>,
) -> Response {
    let shared = state.session.atlas();
    let atlas = shared.read().unwrap();
    let limit = q.limit.unwrap_or(NODE_PAGE_SIZE).max(1);
    match node_snapshot(&atlas, id, q.offset.unwrap_or(0), limit) {
        Some(v) => Json(v).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown node {id}")),
    }
}

// ---------------------------------------------------------------------------
// POST /steer

#[derive(Debug, Serialize, Deserialize)]
pub struct SteerRequest {
    #[serde(flatten)]
    pub command: SteerCommand,
    /// Epoch of the last steer the client saw; a newer steer by someone
    /// else makes the request conflict.
    #[serde(default)]
    pub last_steer: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SteerAck {
    pub epoch: u64,
}

async fn steer(State(state): State<Arc<AppState>>, Json(req): Json<SteerRequest>) -> Response {
    let last = state.last_steer.load(Ordering::SeqCst);
    if req.last_steer.is_some_and(|seen| seen < last) {
        return (
            StatusCode::CONFLICT,
            Json(ErrorBody {
                error: format!("another steer was applied at epoch {last}"),
            }),
        )
            .into_response();
    }
    match state.session.steer(req.command) {
        Ok(epoch) => {
            state.last_steer.fetch_max(epoch, Ordering::SeqCst);
            Json(SteerAck { epoch }).into_response()
        }
        Err(e @ SteerError::UnknownNode(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

// ---------------------------------------------------------------------------
// GET /paths

#[derive(Debug, Deserialize)]
pub struct PathsQuery {
    pub src: usize,
    pub dst: usize,
    pub max_dim: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PathView {
    pub src: usize,
    pub dst: usize,
    /// Node ids from `src` to `dst`; `None` when they are not connected.
    pub path: Option<Vec<usize>>,
}

async fn paths(State(state): State<Arc<AppState>>, Query(q): Query<PathsQuery>) -> Response {
    let rm = state.session.atlas().read().unwrap().roadmap();
    let cfg = PathQueryConfig {
        max_dim: q.max_dim.unwrap_or(PathQueryConfig::default().max_dim),
    };
    match shortest_path(&rm, q.src, q.dst, &cfg) {
        Ok(path) => Json(PathView {
            src: q.src,
            dst: q.dst,
            path,
        })
        .into_response(),
        Err(e @ PathError::UnknownNode(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}
