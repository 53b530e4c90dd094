//! The `/v1` HTTP protocol.
//!
//! Every mutation goes through [`App::commit`]: the writer mutex serializes
//! appends, readers take the state lock and never wait on `fsync`.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError, RwLock, RwLockReadGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use arena_core::ingest::{load_manifest, Event, EventLog, LoggedEvent, Manifest, ScheduleBatch};
use arena_core::metrics::{load_scorer_file, AssetScores};
use arena_core::rating::{Leaderboard, RankBy};
use arena_core::scheduler::{next_battle, pack_session, reveal, sample_battles, Session, SessionSpec, Side};
use arena_core::{
    AbsoluteScore, ArenaError, ArenaState, BoardKey, ComparisonVote, Dimension, Modality, Track, ViewKind, VoteChoice,
    VoteSource,
};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::report::{expert_votes, load_gold_scores, metric_reports, metrics_to_text, validation_summary, GoldScores};
use crate::store::{append_checked, Store};

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError { status, code, message: message.into(), field: field.map(String::from) }
    }

    fn bad_request(field: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid", message, Some(field))
    }
}

impl From<ArenaError> for ApiError {
    fn from(e: ArenaError) -> Self {
        let field = e.field().map(String::from);
        let (status, code) = match &e {
            ArenaError::Invalid { .. } => (StatusCode::BAD_REQUEST, "invalid"),
            ArenaError::Format { .. } | ArenaError::Json(_) => (StatusCode::BAD_REQUEST, "malformed"),
            ArenaError::UnknownIds { .. } => (StatusCode::NOT_FOUND, "not_found"),
            ArenaError::Duplicate { .. } => (StatusCode::CONFLICT, "duplicate"),
            ArenaError::Capacity { .. } => (StatusCode::CONFLICT, "capacity"),
            ArenaError::Exhausted(_) => (StatusCode::GONE, "session_complete"),
            ArenaError::Denied(_) => (StatusCode::FORBIDDEN, "denied"),
            ArenaError::Mismatch(_) => (StatusCode::INTERNAL_SERVER_ERROR, "mismatch"),
            ArenaError::Config(_) | ArenaError::Diverged { .. } | ArenaError::Io { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError { status, code, message: e.to_string(), field }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct App {
    writer: Mutex<EventLog>,
    state: RwLock<ArenaState>,
    pub config: Config,
    scorers: Vec<(String, AssetScores)>,
    gold_scores: GoldScores,
}

impl App {
    /// Opens the log (truncating a torn tail), merges the configured catalog
    /// and loads scorer files.
    pub fn open(config: Config) -> arena_core::Result<App> {
        let (mut store, recovery) = Store::open(&config.log, config.sync_policy()?, config.both_bad_policy()?)?;
        tracing::info!(
            records = recovery.records,
            truncated_bytes = recovery.truncated_bytes,
            "opened event log {}",
            config.log.display()
        );
        if let Some(path) = &config.catalog {
            let added = store.merge_catalog(&load_manifest(path)?)?;
            tracing::info!(added, "merged catalog {}", path.display());
        }
        let mut scorers = Vec::new();
        for path in &config.scorers {
            let f = load_scorer_file(path)?;
            scorers.push((f.scorer.clone(), f.asset_scores()?));
        }
        let gold_scores = match &config.gold_scores {
            Some(p) => load_gold_scores(p)?,
            None => GoldScores::new(),
        };
        Ok(App {
            writer: Mutex::new(store.log),
            state: RwLock::new(store.state),
            config,
            scorers,
            gold_scores,
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, ArenaState> {
        self.state.read().unwrap_or_else(PoisonError::into_inner)
    }

    /// Appends events in order under the writer lock. `build` sees the state
    /// as of the next sequence number.
    fn commit<T>(
        &self,
        build: impl FnOnce(&ArenaState, u64) -> arena_core::Result<(Vec<Event>, T)>,
    ) -> arena_core::Result<(Vec<u64>, T)> {
        let mut log = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let (events, out) = build(&self.read(), log.last_seq() + 1)?;
        let mut seqs = Vec::with_capacity(events.len());
        for event in events {
            let seq_no = append_checked(&mut log, &self.read(), &event)?;
            self.state
                .write()
                .unwrap_or_else(PoisonError::into_inner)
                .apply(&LoggedEvent { seq_no, event })?;
            seqs.push(seq_no);
        }
        Ok((seqs, out))
    }
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(open_session))
        .route("/v1/sessions/{session_id}/next", get(next))
        .route("/v1/sessions/{session_id}/reveal/{pair_id}", get(reveal_pair))
        .route("/v1/votes", post(submit_vote))
        .route("/v1/scores", post(submit_score))
        .route("/v1/leaderboard", get(leaderboard))
        .route("/v1/leaderboard/verify", get(verify))
        .route("/v1/reports/validation", get(validation_report))
        .route("/v1/reports/metrics", get(metrics_report))
        .route("/v1/admin/catalog", post(admin_catalog).layer(DefaultBodyLimit::max(512 << 20)))
        .route("/v1/renders/{pair_id}/prompt", get(prompt_image))
        .route("/v1/renders/{pair_id}/{side}/{view}", get(render))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", None) })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed here", None)
        })
        .with_state(app)
}

/// Binds, prints `listening on <addr>` to stdout and serves until Ctrl-C.
pub async fn serve(config: Config) -> arena_core::Result<()> {
    let bind = config.bind.clone();
    let app = Arc::new(tokio::task::spawn_blocking(move || App::open(config)).await.expect("open task")?);
    let listener = tokio::net::TcpListener::bind(&bind).await.map_err(|e| ArenaError::io(&bind, e))?;
    let addr = listener.local_addr().map_err(|e| ArenaError::io(&bind, e))?;
    println!("listening on {addr}");
    use std::io::Write;
    let _ = std::io::stdout().flush();
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ArenaError::io(&bind, e))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None))
    })
}

fn annotator(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .ok_or_else(|| ApiError::bad_request(ANNOTATOR_HEADER, "missing annotator id header"))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed", format!("request body: {e}"), Some("body")))
}

/// Parses a query value through the same names the JSON bodies use.
fn named<T: DeserializeOwned>(field: &str, value: &str) -> ApiResult<T> {
    serde_json::from_value(Value::String(value.to_string()))
        .map_err(|_| ApiError::bad_request(field, format!("unknown {field} '{value}'")))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn owned_session<'a>(state: &'a ArenaState, session_id: &str, who: &str) -> arena_core::Result<&'a Session> {
    let s = state
        .sessions
        .get(session_id)
        .ok_or_else(|| ArenaError::UnknownIds { kind: "session", ids: vec![session_id.to_string()] })?;
    if s.spec.annotator_id != who {
        return Err(ArenaError::Denied(format!("session '{session_id}' belongs to another annotator")));
    }
    Ok(s)
}

async fn health(State(app): State<Arc<App>>) -> Json<Value> {
    let s = app.read();
    Json(json!({
        "status": "ok",
        "last_seq": s.last_seq,
        "state_hash": s.state_hash(),
        "leaderboard_version": s.leaderboard_version,
        "votes": s.votes.len(),
        "sessions": s.sessions.len(),
    }))
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum SessionRequest {
    /// Fresh battles sampled from one track.
    Arena { track: Track, size: Option<usize> },
    /// An expert annotation pack.
    Pack { pack_id: String },
}

async fn open_session(State(app): State<Arc<App>>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    let who = annotator(&headers)?;
    let req: SessionRequest = body(&bytes)?;
    blocking(move || {
        let default_size = app.config.arena_session_size;
        let (_, spec) = app.commit(|state, seq| {
            let (mut events, spec) = match req {
                SessionRequest::Arena { track, size } => {
                    let n = size.unwrap_or(default_size);
                    if n == 0 {
                        return Err(ArenaError::invalid("size", "a session needs at least one battle"));
                    }
                    let mut pairs = sample_battles(&state.catalog.track_subset(track)?, n, seq)?;
                    for (i, p) in pairs.iter_mut().enumerate() {
                        p.pair_id = format!("arena-{seq}-{:03}", i + 1);
                    }
                    let spec = SessionSpec {
                        session_id: format!("session-{}", seq + 1),
                        annotator_id: who,
                        pack_id: None,
                        pair_ids: pairs.iter().map(|p| p.pair_id.clone()).collect(),
                        source: VoteSource::Arena,
                    };
                    (vec![Event::Schedule(ScheduleBatch { pairs, packs: Vec::new() })], spec)
                }
                SessionRequest::Pack { pack_id } => {
                    (Vec::new(), pack_session(&state.packs, &pack_id, format!("session-{seq}"), who)?)
                }
            };
            events.push(Event::SessionOpened(spec.clone()));
            Ok((events, spec))
        })?;
        Ok(Json(json!({
            "session_id": spec.session_id,
            "total": spec.pair_ids.len(),
            "source": spec.source,
        })))
    })
    .await
}

async fn next(
    State(app): State<Arc<App>>,
    UrlPath(session_id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    let who = annotator(&headers)?;
    let state = app.read();
    let session = owned_session(&state, &session_id, &who)?;
    let battle = next_battle(session, &state.catalog, &state.pairs)?;
    Ok(Json(serde_json::to_value(battle).map_err(ArenaError::from)?))
}

async fn reveal_pair(
    State(app): State<Arc<App>>,
    UrlPath((session_id, pair_id)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    let who = annotator(&headers)?;
    let state = app.read();
    let session = owned_session(&state, &session_id, &who)?;
    let r = reveal(session, &pair_id, &state.catalog, &state.pairs)?;
    Ok(Json(serde_json::to_value(r).map_err(ArenaError::from)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteRequest {
    session_id: String,
    pair_id: String,
    choices: BTreeMap<Dimension, VoteChoice>,
}

async fn submit_vote(State(app): State<Arc<App>>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    let who = annotator(&headers)?;
    let req: VoteRequest = body(&bytes)?;
    blocking(move || {
        let (seqs, ()) = app.commit(|state, _| {
            let session = owned_session(state, &req.session_id, &who)?;
            let current = session
                .cursor()
                .map(|i| session.spec.pair_ids[i].as_str())
                .ok_or_else(|| ArenaError::Exhausted(req.session_id.clone()))?;
            if current != req.pair_id {
                return Err(ArenaError::invalid(
                    "pair_id",
                    format!("the session's current battle is '{current}', not '{}'", req.pair_id),
                ));
            }
            let vote = ComparisonVote {
                pair_id: req.pair_id,
                annotator_id: who,
                choices: req.choices,
                timestamp: now_ms(),
                source: session.spec.source,
            };
            Ok((vec![Event::Vote(vote)], ()))
        })?;
        let version = app.read().leaderboard_version;
        Ok(Json(json!({ "seq_no": seqs[0], "leaderboard_version": version })))
    })
    .await
}

async fn submit_score(State(app): State<Arc<App>>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    let who = annotator(&headers)?;
    let score: AbsoluteScore = body(&bytes)?;
    if score.annotator_id != who {
        return Err(ApiError::bad_request("annotator_id", "annotator_id does not match the request header"));
    }
    blocking(move || {
        let (seqs, ()) = app.commit(|_, _| Ok((vec![Event::Score(score)], ())))?;
        Ok(Json(json!({ "seq_no": seqs[0] })))
    })
    .await
}

#[derive(Deserialize)]
struct BoardQuery {
    source: Option<String>,
    track: Option<String>,
    dimension: Option<String>,
    validated: Option<bool>,
    format: Option<String>,
}

enum Format {
    Json,
    Text,
}

fn format_of(f: &Option<String>) -> ApiResult<Format> {
    match f.as_deref() {
        None | Some("json") => Ok(Format::Json),
        Some("text") => Ok(Format::Text),
        Some(other) => Err(ApiError::bad_request("format", format!("unknown format '{other}'"))),
    }
}

fn text(s: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], s).into_response()
}

async fn leaderboard(State(app): State<Arc<App>>, Query(q): Query<BoardQuery>) -> ApiResult<Response> {
    let source: VoteSource = named("source", q.source.as_deref().unwrap_or("expert_pack"))?;
    let track: Track = named("track", q.track.as_deref().unwrap_or("text_to_3d"))?;
    let by: RankBy = q
        .dimension
        .as_deref()
        .unwrap_or("average")
        .parse()
        .map_err(|_| ApiError::bad_request("dimension", "expected 'average' or a dimension name"))?;
    let fmt = format_of(&q.format)?;
    let validated = q.validated.unwrap_or(false);
    blocking(move || {
        let state = app.read();
        let key = BoardKey { source, track };
        let table = if validated {
            state.validated_table(key, &state.validate_votes(&app.config.thresholds)?)?
        } else {
            state.live_table(key)
        };
        let board = Leaderboard::from_table(&table, by, &state.display_names());
        Ok(match fmt {
            Format::Text => text(board.to_text()),
            Format::Json => Json(json!({
                "version": state.leaderboard_version,
                "source": source,
                "track": track,
                "validated": validated,
                "ranked_by": board.ranked_by,
                "rows": board.rows,
            }))
            .into_response(),
        })
    })
    .await
}

async fn verify(State(app): State<Arc<App>>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let boards = app.read().verify_leaderboards()?;
        Ok(Json(json!({ "ok": true, "boards": boards })))
    })
    .await
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
    track: Option<String>,
    binarized: Option<bool>,
}

async fn validation_report(State(app): State<Arc<App>>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let fmt = format_of(&q.format)?;
    blocking(move || {
        let s = validation_summary(&app.read(), &app.config.thresholds, &app.gold_scores)?;
        Ok(match fmt {
            Format::Json => Json(&s).into_response(),
            Format::Text => text(s.to_text()),
        })
    })
    .await
}

async fn metrics_report(State(app): State<Arc<App>>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let fmt = format_of(&q.format)?;
    let track: Track = named("track", q.track.as_deref().unwrap_or("text_to_3d"))?;
    let binarized = q.binarized.unwrap_or(false);
    blocking(move || {
        let state = app.read();
        let votes = expert_votes(&state, &app.config.thresholds, track)?;
        let (alignment, tau) = metric_reports(&state, &app.scorers, &votes, track, binarized)?;
        Ok(match fmt {
            Format::Json => Json(json!({
                "track": track,
                "binarized": binarized,
                "votes": votes.len(),
                "alignment": alignment,
                "kendall_tau": tau,
            }))
            .into_response(),
            Format::Text => text(metrics_to_text(&alignment, &tau)),
        })
    })
    .await
}

async fn admin_catalog(State(app): State<Arc<App>>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let manifest: Manifest = body(&bytes)?;
    blocking(move || {
        let (seqs, ()) = app.commit(|state, _| {
            let changes = state.catalog.diff(&manifest)?;
            Ok((changes.into_iter().map(Event::Catalog).collect(), ()))
        })?;
        Ok(Json(json!({ "appended": seqs.len() })))
    })
    .await
}

/// Joins a catalog-relative reference under the render root, refusing
/// absolute paths and parent components.
fn under_root(root: &Path, reference: &str) -> Option<PathBuf> {
    let rel = Path::new(reference);
    rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)).then(|| root.join(rel))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("mp4") => "video/mp4",
        Some("webm") => "video/webm",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

/// Streams a file. Failures never echo the path, which names the asset.
async fn send_file(path: Option<PathBuf>) -> ApiResult<Response> {
    let missing = || ApiError::new(StatusCode::NOT_FOUND, "not_found", "render not available", None);
    let path = path.ok_or_else(missing)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, content_type(&path)), (header::CACHE_CONTROL, "no-store")], bytes).into_response())
}

async fn render(
    State(app): State<Arc<App>>,
    UrlPath((pair_id, side, view)): UrlPath<(String, String, String)>,
) -> ApiResult<Response> {
    let side: Side = named("side", &side)?;
    let view: ViewKind = view.parse()?;
    let path = {
        let state = app.read();
        let pair = state
            .pairs
            .get(&pair_id)
            .ok_or_else(|| ArenaError::UnknownIds { kind: "pair", ids: vec![pair_id.clone()] })?;
        let asset_id = match side {
            Side::Left => &pair.left_asset_id,
            Side::Right => &pair.right_asset_id,
        };
        let asset = state.catalog.assets.get(asset_id);
        asset.and_then(|a| a.render_refs.get(&view)).and_then(|r| under_root(&app.config.render_root, r))
    };
    send_file(path).await
}

async fn prompt_image(State(app): State<Arc<App>>, UrlPath(pair_id): UrlPath<String>) -> ApiResult<Response> {
    let path = {
        let state = app.read();
        let pair = state
            .pairs
            .get(&pair_id)
            .ok_or_else(|| ArenaError::UnknownIds { kind: "pair", ids: vec![pair_id.clone()] })?;
        let prompt = state.catalog.prompt(&pair.prompt_id)?;
        if prompt.modality != Modality::Image {
            return Err(ApiError::bad_request("pair_id", "this battle has a text prompt"));
        }
        under_root(&app.config.render_root, &prompt.content_ref)
    };
    send_file(path).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_paths_stay_under_root() {
        let root = Path::new("/srv/renders");
        assert_eq!(under_root(root, "a/b.mp4"), Some(root.join("a/b.mp4")));
        assert_eq!(under_root(root, "../etc/passwd"), None);
        assert_eq!(under_root(root, "/etc/passwd"), None);
    }

    #[test]
    fn error_mapping() {
        let e: ApiError = ArenaError::Denied("no".into()).into();
        assert_eq!((e.status, e.code), (StatusCode::FORBIDDEN, "denied"));
        let e: ApiError = ArenaError::invalid("choices", "missing texture").into();
        assert_eq!((e.status, e.field.as_deref()), (StatusCode::BAD_REQUEST, Some("choices")));
    }
}
