//! Local HTTP API over a scan result and its triage store.
//!
//! Every JSON body carries `"schema": 1`. The corpus and the scan result are
//! only read; the triage store is the single write path.

use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use vscan_core::metrics::compute_for;
use vscan_core::report::parse_structured;
use vscan_core::triage::{apply_triage, TriageError, TriageState, TriageStore, ViewEntry};
use vscan_core::{DensityKind, ScanResult, Severity};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8641;
const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_PAGE_SIZE: usize = 1000;
const MAX_CONTEXT: usize = 200;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub result_path: PathBuf,
    pub triage_path: PathBuf,
    /// Where source excerpts are read from; defaults to the scan's root.
    pub source_root: Option<PathBuf>,
    /// Static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
    pub addr: SocketAddr,
    pub density_kind: DensityKind,
    /// Density over open findings only instead of all findings.
    pub density_open_only: bool,
}

impl ServeConfig {
    pub fn new(result_path: impl Into<PathBuf>, triage_path: impl Into<PathBuf>) -> Self {
        ServeConfig {
            result_path: result_path.into(),
            triage_path: triage_path.into(),
            source_root: None,
            ui_dir: None,
            addr: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), DEFAULT_PORT),
            density_kind: DensityKind::default(),
            density_open_only: false,
        }
    }
}

type Cached = (SystemTime, u64, Arc<ScanResult>);

struct AppState {
    cfg: ServeConfig,
    result: Mutex<Option<Cached>>,
    /// Serializes writers inside this process; the store's file lock
    /// covers other processes.
    write_lock: Mutex<()>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "schema": SCHEMA_VERSION, "error": self.message })),
        )
            .into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn ok(mut body: Value) -> ApiResult {
    body.as_object_mut()
        .expect("bodies are objects")
        .insert("schema".into(), json!(SCHEMA_VERSION));
    Ok(Json(body))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(internal)?
}

impl AppState {
    fn load_result(&self) -> Result<Arc<ScanResult>, ApiError> {
        let path = &self.cfg.result_path;
        let meta = std::fs::metadata(path)
            .map_err(|e| internal(format!("scan result {} unreadable: {e}", path.display())))?;
        let stamp = (
            meta.modified().unwrap_or(SystemTime::UNIX_EPOCH),
            meta.len(),
        );
        let mut cache = self.result.lock().unwrap_or_else(|p| p.into_inner());
        if let Some((t, len, r)) = cache.as_ref() {
            if (*t, *len) == stamp {
                return Ok(r.clone());
            }
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| internal(format!("scan result {} unreadable: {e}", path.display())))?;
        let result =
            Arc::new(parse_structured(&text).map_err(|e| {
                internal(format!("scan result {} is not valid: {e}", path.display()))
            })?);
        *cache = Some((stamp.0, stamp.1, result.clone()));
        Ok(result)
    }

    fn load_store(&self) -> Result<TriageStore, ApiError> {
        TriageStore::open(&self.cfg.triage_path).map_err(internal)
    }

    fn source_root(&self, result: &ScanResult) -> PathBuf {
        self.cfg
            .source_root
            .clone()
            .unwrap_or_else(|| PathBuf::from(&result.root))
    }
}

/// Builds the application router. No I/O happens until a request arrives.
pub fn router(cfg: ServeConfig) -> Router {
    let origins: Vec<HeaderValue> = own_origins(cfg.addr)
        .into_iter()
        .filter_map(|o| HeaderValue::from_str(&o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let ui_dir = cfg.ui_dir.clone();
    let state = Arc::new(AppState {
        cfg,
        result: Mutex::new(None),
        write_lock: Mutex::new(()),
    });
    let api = Router::new()
        .route("/api/result", get(get_result))
        .route("/api/findings", get(get_findings))
        .route("/api/source", get(get_source))
        .route("/api/findings/{fingerprint}/triage", post(post_triage))
        .with_state(state);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.layer(cors)
}

fn own_origins(addr: SocketAddr) -> Vec<String> {
    let port = addr.port();
    let mut out = vec![match addr.ip() {
        IpAddr::V6(ip) => format!("http://[{ip}]:{port}"),
        IpAddr::V4(ip) => format!("http://{ip}:{port}"),
    }];
    if addr.ip().is_loopback() {
        out.push(format!("http://localhost:{port}"));
    }
    out
}

async fn index() -> impl IntoResponse {
    Json(json!({
        "schema": SCHEMA_VERSION,
        "endpoints": [
            "GET /api/result",
            "GET /api/findings?severity=&state=&path=&open=&page=&page_size=",
            "GET /api/source?path=&line=&context=",
            "POST /api/findings/{fingerprint}/triage",
        ],
    }))
}

async fn get_result(State(st): State<Arc<AppState>>) -> ApiResult {
    let body = blocking(move || {
        let result = st.load_result()?;
        let store = st.load_store()?;
        let view = apply_triage(&result, &store);
        let metrics = if st.cfg.density_open_only {
            compute_for(&result, view.open_findings(), st.cfg.density_kind)
        } else {
            compute_for(&result, &result.findings, st.cfg.density_kind)
        };
        Ok(json!({
            "root": result.root,
            "rulepack": result.rulepack,
            "started_at": result.started_at,
            "duration_ms": result.duration_ms,
            "fingerprint_scheme": result.fingerprint_scheme,
            "summary": result.summary,
            "metrics": metrics,
            "triage": { "total": view.total, "suppressed": view.suppressed, "open": view.open },
            "warnings": result.warnings,
        }))
    })
    .await?;
    ok(body)
}

#[derive(Debug, Deserialize, Default)]
pub struct FindingsQuery {
    pub severity: Option<String>,
    pub state: Option<String>,
    pub path: Option<String>,
    pub open: Option<String>,
    pub page: Option<String>,
    pub page_size: Option<String>,
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, msg)
}

/// Comma-separated list, each item parsed with `parse`.
fn parse_list<T: Ord>(
    raw: &Option<String>,
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Option<Vec<T>>, ApiError> {
    let Some(raw) = raw.as_deref().filter(|s| !s.trim().is_empty()) else {
        return Ok(None);
    };
    raw.split(',')
        .map(|item| {
            parse(item.trim())
                .ok_or_else(|| bad_request(format!("invalid {what} `{}`", item.trim())))
        })
        .collect::<Result<Vec<T>, _>>()
        .map(Some)
}

fn parse_num(raw: &Option<String>, what: &str, default: usize) -> Result<usize, ApiError> {
    match raw.as_deref() {
        None | Some("") => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| bad_request(format!("invalid {what} `{s}`"))),
    }
}

async fn get_findings(
    State(st): State<Arc<AppState>>,
    Query(q): Query<FindingsQuery>,
) -> ApiResult {
    let severities = parse_list(&q.severity, "severity", |s| s.parse::<Severity>().ok())?;
    let states = parse_list(&q.state, "state", |s| s.parse::<TriageState>().ok())?;
    let open_only = match q.open.as_deref() {
        None | Some("") | Some("false") => false,
        Some("true") => true,
        Some(other) => {
            return Err(bad_request(format!(
                "invalid open `{other}` (expected true or false)"
            )))
        }
    };
    let page = parse_num(&q.page, "page", 1)?;
    let page_size = parse_num(&q.page_size, "page_size", DEFAULT_PAGE_SIZE)?;
    if page == 0 {
        return Err(bad_request("page starts at 1"));
    }
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(bad_request(format!(
            "page_size must be between 1 and {MAX_PAGE_SIZE}"
        )));
    }
    let path = q.path.clone().filter(|p| !p.is_empty());
    let body = blocking(move || {
        let result = st.load_result()?;
        let store = st.load_store()?;
        let view = apply_triage(&result, &store);
        let mut matching: Vec<&ViewEntry> = view
            .entries
            .iter()
            .filter(|e| {
                severities
                    .as_ref()
                    .is_none_or(|s| s.contains(&e.finding.severity))
            })
            .filter(|e| states.as_ref().is_none_or(|s| s.contains(&e.state)))
            .filter(|e| {
                path.as_ref()
                    .is_none_or(|p| e.finding.path.starts_with(p.as_str()))
            })
            .filter(|e| !open_only || !e.suppressed)
            .collect();
        matching.sort_by(|a, b| a.finding.sort_key().cmp(&b.finding.sort_key()));
        let total = matching.len();
        let items: Vec<&ViewEntry> = matching
            .into_iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .collect();
        Ok(json!({
            "total": total,
            "page": page,
            "page_size": page_size,
            "pages": total.div_ceil(page_size),
            "counts": { "total": view.total, "suppressed": view.suppressed, "open": view.open },
            "items": items,
        }))
    })
    .await?;
    ok(body)
}

#[derive(Debug, Deserialize)]
pub struct SourceQuery {
    pub path: Option<String>,
    pub line: Option<String>,
    pub context: Option<String>,
}

/// Rejects absolute paths and any `..`, then confirms the resolved file
/// is still under `root` after following symlinks.
fn resolve_inside(root: &Path, rel: &str) -> Result<PathBuf, ApiError> {
    let forbidden = || {
        ApiError::new(
            StatusCode::FORBIDDEN,
            format!("path `{rel}` is outside the corpus root"),
        )
    };
    let candidate = Path::new(rel);
    if rel.contains('\\') && cfg!(windows) {
        return Err(forbidden());
    }
    if candidate
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(forbidden());
    }
    let joined = root.join(candidate);
    let canon_root = root.canonicalize().map_err(|_| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("corpus root {} not found", root.display()),
        )
    })?;
    let canon = joined
        .canonicalize()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("file `{rel}` not found")))?;
    if !canon.starts_with(&canon_root) {
        return Err(forbidden());
    }
    Ok(canon)
}

async fn get_source(State(st): State<Arc<AppState>>, Query(q): Query<SourceQuery>) -> ApiResult {
    let rel = q
        .path
        .clone()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| bad_request("missing path"))?;
    let line = parse_num(&q.line, "line", 1)?;
    let context = parse_num(&q.context, "context", 3)?.min(MAX_CONTEXT);
    if line == 0 {
        return Err(bad_request("line starts at 1"));
    }
    let body = blocking(move || {
        let result = st.load_result()?;
        let root = st.source_root(&result);
        let file = resolve_inside(&root, &rel)?;
        let bytes = std::fs::read(&file).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("file `{rel}` not found")))?;
        let text = String::from_utf8_lossy(&bytes);
        let all: Vec<&str> = text.lines().collect();
        if line > all.len() {
            return Err(bad_request(format!("line {line} is past the end of `{rel}` ({} lines)", all.len())));
        }
        let start = line.saturating_sub(context).max(1);
        let end = (line + context).min(all.len());
        let lines: Vec<Value> = (start..=end)
            .map(|n| json!({ "number": n, "text": all[n - 1], "flagged": n == line }))
            .collect();
        let findings: Vec<&vscan_core::Finding> = result
            .findings
            .iter()
            .filter(|f| f.path == rel && (start..=end).contains(&f.line))
            .collect();
        Ok(json!({
            "path": rel,
            "line": line,
            "context": context,
            "start": start,
            "end": end,
            "total_lines": all.len(),
            "changed_since_scan": result.file(&rel).is_some_and(|f| f.digest != vscan_core::corpus::sha256_hex(&bytes)),
            "lines": lines,
            "findings": findings,
        }))
    })
    .await?;
    ok(body)
}

#[derive(Debug, Deserialize)]
pub struct TriageBody {
    pub state: Option<String>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub annotator: String,
}

async fn post_triage(
    State(st): State<Arc<AppState>>,
    UrlPath(fingerprint): UrlPath<String>,
    body: Result<Json<TriageBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    let unprocessable = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
    let Json(body) = body.map_err(|e| unprocessable(e.body_text()))?;
    let raw_state = body
        .state
        .ok_or_else(|| unprocessable("missing state".into()))?;
    let state: TriageState = raw_state
        .parse()
        .map_err(|e: TriageError| unprocessable(e.to_string()))?;
    let out = blocking(move || {
        let known = match st.load_result() {
            Ok(r) => TriageStore::is_known(&fingerprint, &r),
            Err(_) => false,
        };
        let _guard = st.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut store = st.load_store()?;
        let record = store
            .set_state(&fingerprint, state, &body.note, &body.annotator)
            .map_err(|e| match e {
                TriageError::Locked(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
                TriageError::NoteRequired | TriageError::UnknownState(_) => {
                    unprocessable(e.to_string())
                }
                other => internal(other),
            })?;
        let mut body =
            json!({ "record": record, "history_length": store.history(&fingerprint).len() });
        if !known {
            body["warning"] = json!(format!(
                "fingerprint {fingerprint} is not in the current scan result"
            ));
        }
        Ok(body)
    })
    .await?;
    ok(out)
}

/// Binds `cfg.addr` and serves until `shutdown` resolves.
pub async fn serve(
    cfg: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    serve_on(listener, cfg, shutdown).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    mut cfg: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    cfg.addr = listener.local_addr()?;
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(shutdown)
        .await
}
