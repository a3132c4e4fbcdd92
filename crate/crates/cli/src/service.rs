//! JSON API over one dataset and one provider.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use userside::algos::{Method, RecResult};
use userside::error::{Error, Infeasibility};
use userside::eval::GroupRule;
use userside::io;
use userside::model::{AccessCount, ItemCatalog, ItemId, UserHistory};

use crate::engine::{Engine, Query};
use crate::load::Dataset;

/// Methods the API accepts, in the order of the stats report.
pub const SERVED: [Method; 5] = [Method::Provider, Method::Consul, Method::PrivateWalk, Method::PrivateRank, Method::Pp];

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Grouping for requests without a session.
    pub rule: GroupRule,
    pub l_max: usize,
    pub patience: usize,
    pub seed: u64,
    pub session_ttl: Duration,
    /// Network file for the history-free crawl: read at startup when it
    /// exists, written after the first crawl otherwise.
    pub crawl_cache: Option<PathBuf>,
    pub page_size: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            rule: GroupRule::Attribute,
            l_max: 100,
            patience: 100,
            seed: 0,
            session_ttl: Duration::from_secs(3600),
            crawl_cache: None,
            page_size: 20,
        }
    }
}

#[derive(Clone, Debug)]
struct Session {
    history: UserHistory,
    tau: usize,
    k: usize,
    rule: GroupRule,
    method: Option<Method>,
    last_used: Instant,
}

#[derive(Default)]
struct Counters {
    calls: AtomicU64,
    accesses: AtomicU64,
}

pub struct AppState {
    dataset: Dataset,
    engine: Engine,
    cfg: ServiceConfig,
    catalogs: Mutex<HashMap<String, Arc<ItemCatalog>>>,
    sessions: Mutex<HashMap<u64, Session>>,
    next_session: AtomicU64,
    counters: [Counters; SERVED.len()],
}

impl AppState {
    pub fn new(dataset: Dataset, engine: Engine, cfg: ServiceConfig) -> anyhow::Result<Self> {
        anyhow::ensure!(
            dataset.catalog.len() == engine.num_items(),
            "dataset has {} items but the provider has {}",
            dataset.catalog.len(),
            engine.num_items()
        );
        if let Some(path) = cfg.crawl_cache.as_ref().filter(|p| p.is_file()) {
            engine.insert_crawl(io::read_network(path)?)?;
            log::info!("loaded crawl cache {}", path.display());
        }
        let state = AppState {
            dataset,
            engine,
            cfg,
            catalogs: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            counters: Default::default(),
        };
        state.catalog_for(&state.cfg.rule, None)?;
        Ok(state)
    }

    fn catalog_for(&self, rule: &GroupRule, source: Option<ItemId>) -> Result<Arc<ItemCatalog>, ApiError> {
        let base = &self.dataset.catalog;
        if rule.needs_source() {
            let source = source.ok_or_else(|| ApiError::bad_request(format!("rule {rule} needs a source item")))?;
            return Ok(Arc::new(rule.apply(base, self.dataset.log.as_ref(), Some(source))?));
        }
        let key = rule.to_string();
        if let Some(c) = self.catalogs.lock().expect("catalogs").get(&key) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(rule.apply(base, self.dataset.log.as_ref(), None)?);
        self.catalogs.lock().expect("catalogs").insert(key, Arc::clone(&c));
        Ok(c)
    }

    fn session(&self, id: u64) -> Result<Session, ApiError> {
        let mut sessions = self.sessions.lock().expect("sessions");
        let ttl = self.cfg.session_ttl;
        sessions.retain(|_, s| s.last_used.elapsed() < ttl);
        let s = sessions
            .get_mut(&id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id} does not exist or has expired")))?;
        s.last_used = Instant::now();
        Ok(s.clone())
    }

    fn record(&self, method: Method, result: &RecResult) {
        let i = SERVED.iter().position(|&m| m == method).expect("served method");
        self.counters[i].calls.fetch_add(1, Ordering::Relaxed);
        if let AccessCount::Finite(a) = result.stats.accesses {
            self.counters[i].accesses.fetch_add(a, Ordering::Relaxed);
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    group: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            group: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Infeasible(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidParameter(_) | Error::UnknownItem(_) | Error::UnknownGroup(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let group = match &e {
            Error::Infeasible(Infeasibility::GroupTooSmall { group, .. }) => Some(group.clone()),
            _ => None,
        };
        ApiError {
            status,
            message: e.to_string(),
            group,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(g) = self.group {
            body["group"] = json!(g);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = UrlQuery<HashMap<String, String>>;

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    match params.get(name).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("bad value '{v}' for {name}"))),
    }
}

fn parse_method(s: &str) -> Result<Method, ApiError> {
    s.parse::<Method>()
        .ok()
        .filter(|m| SERVED.contains(m))
        .ok_or_else(|| ApiError::bad_request(format!("unknown method '{s}'; expected one of provider, consul, privatewalk, privaterank, pp")))
}

fn parse_rule(s: &str) -> Result<GroupRule, ApiError> {
    s.parse().map_err(|e: Error| ApiError::bad_request(e.to_string()))
}

fn item_id(state: &AppState, raw: &str) -> Result<ItemId, ApiError> {
    let id = raw
        .parse::<u32>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| ApiError::bad_request(format!("bad item id '{raw}'")))?;
    let item = ItemId::new(id);
    if !state.dataset.catalog.contains(item) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("item {id} is not in the catalog")));
    }
    Ok(item)
}

#[derive(Serialize)]
struct ItemView {
    id: ItemId,
    title: Option<String>,
    year: Option<i32>,
    external_id: Option<String>,
    label: Option<String>,
    /// Absent when the rule depends on a source item.
    group: Option<String>,
}

fn item_view(state: &AppState, catalog: Option<&ItemCatalog>, item: ItemId) -> ItemView {
    let meta = state.dataset.catalog.meta(item);
    ItemView {
        id: item,
        title: meta.title.clone(),
        year: meta.year,
        external_id: meta.external_id.clone(),
        label: state.dataset.catalog.label(item).map(str::to_string),
        group: catalog.map(|c| c.group_name(c.group(item)).to_string()),
    }
}

fn view_rule(state: &AppState, params: &HashMap<String, String>) -> Result<GroupRule, ApiError> {
    match param::<u64>(params, "session")? {
        Some(id) => Ok(state.session(id)?.rule),
        None => Ok(state.cfg.rule.clone()),
    }
}

#[derive(Serialize)]
struct ItemPage {
    query: String,
    page: usize,
    page_size: usize,
    total: usize,
    items: Vec<ItemView>,
}

async fn list_items(State(state): State<Arc<AppState>>, UrlQuery(params): Params) -> ApiResult<ItemPage> {
    let query = params.get("query").map(|q| q.trim().to_string()).unwrap_or_default();
    let page = param::<usize>(&params, "page")?.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("pages count from 1"));
    }
    let rule = view_rule(&state, &params)?;
    let catalog = if rule.needs_source() {
        None
    } else {
        Some(state.catalog_for(&rule, None)?)
    };
    let needle = query.to_lowercase();
    let base = &state.dataset.catalog;
    let hits: Vec<ItemId> = base
        .items()
        .filter(|&i| {
            if needle.is_empty() || i.get().to_string() == needle {
                return true;
            }
            let m = base.meta(i);
            [&m.title, &m.external_id]
                .into_iter()
                .flatten()
                .any(|s| s.to_lowercase().contains(&needle))
        })
        .collect();
    let size = state.cfg.page_size;
    let items = hits
        .iter()
        .skip((page - 1) * size)
        .take(size)
        .map(|&i| item_view(&state, catalog.as_deref(), i))
        .collect();
    Ok(Json(ItemPage {
        query,
        page,
        page_size: size,
        total: hits.len(),
        items,
    }))
}

async fn get_item(State(state): State<Arc<AppState>>, Path(id): Path<String>, UrlQuery(params): Params) -> ApiResult<ItemView> {
    let item = item_id(&state, &id)?;
    let rule = view_rule(&state, &params)?;
    let catalog = state.catalog_for(&rule, Some(item))?;
    Ok(Json(item_view(&state, Some(&catalog), item)))
}

async fn recommend(State(state): State<Arc<AppState>>, Path(id): Path<String>, UrlQuery(params): Params) -> ApiResult<RecResult> {
    let source = item_id(&state, &id)?;
    let session = param::<u64>(&params, "session")?.map(|s| state.session(s)).transpose()?;
    let method = match params.get("method").filter(|m| !m.is_empty()) {
        Some(m) => parse_method(m)?,
        None => session
            .as_ref()
            .and_then(|s| s.method)
            .ok_or_else(|| ApiError::bad_request("method is required"))?,
    };
    let tau = param::<usize>(&params, "tau")?
        .or(session.as_ref().map(|s| s.tau))
        .ok_or_else(|| ApiError::bad_request("tau is required"))?;
    let k = param::<usize>(&params, "k")?
        .or(session.as_ref().map(|s| s.k))
        .or(state.engine.fixed_k())
        .ok_or_else(|| ApiError::bad_request("k is required"))?;
    if k == 0 {
        return Err(ApiError::bad_request("k must be positive"));
    }
    let rule = session.as_ref().map_or_else(|| state.cfg.rule.clone(), |s| s.rule.clone());
    let history = session.map(|s| s.history).unwrap_or_default();
    let catalog = state.catalog_for(&rule, Some(source))?;
    let q = Query {
        source,
        history,
        method,
        k,
        tau,
        l_max: state.cfg.l_max,
        patience: state.cfg.patience,
        seed: state.cfg.seed,
    };
    let worker = Arc::clone(&state);
    let result = tokio::task::spawn_blocking(move || -> Result<RecResult, ApiError> {
        if q.method == Method::PrivateRank && q.history.is_empty() {
            catalog.check_feasible(q.source, &q.history, q.k, q.tau)?;
            let (g, crawled) = worker.engine.network(q.k)?;
            if let Some(path) = worker.cfg.crawl_cache.as_ref().filter(|p| crawled && !p.exists()) {
                match io::write_network(path, &g) {
                    Ok(()) => log::info!("wrote crawl cache {}", path.display()),
                    Err(e) => log::warn!("could not write crawl cache: {e}"),
                }
            }
        }
        Ok(worker.engine.recommend(&catalog, &q)?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    state.record(method, &result);
    Ok(Json(result))
}

#[derive(Serialize)]
struct GroupsView {
    rule: String,
    groups: BTreeMap<String, usize>,
}

async fn groups(State(state): State<Arc<AppState>>, UrlQuery(params): Params) -> ApiResult<GroupsView> {
    let rule = view_rule(&state, &params)?;
    let source = param::<String>(&params, "source")?.map(|s| item_id(&state, &s)).transpose()?;
    let catalog = state.catalog_for(&rule, source)?;
    let mut groups: BTreeMap<String, usize> = catalog.group_names().iter().map(|g| (g.clone(), 0)).collect();
    for i in catalog.items() {
        *groups.get_mut(catalog.group_name(catalog.group(i))).expect("named group") += 1;
    }
    Ok(Json(GroupsView {
        rule: rule.to_string(),
        groups,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionUpdate {
    session_id: Option<u64>,
    history: Option<Vec<u32>>,
    tau: Option<usize>,
    k: Option<usize>,
    group_rule: Option<String>,
    method: Option<String>,
}

#[derive(Serialize)]
struct SessionView {
    session_id: u64,
    history: Vec<ItemId>,
    tau: usize,
    k: usize,
    group_rule: String,
    method: Option<Method>,
}

/// Creates a session, or updates one when `session_id` is given. A new
/// session needs `tau` and `k`.
async fn put_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<SessionView> {
    let upd: SessionUpdate = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("bad session body: {e}")))?;
    let current = upd.session_id.map(|id| state.session(id)).transpose()?;
    let history = match upd.history {
        Some(ids) => {
            let mut h = UserHistory::empty();
            for id in ids {
                let item = ItemId::new(id.max(1));
                if id == 0 || !state.dataset.catalog.contains(item) {
                    return Err(ApiError::bad_request(format!("history item {id} is not in the catalog")));
                }
                h.insert(item);
            }
            h
        }
        None => current.as_ref().map(|s| s.history.clone()).unwrap_or_default(),
    };
    let tau = upd
        .tau
        .or(current.as_ref().map(|s| s.tau))
        .ok_or_else(|| ApiError::bad_request("tau is required"))?;
    let k = upd
        .k
        .or(current.as_ref().map(|s| s.k))
        .or(state.engine.fixed_k())
        .ok_or_else(|| ApiError::bad_request("k is required"))?;
    if k == 0 {
        return Err(ApiError::bad_request("k must be positive"));
    }
    if let Some(fixed) = state.engine.fixed_k() {
        if k != fixed {
            return Err(ApiError::bad_request(format!("the network provider has K={fixed}")));
        }
        if !history.is_empty() {
            return Err(ApiError::bad_request("a crawled network cannot hide a history"));
        }
    }
    let rule = match upd.group_rule {
        Some(r) => parse_rule(&r)?,
        None => current.as_ref().map_or_else(|| state.cfg.rule.clone(), |s| s.rule.clone()),
    };
    let method = match upd.method {
        Some(m) => Some(parse_method(&m)?),
        None => current.as_ref().and_then(|s| s.method),
    };
    let groups = state.catalog_for(&rule, Some(ItemId::new(1)))?.num_groups();
    if tau * groups > k {
        return Err(Error::Infeasible(Infeasibility::QuotaExceedsList { tau, groups, k }).into());
    }
    let id = upd.session_id.unwrap_or_else(|| state.next_session.fetch_add(1, Ordering::Relaxed));
    let view = SessionView {
        session_id: id,
        history: history.iter().copied().collect(),
        tau,
        k,
        group_rule: rule.to_string(),
        method,
    };
    state.sessions.lock().expect("sessions").insert(
        id,
        Session {
            history,
            tau,
            k,
            rule,
            method,
            last_used: Instant::now(),
        },
    );
    Ok(Json(view))
}

#[derive(Serialize)]
struct MethodStats {
    calls: u64,
    accesses: u64,
}

#[derive(Serialize)]
struct StatsView {
    requests: u64,
    accesses: u64,
    methods: BTreeMap<String, MethodStats>,
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<StatsView> {
    let methods: BTreeMap<String, MethodStats> = SERVED
        .iter()
        .zip(&state.counters)
        .map(|(m, c)| {
            (
                m.to_string(),
                MethodStats {
                    calls: c.calls.load(Ordering::Relaxed),
                    accesses: c.accesses.load(Ordering::Relaxed),
                },
            )
        })
        .collect();
    Json(StatsView {
        requests: methods.values().map(|m| m.calls).sum(),
        accesses: methods.values().map(|m| m.accesses).sum(),
        methods,
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/items", get(list_items))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/recommend", get(recommend))
        .route("/api/groups", get(groups))
        .route("/api/session", put(put_session))
        .route("/api/stats", get(stats))
        .with_state(state)
}

pub async fn serve(state: AppState) -> anyhow::Result<()> {
    let addr = state.cfg.listen;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
