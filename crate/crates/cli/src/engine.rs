//! One provider model, every method.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use userside::algos::{
    consul, oracle_method, pp_baseline, private_rank, private_walk, provider_method, ConsulParams, EtpRecommender, Method,
    RecResult, WalkParams,
};
use userside::error::{Error, Result};
use userside::model::{ItemCatalog, ItemId, RecList, UserHistory};
use userside::oracle::{ProviderOracle, TableOracle};
use userside::provider::{KnnProvider, NeighborTable};
use userside::recnet::{crawl_all, PageRankParams, RecommendationNetwork};
use userside::recovery::RecoveryConfig;

use crate::load::ProviderModel;

/// One recommendation call.
#[derive(Clone, Debug)]
pub struct Query {
    pub source: ItemId,
    pub history: UserHistory,
    pub method: Method,
    pub k: usize,
    pub tau: usize,
    pub l_max: usize,
    pub patience: usize,
    pub seed: u64,
}

enum Pages {
    Table(Arc<NeighborTable>),
    Fixed(Arc<TableOracle>),
}

/// Serves [`Query`]s against one provider. Crawls and recoveries of the
/// history-free network are done once per `K` and kept.
pub struct Engine {
    model: ProviderModel,
    pages: Pages,
    recovery: RecoveryConfig,
    crawls: Mutex<HashMap<usize, Arc<RecommendationNetwork>>>,
    etps: Mutex<HashMap<usize, Arc<EtpRecommender>>>,
}

impl Engine {
    /// `depth` bounds `K + |H|` for embedding providers.
    pub fn new(model: ProviderModel, depth: usize, recovery: RecoveryConfig) -> Result<Self> {
        let n = model.num_items();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("provider has {n} items")));
        }
        let mut crawls = HashMap::new();
        let pages = match &model {
            ProviderModel::Embedding { x, metric } => {
                Pages::Table(Arc::new(NeighborTable::build(x, *metric, depth.clamp(1, n - 1))?))
            }
            ProviderModel::Network(g) => {
                g.require_complete()?;
                crawls.insert(g.list_len(), Arc::new(g.clone()));
                let lists = g.edges().fold(vec![Vec::new(); n], |mut acc, (src, _, dst)| {
                    acc[src.index()].push(dst);
                    acc
                });
                Pages::Fixed(Arc::new(TableOracle::new(lists.into_iter().map(RecList::new).collect())?))
            }
        };
        Ok(Engine {
            model,
            pages,
            recovery,
            crawls: Mutex::new(crawls),
            etps: Mutex::new(HashMap::new()),
        })
    }

    pub fn num_items(&self) -> usize {
        self.model.num_items()
    }

    /// The list length a network provider was crawled with.
    pub fn fixed_k(&self) -> Option<usize> {
        match &self.model {
            ProviderModel::Network(g) => Some(g.list_len()),
            ProviderModel::Embedding { .. } => None,
        }
    }

    pub fn model(&self) -> &ProviderModel {
        &self.model
    }

    fn oracle(&self, k: usize, history: &UserHistory) -> Result<Arc<dyn ProviderOracle>> {
        match &self.pages {
            Pages::Table(t) => Ok(Arc::new(KnnProvider::from_table(Arc::clone(t), k, history.clone())?)),
            Pages::Fixed(o) => {
                if k != o.list_len() {
                    return Err(Error::InvalidParameter(format!("the network provider has K={}, not {k}", o.list_len())));
                }
                if !history.is_empty() {
                    return Err(Error::InvalidParameter(
                        "a crawled network cannot hide a history; use an embedding provider".into(),
                    ));
                }
                Ok(Arc::clone(o) as Arc<dyn ProviderOracle>)
            }
        }
    }

    /// Seeds the crawl cache, e.g. from a file written by an earlier run.
    pub fn insert_crawl(&self, g: RecommendationNetwork) -> Result<()> {
        if g.len() != self.num_items() {
            return Err(Error::InvalidParameter(format!(
                "cached network has {} items, provider has {}",
                g.len(),
                self.num_items()
            )));
        }
        g.require_complete()?;
        self.crawls.lock().expect("crawl cache").insert(g.list_len(), Arc::new(g));
        Ok(())
    }

    /// The history-free network with lists of length `k`, crawled on first use.
    /// The flag is true when this call did the crawl.
    pub fn network(&self, k: usize) -> Result<(Arc<RecommendationNetwork>, bool)> {
        let mut crawls = self.crawls.lock().expect("crawl cache");
        if let Some(g) = crawls.get(&k) {
            return Ok((Arc::clone(g), false));
        }
        let g = Arc::new(crawl_all(&*self.oracle(k, &UserHistory::empty())?)?);
        crawls.insert(k, Arc::clone(&g));
        Ok((g, true))
    }

    fn etp(&self, k: usize) -> Result<Arc<EtpRecommender>> {
        if let Some(e) = self.etps.lock().expect("etp cache").get(&k) {
            return Ok(Arc::clone(e));
        }
        let (g, _) = self.network(k)?;
        log::info!("recovering a {}-dimensional embedding of {} items", self.recovery.d, g.len());
        let e = Arc::new(EtpRecommender::new(&g, &self.recovery)?);
        self.etps.lock().expect("etp cache").insert(k, Arc::clone(&e));
        Ok(e)
    }

    pub fn recommend(&self, catalog: &ItemCatalog, q: &Query) -> Result<RecResult> {
        if catalog.len() != self.num_items() {
            return Err(Error::InvalidParameter(format!(
                "catalog has {} items, provider has {}",
                catalog.len(),
                self.num_items()
            )));
        }
        catalog.check(q.source)?;
        for &h in q.history.iter() {
            catalog.check(h)?;
        }
        let (k, tau) = (q.k, q.tau);
        let oracle = self.oracle(k, &q.history)?;
        match q.method {
            Method::Provider => provider_method(&*oracle, catalog, q.source),
            Method::Consul => {
                let p = ConsulParams {
                    l_max: q.l_max,
                    seed: q.seed,
                    ..ConsulParams::new(k, tau)
                };
                consul(&*oracle, catalog, q.source, &q.history, &p)
            }
            Method::PrivateWalk => {
                let p = WalkParams {
                    l_max: q.l_max,
                    patience: q.patience,
                    seed: q.seed,
                    ..WalkParams::new(k, tau)
                };
                private_walk(&*oracle, catalog, q.source, &q.history, &p)
            }
            Method::Pp => pp_baseline(&*oracle, catalog, q.source, &q.history, k, tau),
            Method::PrivateRank => {
                let params = PageRankParams::for_list_len(k);
                if q.history.is_empty() {
                    let (g, _) = self.network(k)?;
                    private_rank(&g, catalog, q.source, &q.history, k, tau, &params)
                } else {
                    let g = crawl_all(&*oracle)?;
                    private_rank(&g, catalog, q.source, &q.history, k, tau, &params)
                }
            }
            Method::Oracle => match &self.model {
                ProviderModel::Embedding { x, metric } => oracle_method(x, *metric, catalog, q.source, &q.history, k, tau),
                ProviderModel::Network(_) => Err(Error::InvalidParameter(
                    "the oracle method needs the provider's embedding, not a network".into(),
                )),
            },
            Method::Etp => self.etp(k)?.recommend(catalog, q.source, &q.history, k, tau),
        }
    }
}
