//! The observable recommendation network: one node per item, an ordered
//! edge from each crawled item to each entry of its page.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ItemId, RecList};
use crate::oracle::ProviderOracle;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecommendationNetwork {
    n: usize,
    k: usize,
    /// Empty for items whose page has not been crawled.
    out_edges: Vec<Vec<ItemId>>,
}

impl RecommendationNetwork {
    /// `n` nodes and no crawled pages.
    pub fn empty(n: usize, k: usize) -> Self {
        RecommendationNetwork {
            n,
            k,
            out_edges: vec![Vec::new(); n],
        }
    }

    /// Every page given; `lists[i]` belongs to item `i + 1`.
    pub fn from_lists(lists: Vec<Vec<ItemId>>) -> Result<Self> {
        let k = lists.first().map_or(0, Vec::len);
        let mut g = RecommendationNetwork::empty(lists.len(), k);
        for (i, list) in lists.into_iter().enumerate() {
            g.set_page(ItemId::from_index(i), list)?;
        }
        Ok(g)
    }

    pub fn set_page(&mut self, item: ItemId, list: Vec<ItemId>) -> Result<()> {
        if item.index() >= self.n {
            return Err(Error::UnknownItem(item));
        }
        if list.len() != self.k {
            return Err(Error::InvalidParameter(format!(
                "page of item {item} has {} entries, expected {}",
                list.len(),
                self.k
            )));
        }
        if let Some(bad) = list.iter().find(|j| j.index() >= self.n) {
            return Err(Error::UnknownItem(*bad));
        }
        let rl = RecList::new(list);
        if rl.contains(item) || rl.has_duplicates() {
            return Err(Error::InvalidParameter(format!(
                "page of item {item} contains itself or duplicates"
            )));
        }
        self.out_edges[item.index()] = rl.into_vec();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn list_len(&self) -> usize {
        self.k
    }

    /// Successors in rank order; empty if not crawled.
    pub fn successors(&self, item: ItemId) -> &[ItemId] {
        &self.out_edges[item.index()]
    }

    pub fn is_crawled(&self, item: ItemId) -> bool {
        self.k == 0 || !self.out_edges[item.index()].is_empty()
    }

    pub fn uncrawled(&self) -> usize {
        (0..self.n).filter(|&i| !self.is_crawled(ItemId::from_index(i))).count()
    }

    pub fn is_complete(&self) -> bool {
        self.uncrawled() == 0
    }

    /// Fails with [`Error::IncompleteNetwork`] unless every page is present.
    pub fn require_complete(&self) -> Result<()> {
        match self.uncrawled() {
            0 => Ok(()),
            missing => Err(Error::IncompleteNetwork { missing }),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// `(src, rank, dst)` with ranks starting at 1, by source then rank.
    pub fn edges(&self) -> impl Iterator<Item = (ItemId, usize, ItemId)> + '_ {
        self.out_edges.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .enumerate()
                .map(move |(r, &dst)| (ItemId::from_index(i), r + 1, dst))
        })
    }
}

/// Fetches the page of every item in `items`, one oracle access each.
/// Duplicates in `items` are crawled once.
pub fn crawl_network<O: ProviderOracle + ?Sized>(
    oracle: &O,
    items: impl IntoIterator<Item = ItemId>,
) -> Result<RecommendationNetwork> {
    let mut items: Vec<ItemId> = items.into_iter().collect();
    items.sort_unstable();
    items.dedup();
    let n = oracle.num_items();
    if let Some(bad) = items.iter().find(|i| i.index() >= n) {
        return Err(Error::UnknownItem(*bad));
    }
    let pages: Vec<RecList> = items
        .par_iter()
        .map(|&item| {
            oracle.query(item).map_err(|e| Error::Oracle {
                item,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut g = RecommendationNetwork::empty(n, oracle.list_len());
    for (item, page) in items.into_iter().zip(pages) {
        g.set_page(item, page.into_vec())?;
    }
    Ok(g)
}

/// Every item's page.
pub fn crawl_all<O: ProviderOracle + ?Sized>(oracle: &O) -> Result<RecommendationNetwork> {
    crawl_network(oracle, (0..oracle.num_items()).map(ItemId::from_index))
}

/// `1 / log2(r + 1)` for ranks `r = 1..=k`.
pub fn log_rank_decay(k: usize) -> Vec<f64> {
    (1..=k).map(|r| 1.0 / ((r + 1) as f64).log2()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub restart: f64,
    /// Weight of the rank-`r` successor at index `r - 1`.
    pub rank_decay: Vec<f64>,
    pub max_iters: usize,
    /// L1 change between iterates below which iteration stops.
    pub tolerance: f64,
}

impl PageRankParams {
    pub fn for_list_len(k: usize) -> Self {
        PageRankParams {
            restart: 0.15,
            rank_decay: log_rank_decay(k),
            max_iters: 100,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageRankResult {
    /// Index = item index; sums to 1.
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Personalized PageRank of the restart walk from `source`. Mass reaching an
/// uncrawled node returns to the source.
pub fn personalized_pagerank(
    g: &RecommendationNetwork,
    source: ItemId,
    params: &PageRankParams,
) -> Result<PageRankResult> {
    let mut init = vec![0.0; g.len()];
    if source.index() < g.len() {
        init[source.index()] = 1.0;
    }
    personalized_pagerank_from(g, source, params, init)
}

/// As [`personalized_pagerank`], starting from `init` (any nonnegative
/// vector with positive sum; it is normalized first).
pub fn personalized_pagerank_from(
    g: &RecommendationNetwork,
    source: ItemId,
    params: &PageRankParams,
    init: Vec<f64>,
) -> Result<PageRankResult> {
    let n = g.len();
    if source.index() >= n {
        return Err(Error::UnknownItem(source));
    }
    let r = params.restart;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("restart probability {r} is outside (0, 1)")));
    }
    if params.rank_decay.len() != g.list_len() || params.rank_decay.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "rank_decay needs {} positive weights",
            g.list_len()
        )));
    }
    if params.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be positive".into()));
    }
    let total: f64 = init.iter().sum();
    if init.len() != n || init.iter().any(|v| !(*v >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidParameter("initial scores must be nonnegative with positive sum".into()));
    }
    let norm: f64 = params.rank_decay.iter().sum();
    let weights: Vec<f64> = params.rank_decay.iter().map(|w| w / norm).collect();

    let s = source.index();
    let mut x: Vec<f64> = init.iter().map(|v| v / total).collect();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut back = r;
        for (p, &mass) in x.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let succ = &g.out_edges[p];
            if succ.is_empty() {
                back += (1.0 - r) * mass;
                continue;
            }
            for (q, w) in succ.iter().zip(&weights) {
                next[q.index()] += (1.0 - r) * mass * w;
            }
        }
        next[s] += back;
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if delta < params.tolerance {
            converged = true;
            break;
        }
    }
    Ok(PageRankResult {
        scores: x,
        iterations,
        converged,
    })
}

/// Symmetric simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<Vec<ItemId>>,
}

impl UndirectedGraph {
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, item: ItemId) -> &[ItemId] {
        &self.adj[item.index()]
    }

    pub fn degree(&self, item: ItemId) -> usize {
        self.adj[item.index()].len()
    }

    pub fn has_edge(&self, a: ItemId, b: ItemId) -> bool {
        self.adj[a.index()].binary_search(&b).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<ItemId>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![ItemId::from_index(start)];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for v in &self.adj[u] {
                    if !seen[v.index()] {
                        seen[v.index()] = true;
                        comp.push(*v);
                        queue.push_back(v.index());
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Fails with [`Error::Disconnected`] listing the components.
    pub fn require_connected(&self) -> Result<()> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(Error::Disconnected { components: comps });
        }
        Ok(())
    }

    /// Hop distances from `source`; `usize::MAX` when unreachable.
    pub fn hop_distances(&self, source: ItemId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[source.index()] = 0;
        let mut queue = VecDeque::from([source.index()]);
        while let Some(u) = queue.pop_front() {
            for v in &self.adj[u] {
                if dist[v.index()] == usize::MAX {
                    dist[v.index()] = dist[u] + 1;
                    queue.push_back(v.index());
                }
            }
        }
        dist
    }
}

/// Edge `{i, j}` iff `i -> j` or `j -> i`.
pub fn undirected_view(g: &RecommendationNetwork) -> UndirectedGraph {
    let mut adj: Vec<Vec<ItemId>> = vec![Vec::new(); g.len()];
    for (src, _, dst) in g.edges() {
        adj[src.index()].push(dst);
        adj[dst.index()].push(src);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    UndirectedGraph { adj }
}
