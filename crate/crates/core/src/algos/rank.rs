//! Score-based methods sharing one fair greedy post-processor.

use super::{check_request, FairList, RecResult};
use crate::error::{Error, Infeasibility, Result};
use crate::model::{AccessCount, AccessStats, ItemCatalog, ItemId, RecList, UserHistory};
use crate::oracle::ProviderOracle;
use crate::provider::{EmbeddingMatrix, Metric};
use crate::recnet::{personalized_pagerank, PageRankParams, RecommendationNetwork};

/// Scans items by descending score (ties by ascending id) and keeps each
/// allowed item that leaves the quotas reachable, until `k` are kept.
/// `scores[i]` belongs to item `i + 1`; `source` and `history` are skipped.
pub fn fair_greedy_rerank(
    scores: &[f64],
    catalog: &ItemCatalog,
    source: Option<ItemId>,
    history: &UserHistory,
    k: usize,
    tau: usize,
) -> Result<RecList> {
    if scores.len() != catalog.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores for {} items",
            scores.len(),
            catalog.len()
        )));
    }
    if let Some(bad) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(format!("score of item {} is NaN", bad + 1)));
    }
    match source {
        Some(s) => check_request(catalog, s, history, k, tau)?,
        None if tau * catalog.num_groups() > k => {
            return Err(Error::Infeasible(Infeasibility::QuotaExceedsList {
                tau,
                groups: catalog.num_groups(),
                k,
            }))
        }
        None => {}
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut list = FairList::new(catalog, source, history, k, tau);
    for i in order {
        if list.is_full() {
            break;
        }
        list.try_insert(ItemId::from_index(i))?;
    }
    if !list.is_full() {
        return Err(Error::Infeasible(Infeasibility::NotEnoughItems {
            available: list.len(),
            k,
        }));
    }
    Ok(RecList::new(list.into_items()))
}

/// The provider's own list for `source`, one access.
pub fn provider_method<O: ProviderOracle + ?Sized>(oracle: &O, catalog: &ItemCatalog, source: ItemId) -> Result<RecResult> {
    catalog.check(source)?;
    let list = oracle.query(source)?;
    let stats = AccessStats {
        accesses: AccessCount::Finite(1),
        walk_length: 1,
    };
    Ok(RecResult::new(catalog, list.into_vec(), stats, vec![source], false))
}

/// Fair re-ranking of personalized PageRank scores from `source` over the
/// fully crawled network. The source's own successors get a rank-ordered
/// bonus larger than any PageRank mass, so `tau = 0` returns its page.
pub fn private_rank(
    g: &RecommendationNetwork,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    k: usize,
    tau: usize,
    params: &PageRankParams,
) -> Result<RecResult> {
    g.require_complete()?;
    if g.len() != catalog.len() {
        return Err(Error::InvalidParameter("network and catalog sizes differ".into()));
    }
    check_request(catalog, source, history, k, tau)?;
    let mut scores = personalized_pagerank(g, source, params)?.scores;
    let succ = g.successors(source);
    for (r, j) in succ.iter().enumerate() {
        scores[j.index()] += 2.0 * (succ.len() - r) as f64;
    }
    let list = fair_greedy_rerank(&scores, catalog, Some(source), history, k, tau)?;
    let stats = AccessStats {
        accesses: AccessCount::Finite(g.len() as u64),
        walk_length: 0,
    };
    Ok(RecResult::new(catalog, list.into_vec(), stats, Vec::new(), false))
}

/// Fair re-ranking of the provider's own list only. Best effort: when the
/// list lacks a group the quota is simply missed, and the list is padded
/// with its remaining entries in provider order.
pub fn pp_baseline<O: ProviderOracle + ?Sized>(
    oracle: &O,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    k: usize,
    tau: usize,
) -> Result<RecResult> {
    catalog.check(source)?;
    let official = oracle.query(source)?;
    let mut list = FairList::new(catalog, Some(source), history, k, tau);
    for &j in official.iter() {
        list.try_insert(j)?;
    }
    let mut items = list.into_items();
    for &j in official.iter() {
        if items.len() >= k {
            break;
        }
        if !items.contains(&j) && !history.contains(j) && j != source {
            items.push(j);
        }
    }
    let stats = AccessStats {
        accesses: AccessCount::Finite(1),
        walk_length: 1,
    };
    Ok(RecResult::new(catalog, items, stats, vec![source], false))
}

/// Fair re-ranking of the provider's hidden similarities.
pub fn oracle_method(
    x: &EmbeddingMatrix,
    metric: Metric,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    k: usize,
    tau: usize,
) -> Result<RecResult> {
    if x.len() != catalog.len() {
        return Err(Error::InvalidParameter("embedding and catalog sizes differ".into()));
    }
    catalog.check(source)?;
    let scores = x.similarities(source, metric);
    let list = fair_greedy_rerank(&scores, catalog, Some(source), history, k, tau)?;
    let stats = AccessStats {
        accesses: AccessCount::Unbounded,
        walk_length: 0,
    };
    Ok(RecResult::new(catalog, list.into_vec(), stats, Vec::new(), false))
}
