use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_request, FairList, RecResult};
use crate::error::{Error, Result};
use crate::model::{AccessCount, AccessStats, GroupCounter, ItemCatalog, ItemId, UserHistory};
use crate::oracle::{PageCache, ProviderOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsulParams {
    pub k: usize,
    pub tau: usize,
    /// Most pages the search may fetch.
    pub l_max: usize,
    /// Seeds the fallback draws only.
    pub seed: u64,
}

impl ConsulParams {
    pub fn new(k: usize, tau: usize) -> Self {
        ConsulParams {
            k,
            tau,
            l_max: 100,
            seed: 0,
        }
    }
}

/// Fair depth-first search over the provider's pages starting at `source`.
///
/// ```
/// use userside::algos::{consul, ConsulParams};
/// use userside::model::{ItemCatalog, ItemId, UserHistory};
/// use userside::oracle::fixtures::counterexample_oracle;
///
/// let oracle = counterexample_oracle();
/// let catalog = ItemCatalog::single_group(5);
/// let r = consul(&oracle, &catalog, ItemId::new(3), &UserHistory::empty(), &ConsulParams::new(2, 0)).unwrap();
/// assert_eq!(r.list.ids(), vec![2, 4]);
/// ```
pub fn consul<O: ProviderOracle + ?Sized>(
    oracle: &O,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    params: &ConsulParams,
) -> Result<RecResult> {
    consul_observed(oracle, catalog, source, history, params, |_, _| {})
}

/// As [`consul`], calling `observe(counter, |R|)` after every insertion.
pub fn consul_observed<O: ProviderOracle + ?Sized>(
    oracle: &O,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    params: &ConsulParams,
    mut observe: impl FnMut(&GroupCounter, usize),
) -> Result<RecResult> {
    if catalog.len() != oracle.num_items() {
        return Err(Error::InvalidParameter(format!(
            "catalog has {} items, provider has {}",
            catalog.len(),
            oracle.num_items()
        )));
    }
    if params.l_max == 0 {
        return Err(Error::InvalidParameter("L_max must be positive".into()));
    }
    check_request(catalog, source, history, params.k, params.tau)?;

    let mut pages = PageCache::new(oracle);
    let mut list = FairList::new(catalog, Some(source), history, params.k, params.tau);
    let mut visited: HashSet<ItemId> = HashSet::new();
    let mut stack: Vec<ItemId> = Vec::new();
    let mut trace = Vec::new();
    let mut p = source;

    'search: for _ in 0..params.l_max {
        while visited.contains(&p) {
            match stack.pop() {
                Some(next) => p = next,
                None => break 'search,
            }
        }
        visited.insert(p);
        trace.push(p);
        let page = pages.page(p)?.clone();
        for &j in page.iter() {
            if list.try_insert(j)? {
                observe(list.counter(), list.len());
            }
            if list.is_full() {
                break 'search;
            }
        }
        stack.extend(page.iter().rev().copied());
    }

    let fallback_used = !list.is_full();
    if fallback_used {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        list.fill_random(&mut rng, params.k, |l| observe(l.counter(), l.len()))?;
    }
    let stats = AccessStats {
        accesses: AccessCount::Finite(pages.accesses()),
        walk_length: trace.len(),
    };
    Ok(RecResult::new(catalog, list.into_items(), stats, trace, fallback_used))
}
