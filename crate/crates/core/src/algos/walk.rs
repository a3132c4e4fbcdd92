use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_request, FairList, RecResult};
use crate::error::{Error, Result};
use crate::model::{AccessCount, AccessStats, ItemCatalog, ItemId, UserHistory};
use crate::oracle::ProviderOracle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub k: usize,
    pub tau: usize,
    /// Most page requests the walk may make, counting revisits.
    pub l_max: usize,
    /// Walk steps allowed per accepted item before a random item is taken.
    pub patience: usize,
    pub seed: u64,
}

impl WalkParams {
    pub fn new(k: usize, tau: usize) -> Self {
        WalkParams {
            k,
            tau,
            l_max: 100,
            patience: 100,
            seed: 0,
        }
    }
}

/// Picks which entry of a page the walk follows.
pub trait WalkChoice {
    /// An index in `0..len`.
    fn choose(&mut self, len: usize) -> usize;
}

pub struct SeededChoice(ChaCha8Rng);

impl SeededChoice {
    pub fn new(seed: u64) -> Self {
        SeededChoice(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl WalkChoice for SeededChoice {
    fn choose(&mut self, len: usize) -> usize {
        self.0.random_range(0..len)
    }
}

/// Replays fixed choices, cycling when exhausted.
pub struct ScriptedChoice {
    script: Vec<usize>,
    pos: usize,
}

impl ScriptedChoice {
    pub fn new(script: Vec<usize>) -> Self {
        assert!(!script.is_empty(), "empty choice script");
        ScriptedChoice { script, pos: 0 }
    }
}

impl WalkChoice for ScriptedChoice {
    fn choose(&mut self, len: usize) -> usize {
        let c = self.script[self.pos % self.script.len()];
        self.pos += 1;
        c.min(len - 1)
    }
}

/// Random walks from `source`, one accepted item per walk. The walk keeps no
/// page memo, so every step is a request and `accesses` equals the trace length.
pub fn private_walk<O: ProviderOracle + ?Sized>(
    oracle: &O,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    params: &WalkParams,
) -> Result<RecResult> {
    private_walk_with(oracle, catalog, source, history, params, &mut SeededChoice::new(params.seed))
}

pub fn private_walk_with<O: ProviderOracle + ?Sized>(
    oracle: &O,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    params: &WalkParams,
    choice: &mut dyn WalkChoice,
) -> Result<RecResult> {
    if catalog.len() != oracle.num_items() {
        return Err(Error::InvalidParameter(format!(
            "catalog has {} items, provider has {}",
            catalog.len(),
            oracle.num_items()
        )));
    }
    if params.l_max == 0 || params.patience == 0 {
        return Err(Error::InvalidParameter("L_max and patience must be positive".into()));
    }
    check_request(catalog, source, history, params.k, params.tau)?;

    let mut list = FairList::new(catalog, Some(source), history, params.k, params.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut trace = Vec::new();
    let mut fallback_used = false;
    let mut budget_left = true;

    while !list.is_full() {
        let mut p = source;
        let mut accepted = false;
        if budget_left {
            for _ in 0..params.patience {
                if trace.len() >= params.l_max {
                    budget_left = false;
                    break;
                }
                trace.push(p);
                let page = oracle.query(p).map_err(|e| match e {
                    Error::UnknownItem(_) => e,
                    other => Error::Oracle {
                        item: p,
                        source: Box::new(other),
                    },
                })?;
                let j = page.items()[choice.choose(page.len())];
                if list.try_insert(j)? {
                    accepted = true;
                    break;
                }
                p = j;
            }
        }
        if !accepted {
            fallback_used = true;
            let target = list.len() + 1;
            list.fill_random(&mut rng, target, |_| {})?;
        }
    }

    let stats = AccessStats {
        accesses: AccessCount::Finite(trace.len() as u64),
        walk_length: trace.len(),
    };
    Ok(RecResult::new(catalog, list.into_items(), stats, trace, fallback_used))
}
