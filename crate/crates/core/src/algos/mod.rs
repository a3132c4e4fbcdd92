//! User-side recommenders. Each returns a [`RecResult`].

mod consul;
mod etp;
mod rank;
mod walk;

pub use consul::{consul, consul_observed, ConsulParams};
pub use etp::{etp, EtpRecommender};
pub use rank::{fair_greedy_rerank, oracle_method, pp_baseline, private_rank, provider_method};
pub use walk::{private_walk, private_walk_with, ScriptedChoice, SeededChoice, WalkChoice, WalkParams};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Infeasibility, Result};
use crate::model::{AccessStats, GroupCounter, ItemCatalog, ItemId, RecList, UserHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecResult {
    pub list: RecList,
    #[serde(flatten)]
    pub stats: AccessStats,
    pub group_counts: BTreeMap<String, usize>,
    /// Pages visited, in order.
    pub trace: Vec<ItemId>,
    pub fallback_used: bool,
}

impl RecResult {
    pub(crate) fn new(catalog: &ItemCatalog, list: Vec<ItemId>, stats: AccessStats, trace: Vec<ItemId>, fallback_used: bool) -> Self {
        RecResult {
            group_counts: catalog.group_counts(&list),
            list: RecList::new(list),
            stats,
            trace,
            fallback_used,
        }
    }

    /// Whether every group appears at least `tau` times.
    pub fn is_sound(&self, tau: usize) -> bool {
        self.group_counts.values().all(|&c| c >= tau)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Provider,
    Consul,
    PrivateWalk,
    PrivateRank,
    Pp,
    Oracle,
    Etp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Provider,
        Method::Consul,
        Method::PrivateWalk,
        Method::PrivateRank,
        Method::Pp,
        Method::Oracle,
        Method::Etp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Provider => "provider",
            Method::Consul => "consul",
            Method::PrivateWalk => "privatewalk",
            Method::PrivateRank => "privaterank",
            Method::Pp => "pp",
            Method::Oracle => "oracle",
            Method::Etp => "etp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Validates `tau` and `k` against the catalog for one call.
pub(crate) fn check_request(catalog: &ItemCatalog, source: ItemId, history: &UserHistory, k: usize, tau: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    catalog.check_feasible(source, history, k, tau)
}

/// The list under construction: items, the group counter, and what may
/// never be added.
pub(crate) struct FairList<'a> {
    catalog: &'a ItemCatalog,
    history: &'a UserHistory,
    source: Option<ItemId>,
    k: usize,
    items: Vec<ItemId>,
    counter: GroupCounter,
}

impl<'a> FairList<'a> {
    pub(crate) fn new(catalog: &'a ItemCatalog, source: Option<ItemId>, history: &'a UserHistory, k: usize, tau: usize) -> Self {
        FairList {
            catalog,
            history,
            source,
            k,
            items: Vec::with_capacity(k),
            counter: GroupCounter::new(catalog.num_groups(), tau),
        }
    }

    pub(crate) fn is_full(&self) -> bool {
        self.items.len() >= self.k
    }

    pub(crate) fn len(&self) -> usize {
        self.items.len()
    }

    pub(crate) fn counter(&self) -> &GroupCounter {
        &self.counter
    }

    pub(crate) fn excluded(&self, j: ItemId) -> bool {
        Some(j) == self.source || self.history.contains(j) || self.items.contains(&j)
    }

    /// Appends `j` if it is allowed and keeps the quotas reachable.
    pub(crate) fn try_insert(&mut self, j: ItemId) -> Result<bool> {
        if self.is_full() || self.excluded(j) {
            return Ok(false);
        }
        self.catalog.check(j)?;
        let g = self.catalog.group(j);
        if !self.counter.can_insert(g, self.k, self.items.len())? {
            return Ok(false);
        }
        self.items.push(j);
        self.counter.add(g)?;
        Ok(true)
    }

    /// Adds random allowed items until the list holds `target` of them:
    /// uniform draws with rejection, then, after `100 K |A|` rejected draws,
    /// passes over a random permutation of the catalog.
    pub(crate) fn fill_random<R: Rng>(&mut self, rng: &mut R, target: usize, mut after_insert: impl FnMut(&Self)) -> Result<()> {
        let target = target.min(self.k);
        let n = self.catalog.len();
        let cap = 100 * self.k * self.catalog.num_groups();
        let mut rejected = 0;
        while self.len() < target && rejected < cap {
            let j = ItemId::from_index(rng.random_range(0..n));
            if self.try_insert(j)? {
                after_insert(self);
            } else {
                rejected += 1;
            }
        }
        if self.len() >= target {
            return Ok(());
        }
        let mut order: Vec<ItemId> = self.catalog.items().collect();
        order.shuffle(rng);
        loop {
            let before = self.len();
            for &j in &order {
                if self.len() >= target {
                    return Ok(());
                }
                if self.try_insert(j)? {
                    after_insert(self);
                }
            }
            if self.len() >= target {
                return Ok(());
            }
            if self.len() == before {
                return Err(self.shortfall());
            }
        }
    }

    fn shortfall(&self) -> Error {
        let tau = self.counter.tau();
        for g in 0..self.catalog.num_groups() {
            let gid = crate::model::GroupId(g as u32);
            if self.counter.count(gid) < tau {
                let available = self
                    .catalog
                    .items()
                    .filter(|&i| self.catalog.group(i) == gid && Some(i) != self.source && !self.history.contains(i))
                    .count();
                return Error::Infeasible(Infeasibility::GroupTooSmall {
                    group: self.catalog.group_name(gid).to_string(),
                    available,
                    tau,
                });
            }
        }
        Error::Infeasible(Infeasibility::NotEnoughItems {
            available: self.len(),
            k: self.k,
        })
    }

    pub(crate) fn into_items(self) -> Vec<ItemId> {
        self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("Private-Walk".parse::<Method>().unwrap(), Method::PrivateWalk);
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn rec_result_json_fields() {
        let catalog = ItemCatalog::from_group_names(&["a", "b", "a"]).unwrap();
        let r = RecResult::new(
            &catalog,
            vec![ItemId::new(2), ItemId::new(3)],
            AccessStats {
                accesses: crate::model::AccessCount::Finite(1),
                walk_length: 1,
            },
            vec![ItemId::new(1)],
            false,
        );
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["list"], serde_json::json!([2, 3]));
        assert_eq!(v["accesses"], 1);
        assert_eq!(v["group_counts"], serde_json::json!({"a": 1, "b": 1}));
        assert_eq!(v["trace"], serde_json::json!([1]));
        assert_eq!(v["fallback_used"], false);
        let back: RecResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn random_fill_is_sound() {
        let names: Vec<&str> = (0..50).map(|i| if i < 45 { "big" } else { "small" }).collect();
        let catalog = ItemCatalog::from_group_names(&names).unwrap();
        let h = UserHistory::empty();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut list = FairList::new(&catalog, Some(ItemId::new(1)), &h, 10, 5);
        list.fill_random(&mut rng, 10, |_| {}).unwrap();
        let items = list.into_items();
        assert_eq!(items.len(), 10);
        assert_eq!(catalog.group_counts(&items)["small"], 5);
    }

}
