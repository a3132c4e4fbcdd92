//! Black-box access to the provider's item-to-item recommendations.
//!
//! Every algorithm talks to the provider through [`ProviderOracle`], one item
//! page at a time. A recommendation call wraps the oracle in a [`PageCache`],
//! which fetches each page at most once; the number of distinct fetched pages
//! is the call's access count. PrivateWalk is the exception and counts every
//! step.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::model::{ItemId, RecList};

pub trait ProviderOracle: Send + Sync {
    fn num_items(&self) -> usize;

    /// Length `K` of every returned list.
    fn list_len(&self) -> usize;

    /// The `K` items shown on the page of `item`, best first. Never contains
    /// `item` itself or duplicates, and is identical across repeated calls.
    fn query(&self, item: ItemId) -> Result<RecList>;

    /// Pages served so far, across all callers.
    fn access_count(&self) -> u64;
}

impl<O: ProviderOracle + ?Sized> ProviderOracle for &O {
    fn num_items(&self) -> usize {
        (**self).num_items()
    }
    fn list_len(&self) -> usize {
        (**self).list_len()
    }
    fn query(&self, item: ItemId) -> Result<RecList> {
        (**self).query(item)
    }
    fn access_count(&self) -> u64 {
        (**self).access_count()
    }
}

impl<O: ProviderOracle + ?Sized> ProviderOracle for std::sync::Arc<O> {
    fn num_items(&self) -> usize {
        (**self).num_items()
    }
    fn list_len(&self) -> usize {
        (**self).list_len()
    }
    fn query(&self, item: ItemId) -> Result<RecList> {
        (**self).query(item)
    }
    fn access_count(&self) -> u64 {
        (**self).access_count()
    }
}

/// Atomic page counter shared by oracle implementations.
#[derive(Debug, Default)]
pub struct AccessMeter(AtomicU64);

impl AccessMeter {
    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// An oracle serving fixed, precomputed lists.
#[derive(Debug)]
pub struct TableOracle {
    lists: Vec<RecList>,
    k: usize,
    meter: AccessMeter,
}

impl TableOracle {
    /// `lists[i]` is the page of item `i + 1`.
    pub fn new(lists: Vec<RecList>) -> Result<Self> {
        let k = lists.first().map_or(0, RecList::len);
        let n = lists.len();
        for (i, list) in lists.iter().enumerate() {
            let item = ItemId::from_index(i);
            if list.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "page of item {item} has {} entries, expected {k}",
                    list.len()
                )));
            }
            if list.contains(item) || list.has_duplicates() {
                return Err(Error::InvalidParameter(format!(
                    "page of item {item} contains itself or duplicates"
                )));
            }
            if let Some(bad) = list.iter().find(|j| j.index() >= n) {
                return Err(Error::UnknownItem(*bad));
            }
        }
        Ok(TableOracle {
            lists,
            k,
            meter: AccessMeter::default(),
        })
    }
}

impl ProviderOracle for TableOracle {
    fn num_items(&self) -> usize {
        self.lists.len()
    }

    fn list_len(&self) -> usize {
        self.k
    }

    fn query(&self, item: ItemId) -> Result<RecList> {
        let list = self.lists.get(item.index()).ok_or(Error::UnknownItem(item))?;
        self.meter.record();
        Ok(list.clone())
    }

    fn access_count(&self) -> u64 {
        self.meter.get()
    }
}

/// Per-call memo of fetched pages.
pub struct PageCache<'a, O: ProviderOracle + ?Sized> {
    oracle: &'a O,
    pages: HashMap<ItemId, RecList>,
    fetched: Vec<ItemId>,
}

impl<'a, O: ProviderOracle + ?Sized> PageCache<'a, O> {
    pub fn new(oracle: &'a O) -> Self {
        PageCache {
            oracle,
            pages: HashMap::new(),
            fetched: Vec::new(),
        }
    }

    pub fn page(&mut self, item: ItemId) -> Result<&RecList> {
        if !self.pages.contains_key(&item) {
            let list = self.oracle.query(item).map_err(|e| match e {
                Error::UnknownItem(_) => e,
                other => Error::Oracle {
                    item,
                    source: Box::new(other),
                },
            })?;
            self.fetched.push(item);
            self.pages.insert(item, list);
        }
        Ok(&self.pages[&item])
    }

    /// Distinct pages fetched through this cache.
    pub fn accesses(&self) -> u64 {
        self.fetched.len() as u64
    }

    pub fn fetched(&self) -> &[ItemId] {
        &self.fetched
    }

    pub fn list_len(&self) -> usize {
        self.oracle.list_len()
    }
}

/// Small hand-checkable instances.
pub mod fixtures {
    use super::*;

    /// Five items, `K = 2`, item `i` recommends
    /// `((i + 3) mod 5) + 1` then `(i mod 5) + 1`. The page of item 3 is
    /// `(2, 4)`; a random walk that always takes the first entry leaves it
    /// after accepting item 2 and reaches item 1.
    pub fn counterexample_lists() -> Vec<RecList> {
        (1..=5u32)
            .map(|i| RecList::from_ids(&[((i + 3) % 5) + 1, (i % 5) + 1]))
            .collect()
    }

    pub fn counterexample_oracle() -> TableOracle {
        TableOracle::new(counterexample_lists()).expect("valid fixture")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn counterexample_page_of_three() {
        let o = counterexample_oracle();
        assert_eq!(o.query(ItemId::new(3)).unwrap().ids(), vec![2, 4]);
    }

    #[test]
    fn cache_counts_distinct_pages() {
        let o = counterexample_oracle();
        let mut cache = PageCache::new(&o);
        cache.page(ItemId::new(3)).unwrap();
        cache.page(ItemId::new(3)).unwrap();
        assert_eq!(cache.accesses(), 1);
        assert_eq!(o.access_count(), 1);
        cache.page(ItemId::new(1)).unwrap();
        assert_eq!(cache.accesses(), 2);
        assert_eq!(o.access_count(), 2);
    }

    #[test]
    fn out_of_range_query() {
        let o = counterexample_oracle();
        assert!(matches!(o.query(ItemId::new(6)), Err(Error::UnknownItem(_))));
        let mut cache = PageCache::new(&o);
        assert!(matches!(cache.page(ItemId::new(9)), Err(Error::UnknownItem(_))));
        assert_eq!(o.access_count(), 0);
    }

    #[test]
    fn rejects_self_recommendation() {
        let lists = vec![RecList::from_ids(&[1]), RecList::from_ids(&[1])];
        assert!(TableOracle::new(lists).is_err());
    }

    #[test]
    fn repeated_queries_are_identical() {
        let o = counterexample_oracle();
        for i in 1..=5 {
            let a = o.query(ItemId::new(i)).unwrap();
            let b = o.query(ItemId::new(i)).unwrap();
            assert_eq!(a, b);
        }
    }
}
