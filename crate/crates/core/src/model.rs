//! Shared data model: items, sensitive groups, histories, recommendation
//! lists and the fairness counter used by every re-ranking method.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Infeasibility, Result};

/// Dense, 1-based item identifier.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(u32);

impl ItemId {
    /// # Panics
    /// If `id` is zero.
    pub fn new(id: u32) -> Self {
        assert!(id > 0, "item ids start at 1");
        ItemId(id)
    }

    pub fn from_index(index: usize) -> Self {
        ItemId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Dense, 0-based sensitive group identifier.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl GroupId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Display fields carried alongside an item.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl ItemMeta {
    pub fn is_empty(&self) -> bool {
        self.external_id.is_none() && self.title.is_none() && self.year.is_none()
    }
}

/// Items `1..=n`, each with exactly one sensitive group.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    attr: Vec<GroupId>,
    group_names: Vec<String>,
    group_sizes: Vec<usize>,
    labels: Option<Vec<String>>,
    meta: Vec<ItemMeta>,
}

impl ItemCatalog {
    pub fn new(group_names: Vec<String>, attr: Vec<GroupId>) -> Result<Self> {
        if group_names.is_empty() {
            return Err(Error::InvalidParameter("a catalog needs at least one group".into()));
        }
        let mut group_sizes = vec![0; group_names.len()];
        for &g in &attr {
            *group_sizes
                .get_mut(g.index())
                .ok_or(Error::UnknownGroup(g.0))? += 1;
        }
        let meta = vec![ItemMeta::default(); attr.len()];
        Ok(ItemCatalog {
            attr,
            group_names,
            group_sizes,
            labels: None,
            meta,
        })
    }

    /// Builds a catalog from one group name per item; ids are assigned in
    /// order of first appearance.
    pub fn from_group_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut ids: BTreeMap<&str, GroupId> = BTreeMap::new();
        let mut group_names = Vec::new();
        let attr = names
            .iter()
            .map(|name| {
                let name = name.as_ref();
                *ids.entry(name).or_insert_with(|| {
                    group_names.push(name.to_string());
                    GroupId(group_names.len() as u32 - 1)
                })
            })
            .collect();
        ItemCatalog::new(group_names, attr)
    }

    /// Every item in one group named `all`.
    pub fn single_group(n: usize) -> Self {
        ItemCatalog::new(vec!["all".into()], vec![GroupId(0); n]).expect("one group")
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} items",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_meta(mut self, meta: Vec<ItemMeta>) -> Result<Self> {
        if meta.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "{} metadata rows for {} items",
                meta.len(),
                self.len()
            )));
        }
        self.meta = meta;
        Ok(self)
    }

    /// Same items, labels and metadata under a new group assignment.
    pub fn regroup(&self, group_names: Vec<String>, attr: Vec<GroupId>) -> Result<Self> {
        if attr.len() != self.len() {
            return Err(Error::InvalidParameter("group assignment length mismatch".into()));
        }
        let mut out = ItemCatalog::new(group_names, attr)?;
        out.labels = self.labels.clone();
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.attr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attr.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        (0..self.len()).map(ItemId::from_index)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        item.index() < self.len()
    }

    pub fn check(&self, item: ItemId) -> Result<()> {
        if self.contains(item) {
            Ok(())
        } else {
            Err(Error::UnknownItem(item))
        }
    }

    pub fn group(&self, item: ItemId) -> GroupId {
        self.attr[item.index()]
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_name(&self, group: GroupId) -> &str {
        &self.group_names[group.index()]
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_by_name(&self, name: &str) -> Option<GroupId> {
        self.group_names
            .iter()
            .position(|g| g == name)
            .map(|i| GroupId(i as u32))
    }

    pub fn group_size(&self, group: GroupId) -> usize {
        self.group_sizes[group.index()]
    }

    pub fn label(&self, item: ItemId) -> Option<&str> {
        self.labels.as_ref().map(|l| l[item.index()].as_str())
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn meta(&self, item: ItemId) -> &ItemMeta {
        &self.meta[item.index()]
    }

    /// Per-group counts of `items`, keyed by group name (zero counts included).
    pub fn group_counts<'a>(&self, items: impl IntoIterator<Item = &'a ItemId>) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.group_names.iter().map(|g| (g.clone(), 0)).collect();
        for &item in items {
            *counts
                .get_mut(&self.group_names[self.group(item).index()])
                .expect("group present") += 1;
        }
        counts
    }

    /// Checks that a list of `k` items with at least `tau` per group can be
    /// drawn from the catalog once `history` and `source` are excluded.
    ///
    /// Runs in `O(|H| + |A|)`, independent of the catalog size.
    pub fn check_feasible(&self, source: ItemId, history: &UserHistory, k: usize, tau: usize) -> Result<()> {
        self.check(source)?;
        let groups = self.num_groups();
        if tau * groups > k {
            return Err(Error::Infeasible(Infeasibility::QuotaExceedsList { tau, groups, k }));
        }
        let mut available = self.group_sizes.clone();
        let mut excluded = 0;
        for &h in history.iter().filter(|&&h| self.contains(h)) {
            available[self.group(h).index()] -= 1;
            excluded += 1;
        }
        if !history.contains(source) {
            available[self.group(source).index()] -= 1;
            excluded += 1;
        }
        for (g, &avail) in available.iter().enumerate() {
            if avail < tau {
                return Err(Error::Infeasible(Infeasibility::GroupTooSmall {
                    group: self.group_names[g].clone(),
                    available: avail,
                    tau,
                }));
            }
        }
        let total = self.len() - excluded;
        if total < k {
            return Err(Error::Infeasible(Infeasibility::NotEnoughItems { available: total, k }));
        }
        Ok(())
    }
}

/// Items the user has already interacted with. Never recommended.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserHistory(BTreeSet<ItemId>);

impl UserHistory {
    pub fn empty() -> Self {
        UserHistory::default()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.0.contains(&item)
    }

    pub fn insert(&mut self, item: ItemId) -> bool {
        self.0.insert(item)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemId> {
        self.0.iter()
    }
}

impl FromIterator<ItemId> for UserHistory {
    fn from_iter<T: IntoIterator<Item = ItemId>>(iter: T) -> Self {
        UserHistory(iter.into_iter().collect())
    }
}

/// An ordered recommendation list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecList(Vec<ItemId>);

impl RecList {
    pub fn new(items: Vec<ItemId>) -> Self {
        RecList(items)
    }

    pub fn from_ids(ids: &[u32]) -> Self {
        RecList(ids.iter().map(|&i| ItemId::new(i)).collect())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.0
    }

    pub fn ids(&self) -> Vec<u32> {
        self.0.iter().map(|i| i.get()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.0.contains(&item)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ItemId> {
        self.0.iter()
    }

    pub fn has_duplicates(&self) -> bool {
        let mut seen = BTreeSet::new();
        !self.0.iter().all(|i| seen.insert(*i))
    }

    pub fn into_vec(self) -> Vec<ItemId> {
        self.0
    }
}

impl<'a> IntoIterator for &'a RecList {
    type Item = &'a ItemId;
    type IntoIter = std::slice::Iter<'a, ItemId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Per-group selection counts together with the cached total deficit
/// `s = sum_a max(0, tau - c[a])`, so the safety test is O(1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupCounter {
    counts: Vec<usize>,
    tau: usize,
    deficit: usize,
}

impl GroupCounter {
    pub fn new(num_groups: usize, tau: usize) -> Self {
        GroupCounter {
            counts: vec![0; num_groups],
            tau,
            deficit: tau * num_groups,
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn count(&self, group: GroupId) -> usize {
        self.counts[group.index()]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// The cached `s`.
    pub fn deficit(&self) -> usize {
        self.deficit
    }

    /// `s` evaluated from the counts, ignoring the cache.
    pub fn recomputed_deficit(&self) -> usize {
        self.counts.iter().map(|&c| self.tau.saturating_sub(c)).sum()
    }

    fn slot(&self, group: GroupId) -> Result<usize> {
        if group.index() < self.counts.len() {
            Ok(group.index())
        } else {
            Err(Error::UnknownGroup(group.0))
        }
    }

    pub fn add(&mut self, group: GroupId) -> Result<()> {
        let g = self.slot(group)?;
        if self.counts[g] < self.tau {
            self.deficit -= 1;
        }
        self.counts[g] += 1;
        Ok(())
    }

    pub fn remove(&mut self, group: GroupId) -> Result<()> {
        let g = self.slot(group)?;
        if self.counts[g] == 0 {
            return Err(Error::InvalidParameter(format!("group {} count is already zero", group.0)));
        }
        self.counts[g] -= 1;
        if self.counts[g] < self.tau {
            self.deficit += 1;
        }
        Ok(())
    }

    /// Whether an item of `group` can join a list currently holding
    /// `list_len` of `k` items without making the quotas unreachable:
    /// `sum_{a != group} max(0, tau - c[a]) <= k - list_len - 1`.
    pub fn can_insert(&self, group: GroupId, k: usize, list_len: usize) -> Result<bool> {
        let g = self.slot(group)?;
        let others = self.deficit - self.tau.saturating_sub(self.counts[g]);
        Ok((others as i64) < k as i64 - list_len as i64)
    }
}

/// Free-function form of [`GroupCounter::can_insert`].
pub fn fair_insert_check(counter: &GroupCounter, k: usize, list_len: usize, group: GroupId) -> Result<bool> {
    counter.can_insert(group, k, list_len)
}

/// Number of provider pages a method fetched; `Unbounded` marks methods that
/// read the provider's hidden scores directly.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AccessCount {
    Finite(u64),
    Unbounded,
}

impl AccessCount {
    pub fn finite(self) -> Option<u64> {
        match self {
            AccessCount::Finite(n) => Some(n),
            AccessCount::Unbounded => None,
        }
    }
}

impl fmt::Display for AccessCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessCount::Finite(n) => n.fmt(f),
            AccessCount::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for AccessCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AccessCount::Finite(n) => s.serialize_u64(*n),
            AccessCount::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for AccessCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(AccessCount::Finite(n)),
            Raw::Text(t) if t == "inf" => Ok(AccessCount::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad access count {t:?}"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessStats {
    pub accesses: AccessCount,
    /// Pages visited during the search, repeats included.
    pub walk_length: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counter_with(counts: &[usize], tau: usize) -> GroupCounter {
        let mut c = GroupCounter::new(counts.len(), tau);
        for (g, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                c.add(GroupId(g as u32)).unwrap();
            }
        }
        c
    }

    #[test]
    fn insert_check_examples() {
        let a = GroupId(0);
        let b = GroupId(1);
        assert!(counter_with(&[0, 0], 5).can_insert(a, 10, 0).unwrap());
        assert!(!counter_with(&[5, 0], 5).can_insert(a, 10, 5).unwrap());
        assert!(counter_with(&[5, 4], 5).can_insert(b, 10, 9).unwrap());
    }

    #[test]
    fn insert_check_unknown_group() {
        let c = GroupCounter::new(2, 1);
        assert!(matches!(c.can_insert(GroupId(7), 4, 0), Err(Error::UnknownGroup(7))));
    }

    #[test]
    fn full_list_never_accepts() {
        let c = GroupCounter::new(2, 0);
        assert!(!c.can_insert(GroupId(0), 3, 3).unwrap());
    }

    #[test]
    fn counter_add_examples() {
        let mut c = GroupCounter::new(1, 2);
        assert_eq!(c.deficit(), 2);
        c.add(GroupId(0)).unwrap();
        assert_eq!((c.count(GroupId(0)), c.deficit()), (1, 1));

        let mut c = counter_with(&[2], 2);
        let before = c.deficit();
        c.add(GroupId(0)).unwrap();
        assert_eq!((c.count(GroupId(0)), c.deficit()), (3, before));

        let mut c = counter_with(&[1, 0], 1);
        assert_eq!(c.deficit(), 1);
        c.add(GroupId(1)).unwrap();
        assert_eq!(c.deficit(), 0);
    }

    #[test]
    fn feasibility() {
        let cat = ItemCatalog::from_group_names(&["a", "a", "b", "b", "b"]).unwrap();
        let h = UserHistory::empty();
        assert!(cat.check_feasible(ItemId::new(1), &h, 2, 1).is_ok());
        let err = cat.check_feasible(ItemId::new(1), &h, 4, 2).unwrap_err();
        assert!(
            matches!(err, Error::Infeasible(Infeasibility::GroupTooSmall { ref group, .. }) if group == "a")
        );
        assert!(matches!(
            cat.check_feasible(ItemId::new(1), &h, 2, 2),
            Err(Error::Infeasible(Infeasibility::QuotaExceedsList { .. }))
        ));
        let h: UserHistory = [ItemId::new(3), ItemId::new(4)].into_iter().collect();
        assert!(matches!(
            cat.check_feasible(ItemId::new(1), &h, 3, 0),
            Err(Error::Infeasible(Infeasibility::NotEnoughItems { available: 2, k: 3 }))
        ));
    }

    #[test]
    fn access_count_serde() {
        assert_eq!(serde_json::to_string(&AccessCount::Finite(4)).unwrap(), "4");
        assert_eq!(serde_json::to_string(&AccessCount::Unbounded).unwrap(), "\"inf\"");
        let back: AccessCount = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(back, AccessCount::Unbounded);
    }

    proptest! {
        #[test]
        fn cached_check_matches_definition(
            counts in prop::collection::vec(0usize..8, 1..6),
            tau in 0usize..6,
            k in 1usize..30,
            len in 0usize..30,
            g in 0usize..6,
        ) {
            let g = g % counts.len();
            let c = counter_with(&counts, tau);
            let lhs: usize = counts
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != g)
                .map(|(_, &ca)| tau.saturating_sub(ca))
                .sum();
            let expect = (lhs as i64) < k as i64 - len as i64;
            prop_assert_eq!(c.can_insert(GroupId(g as u32), k, len).unwrap(), expect);
        }

        #[test]
        fn deficit_cache_round_trips(
            ops in prop::collection::vec((0u32..4, any::<bool>()), 0..60),
            tau in 0usize..5,
        ) {
            let mut c = GroupCounter::new(4, tau);
            for (g, add) in ops {
                if add {
                    c.add(GroupId(g)).unwrap();
                } else {
                    let _ = c.remove(GroupId(g));
                }
                prop_assert_eq!(c.deficit(), c.recomputed_deficit());
            }
        }
    }
}
