use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{GroupId, ItemCatalog, ItemId, UserHistory};
use crate::provider::{Interaction, InteractionLog};

/// The largest sub-log in which every user and every item has at least `k`
/// events, by iterative peeling.
pub fn kcore(log: &InteractionLog, k: usize) -> InteractionLog {
    let events = log.interactions();
    let mut user_deg: HashMap<u32, usize> = HashMap::new();
    let mut item_deg = vec![0usize; log.num_items()];
    let mut by_user: HashMap<u32, Vec<usize>> = HashMap::new();
    let mut by_item: Vec<Vec<usize>> = vec![Vec::new(); log.num_items()];
    for (e, ev) in events.iter().enumerate() {
        *user_deg.entry(ev.user).or_default() += 1;
        item_deg[ev.item.index()] += 1;
        by_user.entry(ev.user).or_default().push(e);
        by_item[ev.item.index()].push(e);
    }
    #[derive(Copy, Clone)]
    enum Node {
        User(u32),
        Item(usize),
    }
    let mut alive = vec![true; events.len()];
    let mut queue: VecDeque<Node> = VecDeque::new();
    let mut users: Vec<u32> = user_deg.keys().copied().collect();
    users.sort_unstable();
    queue.extend(users.into_iter().filter(|u| user_deg[u] < k).map(Node::User));
    queue.extend((0..item_deg.len()).filter(|&i| item_deg[i] > 0 && item_deg[i] < k).map(Node::Item));
    while let Some(node) = queue.pop_front() {
        let incident = match node {
            Node::User(u) => &by_user[&u],
            Node::Item(i) => &by_item[i],
        };
        for &e in incident {
            if !std::mem::replace(&mut alive[e], false) {
                continue;
            }
            let ev = events[e];
            let du = user_deg.get_mut(&ev.user).expect("user seen");
            *du -= 1;
            if *du + 1 == k && !matches!(node, Node::User(_)) {
                queue.push_back(Node::User(ev.user));
            }
            let di = &mut item_deg[ev.item.index()];
            *di -= 1;
            if *di + 1 == k && !matches!(node, Node::Item(_)) {
                queue.push_back(Node::Item(ev.item.index()));
            }
        }
    }
    let mut i = 0;
    let out = log.filter(|_| {
        i += 1;
        alive[i - 1]
    });
    if out.is_empty() && !log.is_empty() {
        log::warn!("{k}-core of a log with {} events is empty", log.len());
    }
    out
}

/// A log restricted to its interacted items, with ids renumbered densely.
#[derive(Clone, Debug)]
pub struct Compacted {
    pub log: InteractionLog,
    pub catalog: ItemCatalog,
    /// `original[i]` is the old id of new item `i + 1`.
    pub original: Vec<ItemId>,
}

/// Drops items without events and renumbers the rest in ascending order of
/// their old ids. Groups, labels and metadata follow their items.
pub fn compact(log: &InteractionLog, catalog: &ItemCatalog) -> Result<Compacted> {
    let used: BTreeSet<ItemId> = log.interactions().iter().map(|e| e.item).collect();
    let original: Vec<ItemId> = used.into_iter().collect();
    let mut remap = vec![None; log.num_items()];
    for (new, old) in original.iter().enumerate() {
        remap[old.index()] = Some(ItemId::from_index(new));
    }
    let events = log
        .interactions()
        .iter()
        .map(|e| Interaction {
            item: remap[e.item.index()].expect("used item"),
            ..*e
        })
        .collect();
    let attr: Vec<GroupId> = original.iter().map(|&i| catalog.group(i)).collect();
    let mut sub = ItemCatalog::new(catalog.group_names().to_vec(), attr)?
        .with_meta(original.iter().map(|&i| catalog.meta(i).clone()).collect())?;
    if catalog.has_labels() {
        sub = sub.with_labels(original.iter().map(|&i| catalog.label(i).expect("labelled").to_string()).collect())?;
    }
    Ok(Compacted {
        log: InteractionLog::new(events, original.len())?,
        catalog: sub,
        original,
    })
}

/// Leave-latest-out evaluation split.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Every event except each user's held-out item.
    pub train: InteractionLog,
    pub test: BTreeMap<u32, BTreeSet<ItemId>>,
    pub source_item: BTreeMap<u32, ItemId>,
    /// Users with fewer than two distinct items.
    pub dropped: Vec<u32>,
}

impl Split {
    /// Distinct training items of every evaluated user.
    pub fn histories(&self) -> BTreeMap<u32, UserHistory> {
        let mut out: BTreeMap<u32, UserHistory> = self.source_item.keys().map(|&u| (u, UserHistory::empty())).collect();
        for e in self.train.interactions() {
            if let Some(h) = out.get_mut(&e.user) {
                h.insert(e.item);
            }
        }
        out
    }
}

/// Per user, orders events by timestamp (ties by item id), holds out the
/// latest item as the test item and uses the second latest as the source.
/// Users whose events lack timestamps are ordered by a seeded shuffle.
/// Repeated items count at their latest position.
pub fn make_split(log: &InteractionLog, seed: u64) -> Split {
    let mut test = BTreeMap::new();
    let mut source_item = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut held_out: HashMap<u32, ItemId> = HashMap::new();
    for (user, mut events) in log.by_user() {
        if events.iter().all(|e| e.timestamp.is_some()) {
            events.sort_by_key(|e| (e.timestamp, e.item));
        } else {
            events.sort_by_key(|e| (e.item, e.timestamp));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(user as u64);
            events.shuffle(&mut rng);
        }
        let mut order: Vec<ItemId> = Vec::new();
        for e in events.iter().rev() {
            if !order.contains(&e.item) {
                order.push(e.item);
                if order.len() == 2 {
                    break;
                }
            }
        }
        if order.len() < 2 {
            dropped.push(user);
            continue;
        }
        test.insert(user, BTreeSet::from([order[0]]));
        source_item.insert(user, order[1]);
        held_out.insert(user, order[0]);
    }
    if !dropped.is_empty() {
        log::warn!("{} users with fewer than two distinct items left out of the split", dropped.len());
    }
    let train = log.filter(|e| held_out.get(&e.user) != Some(&e.item));
    Split {
        train,
        test,
        source_item,
        dropped,
    }
}
