use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rayon::prelude::*;

use super::{squared_distance, EmbeddingMatrix, Metric};
use crate::error::{Error, Result};
use crate::model::{ItemId, RecList, UserHistory};
use crate::oracle::{AccessMeter, ProviderOracle};

/// Candidate ordered by (distance ascending, index ascending).
#[derive(Copy, Clone, Debug)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

/// Negated inner product, so that smaller is better; `+ 0.0` folds `-0.0`
/// into `0.0` so equal scores tie on the id.
fn ip_key(a: &[f64], b: &[f64]) -> f64 {
    -Metric::InnerProduct.similarity(a, b) + 0.0
}

/// Keeps the `cap` smallest candidates.
struct TopK {
    heap: BinaryHeap<Candidate>,
    cap: usize,
}

impl TopK {
    fn new(cap: usize) -> Self {
        TopK {
            heap: BinaryHeap::with_capacity(cap + 1),
            cap,
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.cap {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    fn worst(&self) -> Option<f64> {
        (self.heap.len() == self.cap).then(|| self.heap.peek().map_or(f64::INFINITY, |c| c.dist))
    }

    fn into_sorted(self) -> Vec<Candidate> {
        self.heap.into_sorted_vec()
    }
}

/// For every item, its `depth` most similar other items, best first, ties
/// broken by ascending item id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborTable {
    n: usize,
    depth: usize,
    ranked: Vec<ItemId>,
}

impl NeighborTable {
    pub fn build(x: &EmbeddingMatrix, metric: Metric, depth: usize) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Ok(NeighborTable {
                n,
                depth: 0,
                ranked: Vec::new(),
            });
        }
        if depth > n - 1 {
            return Err(Error::InvalidParameter(format!(
                "neighbor depth {depth} exceeds the {} other items",
                n - 1
            )));
        }
        let rows: Vec<Vec<ItemId>> = match metric {
            Metric::Euclidean => euclidean_rows(x, depth),
            Metric::InnerProduct => (0..n)
                .into_par_iter()
                .map(|i| {
                    let xi = x.row(i);
                    let mut top = TopK::new(depth);
                    for j in (0..n).filter(|&j| j != i) {
                        top.offer(Candidate {
                            dist: ip_key(xi, x.row(j)),
                            index: j,
                        });
                    }
                    top.into_sorted().into_iter().map(|c| ItemId::from_index(c.index)).collect()
                })
                .collect(),
        };
        Ok(NeighborTable {
            n,
            depth,
            ranked: rows.concat(),
        })
    }

    /// Reference construction: full sort of every row. `O(n^2 log n)`.
    pub fn brute_force(x: &EmbeddingMatrix, metric: Metric, depth: usize) -> Self {
        let n = x.len();
        let mut ranked = Vec::with_capacity(n * depth);
        for i in 0..n {
            let mut all: Vec<Candidate> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Candidate {
                    dist: match metric {
                        Metric::Euclidean => squared_distance(x.row(i), x.row(j)),
                        Metric::InnerProduct => ip_key(x.row(i), x.row(j)),
                    },
                    index: j,
                })
                .collect();
            all.sort();
            ranked.extend(all[..depth].iter().map(|c| ItemId::from_index(c.index)));
        }
        NeighborTable { n, depth, ranked }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn neighbors(&self, item: ItemId) -> &[ItemId] {
        let i = item.index();
        &self.ranked[i * self.depth..(i + 1) * self.depth]
    }
}

/// Sweep along the first coordinate; a side is abandoned once the gap in
/// that coordinate alone exceeds the current k-th best distance.
fn euclidean_rows(x: &EmbeddingMatrix, depth: usize) -> Vec<Vec<ItemId>> {
    let n = x.len();
    let d = x.dim();
    let mut order: Vec<usize> = (0..n).collect();
    if d > 0 {
        order.sort_by(|&a, &b| x.row(a)[0].total_cmp(&x.row(b)[0]).then(a.cmp(&b)));
    }
    let mut pos = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut top = TopK::new(depth);
            let scan = |p: usize, top: &mut TopK| -> bool {
                let j = order[p];
                if d > 0 {
                    let gap = x.row(j)[0] - xi[0];
                    if let Some(worst) = top.worst() {
                        if gap * gap > worst {
                            return false;
                        }
                    }
                }
                top.offer(Candidate {
                    dist: squared_distance(xi, x.row(j)),
                    index: j,
                });
                true
            };
            for p in pos[i] + 1..n {
                if !scan(p, &mut top) {
                    break;
                }
            }
            for p in (0..pos[i]).rev() {
                if !scan(p, &mut top) {
                    break;
                }
            }
            top.into_sorted().into_iter().map(|c| ItemId::from_index(c.index)).collect()
        })
        .collect()
}

/// Exact top-`K` provider over a neighbor table, hiding one user's history.
#[derive(Debug)]
pub struct KnnProvider {
    table: Arc<NeighborTable>,
    k: usize,
    history: UserHistory,
    meter: AccessMeter,
}

impl KnnProvider {
    pub fn from_table(table: Arc<NeighborTable>, k: usize, history: UserHistory) -> Result<Self> {
        let n = table.len();
        if n <= k + history.len() {
            return Err(Error::InvalidParameter(format!(
                "{n} items cannot fill lists of {k} while hiding {} history items",
                history.len()
            )));
        }
        if table.depth() < (k + history.len()).min(n - 1) {
            return Err(Error::InvalidParameter(format!(
                "neighbor table depth {} is too shallow for K={k} and |H|={}",
                table.depth(),
                history.len()
            )));
        }
        Ok(KnnProvider {
            table,
            k,
            history,
            meter: AccessMeter::default(),
        })
    }

    pub fn table(&self) -> &Arc<NeighborTable> {
        &self.table
    }

    pub fn history(&self) -> &UserHistory {
        &self.history
    }
}

impl ProviderOracle for KnnProvider {
    fn num_items(&self) -> usize {
        self.table.len()
    }

    fn list_len(&self) -> usize {
        self.k
    }

    fn query(&self, item: ItemId) -> Result<RecList> {
        if item.index() >= self.table.len() {
            return Err(Error::UnknownItem(item));
        }
        self.meter.record();
        let list: Vec<ItemId> = self
            .table
            .neighbors(item)
            .iter()
            .copied()
            .filter(|j| !self.history.contains(*j))
            .take(self.k)
            .collect();
        debug_assert_eq!(list.len(), self.k);
        Ok(RecList::new(list))
    }

    fn access_count(&self) -> u64 {
        self.meter.get()
    }
}

/// Builds the exact k-NN provider over `x`, hiding `history` from every page.
pub fn knn_provider(x: &EmbeddingMatrix, k: usize, metric: Metric, history: UserHistory) -> Result<KnnProvider> {
    let n = x.len();
    if n <= k + history.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} items cannot fill lists of {k} while hiding {} history items",
            history.len()
        )));
    }
    let table = NeighborTable::build(x, metric, (k + history.len()).min(n - 1))?;
    KnnProvider::from_table(Arc::new(table), k, history)
}
