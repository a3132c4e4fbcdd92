//! Simulated providers: exact k-NN over hidden item embeddings, a BPR-trained
//! latent factor model, and the census-record provider.

mod adult;
mod bpr;
mod knn;

pub use adult::{adult_provider, parse_adult, parse_adult_str, AdultConfig, AdultFeature, AdultProvider, AdultRecord};
pub use bpr::{train_bpr, BprConfig, BprModel};
pub use knn::{knn_provider, KnnProvider, NeighborTable};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ItemId;

/// Similarity used to rank neighbors.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Smaller euclidean distance is more similar.
    Euclidean,
    /// Larger inner product is more similar.
    InnerProduct,
}

impl Metric {
    /// Larger is more similar.
    pub fn similarity(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => -squared_distance(a, b),
            Metric::InnerProduct => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "inner-product" | "inner" | "ip" => Ok(Metric::InnerProduct),
            other => Err(Error::InvalidParameter(format!("unknown metric '{other}'"))),
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major `n x d` matrix; row `i` holds the vector of item `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::InvalidParameter(format!(
                "{} values for a {n}x{d} embedding",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite embedding entry in row {}",
                pos / d.max(1) + 1
            )));
        }
        Ok(EmbeddingMatrix { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter("ragged embedding rows".into()));
        }
        EmbeddingMatrix::new(rows.len(), d, rows.concat())
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        EmbeddingMatrix {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.d..(index + 1) * self.d]
    }

    pub fn row_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.d..(index + 1) * self.d]
    }

    pub fn vector(&self, item: ItemId) -> &[f64] {
        self.row(item.index())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Similarity of every item to `source` (index = item index).
    pub fn similarities(&self, source: ItemId, metric: Metric) -> Vec<f64> {
        let s = self.vector(source);
        (0..self.n).map(|i| metric.similarity(s, self.row(i))).collect()
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    pub fn from_dmatrix(m: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        EmbeddingMatrix::new(n, d, data)
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            n: indices.len(),
            d: self.d,
            data,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: ItemId,
    pub timestamp: Option<i64>,
}

/// Implicit-feedback events over a catalog of `num_items` items.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    num_items: usize,
}

impl InteractionLog {
    /// Drops exact duplicate events, keeping first occurrences in order.
    pub fn new(interactions: Vec<Interaction>, num_items: usize) -> Result<Self> {
        if let Some(bad) = interactions.iter().find(|e| e.item.index() >= num_items) {
            return Err(Error::UnknownItem(bad.item));
        }
        let mut seen = HashSet::with_capacity(interactions.len());
        let interactions = interactions.into_iter().filter(|e| seen.insert(*e)).collect();
        Ok(InteractionLog {
            interactions,
            num_items,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Distinct users, ascending.
    pub fn users(&self) -> Vec<u32> {
        let mut u: Vec<u32> = self.interactions.iter().map(|e| e.user).collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    /// Events grouped by user, each user's events in log order.
    pub fn by_user(&self) -> BTreeMap<u32, Vec<Interaction>> {
        let mut out: BTreeMap<u32, Vec<Interaction>> = BTreeMap::new();
        for e in &self.interactions {
            out.entry(e.user).or_default().push(*e);
        }
        out
    }

    /// Number of distinct users per item (index = item index).
    pub fn item_degrees(&self) -> Vec<usize> {
        let mut pairs: Vec<(usize, u32)> = self.interactions.iter().map(|e| (e.item.index(), e.user)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut deg = vec![0; self.num_items];
        for (i, _) in pairs {
            deg[i] += 1;
        }
        deg
    }

    /// Number of events per item, duplicates of a (user, item) pair included.
    pub fn item_event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for e in &self.interactions {
            counts[e.item.index()] += 1;
        }
        counts
    }

    /// Keeps only the events accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Interaction) -> bool) -> Self {
        InteractionLog {
            interactions: self.interactions.iter().copied().filter(|e| keep(e)).collect(),
            num_items: self.num_items,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_dedupes_exact_triples() {
        let e = |u, i, t| Interaction {
            user: u,
            item: ItemId::new(i),
            timestamp: Some(t),
        };
        let log = InteractionLog::new(vec![e(1, 1, 5), e(1, 1, 5), e(1, 1, 6), e(2, 2, 1)], 2).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.item_degrees(), vec![1, 1]);
        assert_eq!(log.users(), vec![1, 2]);
    }

    #[test]
    fn log_rejects_unknown_items() {
        let e = Interaction {
            user: 1,
            item: ItemId::new(3),
            timestamp: None,
        };
        assert!(InteractionLog::new(vec![e], 2).is_err());
    }

    #[test]
    fn embedding_rejects_nan() {
        assert!(EmbeddingMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }
}
