use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::model::ItemId;
use crate::recnet::{undirected_view, RecommendationNetwork, UndirectedGraph};

/// A probability vector over nodes (index = item index).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub pi: Vec<f64>,
}

/// Stationary distribution of the simple random walk on `g`:
/// `pi_i = deg(i) / sum_j deg(j)`.
pub fn estimate_density(g: &UndirectedGraph) -> Result<DensityEstimate> {
    g.require_connected()?;
    let total: usize = (0..g.len()).map(|i| g.degree(ItemId::from_index(i))).sum();
    if total == 0 {
        return Ok(DensityEstimate {
            pi: vec![1.0; g.len()],
        });
    }
    Ok(DensityEstimate {
        pi: (0..g.len())
            .map(|i| g.degree(ItemId::from_index(i)) as f64 / total as f64)
            .collect(),
    })
}

/// Stationary distribution of the lazy walk that follows a uniformly chosen
/// out-edge of the directed network, with a small uniform teleport so the
/// chain is ergodic even when the network is not strongly connected.
pub fn walk_density(g: &RecommendationNetwork) -> Result<DensityEstimate> {
    g.require_complete()?;
    let n = g.len();
    if n == 0 {
        return Ok(DensityEstimate { pi: Vec::new() });
    }
    const TELEPORT: f64 = 0.01;
    const ITERS: usize = 3000;
    let k = g.list_len().max(1) as f64;
    let mut s = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..ITERS {
        next.iter_mut().zip(&s).for_each(|(x, v)| *x = 0.5 * v);
        for (p, &mass) in s.iter().enumerate() {
            let share = 0.5 * mass / k;
            for q in g.successors(ItemId::from_index(p)) {
                next[q.index()] += share;
            }
        }
        for v in next.iter_mut() {
            *v = (1.0 - TELEPORT) * *v + TELEPORT / n as f64;
        }
        std::mem::swap(&mut s, &mut next);
    }
    let total: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= total);
    Ok(DensityEstimate { pi: s })
}

#[derive(Copy, Clone, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize, dist: &mut [f64]) {
    dist.iter_mut().for_each(|d| *d = f64::INFINITY);
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([State {
        dist: 0.0,
        node: source,
    }]);
    while let Some(State { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(State { dist: nd, node: v });
            }
        }
    }
}

/// All-pairs shortest path lengths over weighted adjacency lists, row-major.
fn all_pairs(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adj.len();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| dijkstra(adj, i, row));
    out
}

fn finite_matrix(n: usize, data: Vec<f64>, components: impl FnOnce() -> Vec<Vec<ItemId>>) -> Result<DistanceMatrix> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Disconnected {
            components: components(),
        });
    }
    DistanceMatrix::new(n, data)
}

/// Hop-count distances on `g`.
pub fn shortest_path_distances(g: &UndirectedGraph) -> Result<DistanceMatrix> {
    let adj: Vec<Vec<(usize, f64)>> = (0..g.len())
        .map(|i| g.neighbors(ItemId::from_index(i)).iter().map(|j| (j.index(), 1.0)).collect())
        .collect();
    finite_matrix(g.len(), all_pairs(&adj), || g.components())
}

/// Shortest paths on `g` with edge `{i, j}` weighted
/// `((pi_i + pi_j) / 2)^(-1/d)`.
pub fn density_shortest_path_distances(g: &UndirectedGraph, density: &DensityEstimate, d: usize) -> Result<DistanceMatrix> {
    if d == 0 || density.pi.len() != g.len() {
        return Err(Error::InvalidParameter("density length or dimension mismatch".into()));
    }
    g.require_connected()?;
    let pi = &density.pi;
    let e = -1.0 / d as f64;
    let adj: Vec<Vec<(usize, f64)>> = (0..g.len())
        .map(|i| {
            g.neighbors(ItemId::from_index(i))
                .iter()
                .map(|j| (j.index(), ((pi[i] + pi[j.index()]) / 2.0).powf(e)))
                .collect()
        })
        .collect();
    finite_matrix(g.len(), all_pairs(&adj), || g.components())
}

/// Density-weighted distances read off the directed network: the walk
/// density's square root sets edge weights as in
/// [`density_shortest_path_distances`], paths follow edge directions, and
/// each pair takes the shorter of its two directions.
pub fn walk_density_distances(g: &RecommendationNetwork, d: usize) -> Result<DistanceMatrix> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let undirected = undirected_view(g);
    undirected.require_connected()?;
    let p: Vec<f64> = walk_density(g)?.pi.iter().map(|v| v.sqrt()).collect();
    let e = -1.0 / d as f64;
    let weight = |i: usize, j: usize| ((p[i] + p[j]) / 2.0).powf(e);
    let n = g.len();
    let adj: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            g.successors(ItemId::from_index(i))
                .iter()
                .map(|j| (j.index(), weight(i, j.index())))
                .collect()
        })
        .collect();
    let mut dist = all_pairs(&adj);
    let mut unreachable = false;
    for i in 0..n {
        for j in 0..i {
            let m = dist[i * n + j].min(dist[j * n + i]);
            unreachable |= !m.is_finite();
            dist[i * n + j] = m;
            dist[j * n + i] = m;
        }
    }
    if unreachable {
        // pairs with no directed path either way fall back to the union graph
        let undirected_adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                undirected
                    .neighbors(ItemId::from_index(i))
                    .iter()
                    .map(|j| (j.index(), weight(i, j.index())))
                    .collect()
            })
            .collect();
        let alt = all_pairs(&undirected_adj);
        for (v, a) in dist.iter_mut().zip(alt) {
            if !v.is_finite() {
                *v = a;
            }
        }
    }
    finite_matrix(n, dist, || undirected.components())
}
