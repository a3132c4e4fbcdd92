//! Ordinal embedding: place points so that every item is closer to each of
//! its recommended items than to any item it does not recommend.
//!
//! The objective is
//! `sum_i sum_{j in N(i)} sum_{k not in N(i), k != i} max(0, margin + |y_i - y_j|^2 - |y_i - y_k|^2)^2`
//! on the embedding normalized to unit mean pairwise distance. It is
//! minimized by gradient descent with an adaptive step, warm-started from
//! classical scaling of hop distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{classical_mds, shortest_path_distances, RecoveryConfig};
use crate::error::{Error, Result};
use crate::model::ItemId;
use crate::provider::EmbeddingMatrix;
use crate::recnet::{undirected_view, RecommendationNetwork};

#[derive(Clone, Debug)]
pub struct OrdinalFit {
    pub embedding: EmbeddingMatrix,
    /// Objective after each accepted step, starting with the warm start.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Centers `y` and scales it to unit mean pairwise distance.
fn normalize(y: &mut [f64], n: usize, d: usize) {
    for c in 0..d {
        let mean = (0..n).map(|i| y[i * d + c]).sum::<f64>() / n as f64;
        (0..n).for_each(|i| y[i * d + c] -= mean);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dist2(y, d, i, j).sqrt();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mean = total / pairs;
    if mean > 0.0 {
        y.iter_mut().for_each(|v| *v /= mean);
    }
}

fn dist2(y: &[f64], d: usize, i: usize, j: usize) -> f64 {
    (0..d).map(|c| (y[i * d + c] - y[j * d + c]).powi(2)).sum()
}

struct Problem<'a> {
    n: usize,
    d: usize,
    margin: f64,
    /// Sorted out-neighbor indices of each node.
    neighbors: &'a [Vec<usize>],
}

impl Problem<'_> {
    /// Objective and gradient at `y`.
    fn eval(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let (n, d, margin) = (self.n, self.d, self.margin);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut f = 0.0;
        let mut row = vec![0.0; n];
        let mut is_nb = vec![false; n];
        let mut thr: Vec<(f64, usize)> = Vec::new();
        let mut active: Vec<(f64, usize)> = Vec::new();
        let mut coef = vec![0.0; n];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = dist2(y, d, i, j);
            }
            let nb = &self.neighbors[i];
            nb.iter().for_each(|&j| is_nb[j] = true);
            thr.clear();
            thr.extend(nb.iter().map(|&j| (margin + row[j], j)));
            thr.sort_by(|a, b| a.0.total_cmp(&b.0));
            let max_thr = thr.last().map_or(f64::NEG_INFINITY, |t| t.0);
            // only non-neighbors closer than the largest threshold matter
            active.clear();
            active.extend((0..n).filter(|&k| k != i && !is_nb[k] && row[k] < max_thr).map(|k| (row[k], k)));
            active.sort_by(|a, b| a.0.total_cmp(&b.0));
            nb.iter().for_each(|&j| is_nb[j] = false);

            let mut s1 = Vec::with_capacity(active.len() + 1);
            let mut s2 = Vec::with_capacity(active.len() + 1);
            s1.push(0.0);
            s2.push(0.0);
            for &(dk, _) in &active {
                s1.push(s1.last().unwrap() + dk);
                s2.push(s2.last().unwrap() + dk * dk);
            }
            // neighbor side: c_j = 2 sum_k max(0, t_j - d_k)
            for &(t, j) in &thr {
                let m = active.partition_point(|a| a.0 < t);
                let mf = m as f64;
                f += mf * t * t - 2.0 * t * s1[m] + s2[m];
                coef[j] = 2.0 * (mf * t - s1[m]);
            }
            // non-neighbor side: c_k = 2 sum_j max(0, t_j - d_k)
            let mut suffix = vec![0.0; thr.len() + 1];
            for q in (0..thr.len()).rev() {
                suffix[q] = suffix[q + 1] + thr[q].0;
            }
            for &(dk, k) in &active {
                let q = thr.partition_point(|t| t.0 <= dk);
                let cnt = (thr.len() - q) as f64;
                coef[k] = -2.0 * (suffix[q] - cnt * dk);
            }
            // d/dy_i |y_i - y_x|^2 = 2 (y_i - y_x)
            let touched = thr.iter().map(|t| t.1).chain(active.iter().map(|a| a.1));
            for x in touched {
                let c = coef[x];
                if c == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let g = 2.0 * c * (y[i * d + a] - y[x * d + a]);
                    grad[i * d + a] += g;
                    grad[x * d + a] -= g;
                }
                coef[x] = 0.0;
            }
        }
        f
    }
}

/// Ordinal embedding of a fully crawled network into `cfg.d` dimensions.
pub fn ordinal_embed(g: &RecommendationNetwork, cfg: &RecoveryConfig) -> Result<OrdinalFit> {
    cfg.validate()?;
    g.require_complete()?;
    let n = g.len();
    let d = cfg.d;
    if n < 2 {
        return Err(Error::InvalidParameter("ordinal embedding needs at least two items".into()));
    }
    let hops = shortest_path_distances(&undirected_view(g))?;
    let init = classical_mds(&hops, d)?;
    let mut y = init.embedding.as_slice().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = 1e-6 * y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    y.iter_mut().for_each(|v| *v += jitter * (rng.random::<f64>() - 0.5));
    normalize(&mut y, n, d);

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut v: Vec<usize> = g.successors(ItemId::from_index(i)).iter().map(|j| j.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let problem = Problem {
        n,
        d,
        margin: cfg.margin,
        neighbors: &neighbors,
    };
    let mut grad = vec![0.0; n * d];
    let mut f = problem.eval(&y, &mut grad);
    let mut objective = vec![f];
    let mut step = 1e-3;
    let mut trial = vec![0.0; n * d];
    let mut trial_grad = vec![0.0; n * d];
    let mut iterations = 0;
    let mut converged = f == 0.0;
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        loop {
            trial.iter_mut().zip(y.iter().zip(&grad)).for_each(|(t, (v, g))| *t = v - step * g);
            normalize(&mut trial, n, d);
            let ft = problem.eval(&trial, &mut trial_grad);
            if ft < f {
                let rel = (f - ft) / f;
                std::mem::swap(&mut y, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                f = ft;
                objective.push(f);
                step *= 1.5;
                converged = rel < cfg.tolerance || f == 0.0;
                break;
            }
            step /= 2.0;
            if step < 1e-12 {
                converged = true;
                break;
            }
        }
    }
    if !f.is_finite() {
        return Err(Error::RecoveryFailed { iterations, objective: f });
    }
    Ok(OrdinalFit {
        embedding: EmbeddingMatrix::new(n, d, y)?,
        objective,
        iterations,
        converged,
    })
}
