//! Bayesian personalized ranking with uniform negative sampling, trained by
//! plain SGD. Item similarity is the inner product of item factors.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, InteractionLog};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BprConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            factors: 64,
            learning_rate: 0.01,
            regularization: 0.01,
            epochs: 100,
            seed: 0,
        }
    }
}

impl BprConfig {
    fn validate(&self) -> Result<()> {
        if self.factors == 0 || !(self.learning_rate > 0.0) || !(self.regularization >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid BPR configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BprModel {
    pub item_factors: EmbeddingMatrix,
    pub user_factors: EmbeddingMatrix,
    /// Dense row of each external user id in `user_factors`.
    pub user_index: HashMap<u32, usize>,
    /// Mean `-ln sigmoid(x_uij)` on a fixed sample of triples, measured
    /// before training (entry 0) and after each epoch.
    pub loss_history: Vec<f64>,
}

struct Factors {
    users: Vec<f64>,
    items: Vec<f64>,
    f: usize,
}

impl Factors {
    fn score(&self, u: usize, i: usize, j: usize) -> f64 {
        let f = self.f;
        let pu = &self.users[u * f..(u + 1) * f];
        let qi = &self.items[i * f..(i + 1) * f];
        let qj = &self.items[j * f..(j + 1) * f];
        pu.iter().zip(qi.iter().zip(qj)).map(|(p, (a, b))| p * (a - b)).sum()
    }
}

fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Trains item (and user) factors. Deterministic for a fixed seed and log
/// order; `epochs = 0` returns the seeded initialization.
pub fn train_bpr(log: &InteractionLog, cfg: &BprConfig) -> Result<BprModel> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(Error::InvalidParameter("cannot train BPR on an empty log".into()));
    }
    let n_items = log.num_items();
    if n_items < 2 {
        return Err(Error::InvalidParameter("BPR needs at least two items".into()));
    }
    let users = log.users();
    let user_index: HashMap<u32, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();

    // distinct positive pairs, in first-seen order
    let mut liked: Vec<Vec<usize>> = vec![Vec::new(); users.len()];
    let mut positives: Vec<(usize, usize)> = Vec::new();
    for e in log.interactions() {
        let u = user_index[&e.user];
        let i = e.item.index();
        if !liked[u].contains(&i) {
            liked[u].push(i);
            positives.push((u, i));
        }
    }
    for l in &mut liked {
        l.sort_unstable();
    }
    if liked.iter().any(|l| l.len() == n_items) {
        return Err(Error::InvalidParameter(
            "a user interacted with every item; no negatives to sample".into(),
        ));
    }

    let f = cfg.factors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = |len: usize| -> Vec<f64> { (0..len).map(|_| (rng.random::<f64>() - 0.5) / f as f64).collect() };
    let mut model = Factors {
        users: init(users.len() * f),
        items: init(n_items * f),
        f,
    };

    let sample_negative = |rng: &mut ChaCha8Rng, u: usize| loop {
        let j = rng.random_range(0..n_items);
        if liked[u].binary_search(&j).is_err() {
            return j;
        }
    };

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eval_len = positives.len().min(20_000);
    let eval: Vec<(usize, usize, usize)> = (0..eval_len)
        .map(|_| {
            let (u, i) = positives[eval_rng.random_range(0..positives.len())];
            (u, i, sample_negative(&mut eval_rng, u))
        })
        .collect();
    let loss = |m: &Factors| -> f64 { -eval.iter().map(|&(u, i, j)| ln_sigmoid(m.score(u, i, j))).sum::<f64>() / eval.len() as f64 };

    let mut loss_history = vec![loss(&model)];
    let lr = cfg.learning_rate;
    let reg = cfg.regularization;
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut pu_old = vec![0.0; f];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let (u, i) = positives[p];
            let j = sample_negative(&mut rng, u);
            let x = model.score(u, i, j);
            // d/dx ln sigmoid(x) = sigmoid(-x)
            let z = 1.0 / (1.0 + x.exp());
            pu_old.copy_from_slice(&model.users[u * f..(u + 1) * f]);
            #[allow(clippy::needless_range_loop)]
            for k in 0..f {
                let qi = model.items[i * f + k];
                let qj = model.items[j * f + k];
                model.users[u * f + k] += lr * (z * (qi - qj) - reg * pu_old[k]);
                model.items[i * f + k] += lr * (z * pu_old[k] - reg * qi);
                model.items[j * f + k] += lr * (-z * pu_old[k] - reg * qj);
            }
        }
        loss_history.push(loss(&model));
    }

    Ok(BprModel {
        item_factors: EmbeddingMatrix::new(n_items, f, model.items)?,
        user_factors: EmbeddingMatrix::new(users.len(), f, model.users)?,
        user_index,
        loss_history,
    })
}
