use super::{fair_greedy_rerank, RecResult};
use crate::error::{Error, Result};
use crate::model::{AccessCount, AccessStats, ItemCatalog, ItemId, UserHistory};
use crate::provider::{EmbeddingMatrix, Metric};
use crate::recnet::RecommendationNetwork;
use crate::recovery::{recover, Recovery, RecoveryConfig};

/// Recovers coordinates once from the full network, then answers every
/// request by fair re-ranking of recovered distances.
#[derive(Clone, Debug)]
pub struct EtpRecommender {
    recovery: Recovery,
}

impl EtpRecommender {
    pub fn new(g: &RecommendationNetwork, cfg: &RecoveryConfig) -> Result<Self> {
        Ok(EtpRecommender {
            recovery: recover(g, cfg)?,
        })
    }

    pub fn from_embedding(embedding: EmbeddingMatrix) -> Self {
        EtpRecommender {
            recovery: Recovery {
                embedding,
                converged: true,
                iterations: 0,
            },
        }
    }

    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.recovery.embedding
    }

    pub fn converged(&self) -> bool {
        self.recovery.converged
    }

    pub fn recommend(&self, catalog: &ItemCatalog, source: ItemId, history: &UserHistory, k: usize, tau: usize) -> Result<RecResult> {
        let x = &self.recovery.embedding;
        if x.len() != catalog.len() {
            return Err(Error::InvalidParameter("embedding and catalog sizes differ".into()));
        }
        catalog.check(source)?;
        let scores = x.similarities(source, Metric::Euclidean);
        let list = fair_greedy_rerank(&scores, catalog, Some(source), history, k, tau)?;
        let stats = AccessStats {
            accesses: AccessCount::Finite(x.len() as u64),
            walk_length: 0,
        };
        Ok(RecResult::new(catalog, list.into_vec(), stats, Vec::new(), false))
    }
}

/// One-shot estimate-then-post-process.
pub fn etp(
    g: &RecommendationNetwork,
    catalog: &ItemCatalog,
    source: ItemId,
    history: &UserHistory,
    k: usize,
    tau: usize,
    cfg: &RecoveryConfig,
) -> Result<RecResult> {
    EtpRecommender::new(g, cfg)?.recommend(catalog, source, history, k, tau)
}
