//! Recovering hidden item coordinates from the unweighted recommendation
//! network, up to a similarity transform.

mod align;
mod density;
mod mds;
mod ordinal;

pub use align::{pairwise_distances, procrustes_align, spearman, Alignment};
pub use density::{
    density_shortest_path_distances, estimate_density, shortest_path_distances, walk_density, walk_density_distances,
    DensityEstimate,
};
pub use mds::{classical_mds, Mds};
pub use ordinal::{ordinal_embed, OrdinalFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::EmbeddingMatrix;
use crate::recnet::RecommendationNetwork;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMethod {
    Ordinal,
    DensityMds,
}

impl std::str::FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinal" | "loe" => Ok(RecoveryMethod::Ordinal),
            "density-mds" | "density" | "mds" => Ok(RecoveryMethod::DensityMds),
            other => Err(Error::InvalidParameter(format!("unknown recovery method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// Dimension of the hidden embedding, assumed known.
    pub d: usize,
    pub method: RecoveryMethod,
    pub max_iters: usize,
    /// Relative objective decrease below which the ordinal solver stops.
    pub tolerance: f64,
    /// Seeds the jitter added to the ordinal warm start.
    pub seed: u64,
    /// Hinge margin of the ordinal objective, in units of the mean
    /// pairwise distance.
    pub margin: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            d: 2,
            method: RecoveryMethod::Ordinal,
            max_iters: 300,
            tolerance: 1e-7,
            seed: 0,
            margin: 0.1,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.tolerance > 0.0) || !(self.margin > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter(format!("invalid recovery configuration {self:?}")));
        }
        Ok(())
    }
}

/// Square, symmetric, nonnegative, zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks symmetry (to 1e-9 relative), zero diagonal and nonnegativity.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidParameter(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {}", i + 1)));
            }
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if !(a >= 0.0) || !(b >= 0.0) || (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "entries ({}, {}) are negative, NaN or asymmetric",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    data[i * n + j] = f(i, j);
                }
            }
        }
        DistanceMatrix::new(n, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Entries above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }
}

/// What a recovery run produced.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub embedding: EmbeddingMatrix,
    pub converged: bool,
    pub iterations: usize,
}

/// Recovers coordinates from a fully crawled network.
pub fn recover(g: &RecommendationNetwork, cfg: &RecoveryConfig) -> Result<Recovery> {
    cfg.validate()?;
    g.require_complete()?;
    match cfg.method {
        RecoveryMethod::Ordinal => {
            let fit = ordinal_embed(g, cfg)?;
            Ok(Recovery {
                embedding: fit.embedding,
                converged: fit.converged,
                iterations: fit.iterations,
            })
        }
        RecoveryMethod::DensityMds => {
            let d = walk_density_distances(g, cfg.d)?;
            let m = classical_mds(&d, cfg.d)?;
            Ok(Recovery {
                embedding: m.embedding,
                converged: !m.degenerate,
                iterations: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_matrix_checks() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        let d = DistanceMatrix::from_fn(3, |i, j| (i as f64 - j as f64).abs()).unwrap();
        assert_eq!(d.upper_triangle(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn method_names() {
        assert_eq!("ordinal".parse::<RecoveryMethod>().unwrap(), RecoveryMethod::Ordinal);
        assert_eq!("density-mds".parse::<RecoveryMethod>().unwrap(), RecoveryMethod::DensityMds);
        assert!("pca".parse::<RecoveryMethod>().is_err());
    }
}
