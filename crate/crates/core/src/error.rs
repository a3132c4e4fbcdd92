use std::path::PathBuf;

use crate::model::ItemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("item {0} is outside the catalog")]
    UnknownItem(ItemId),

    #[error("group id {0} is not part of the catalog")]
    UnknownGroup(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible request: {0}")]
    Infeasible(Infeasibility),

    #[error("oracle failed while fetching the page of item {item}: {source}")]
    Oracle {
        item: ItemId,
        #[source]
        source: Box<Error>,
    },

    #[error("graph is disconnected ({} components, sizes {:?})", .components.len(), .components.iter().map(Vec::len).collect::<Vec<_>>())]
    Disconnected { components: Vec<Vec<ItemId>> },

    #[error("network is missing the pages of {missing} items; a full crawl is required")]
    IncompleteNetwork { missing: usize },

    #[error("embedding recovery did not converge after {iterations} iterations (objective {objective:.6e})")]
    RecoveryFailed { iterations: usize, objective: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

/// Why a fairness requirement cannot be met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasibility {
    /// `tau * |A| > K`.
    QuotaExceedsList { tau: usize, groups: usize, k: usize },
    /// A group has fewer than `tau` items that may still be recommended.
    GroupTooSmall {
        group: String,
        available: usize,
        tau: usize,
    },
    /// Fewer than `K` items remain after removing the history and the source.
    NotEnoughItems { available: usize, k: usize },
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::QuotaExceedsList { tau, groups, k } => {
                write!(f, "tau={tau} for {groups} groups needs {} slots but K={k}", tau * groups)
            }
            Infeasibility::GroupTooSmall {
                group,
                available,
                tau,
            } => write!(f, "group '{group}' has only {available} eligible items, tau={tau}"),
            Infeasibility::NotEnoughItems { available, k } => {
                write!(f, "only {available} eligible items for a list of length {k}")
            }
        }
    }
}
