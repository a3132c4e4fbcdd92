//! Reading datasets and provider files from disk.

use std::fs;
use std::path::{Path, PathBuf};

use userside::error::{Error, Result};
use userside::eval::{BenchData, DatasetSpec};
use userside::io;
use userside::model::{ItemCatalog, ItemMeta};
use userside::provider::{adult_provider, AdultConfig, EmbeddingMatrix, InteractionLog, Metric};
use userside::recnet::RecommendationNetwork;

pub const CATALOG_FILE: &str = "catalog.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const FEATURES_FILE: &str = "features.tsv";

/// A catalog with whatever the provider can be built from.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub catalog: ItemCatalog,
    pub log: Option<InteractionLog>,
    /// Normalized census features, row `i` for item `i + 1`.
    pub features: Option<EmbeddingMatrix>,
}

impl Dataset {
    /// Reads an `ingest` output directory, or any raw dataset
    /// [`DatasetSpec::detect`] understands.
    pub fn load(path: &Path) -> Result<Self> {
        if path.join(CATALOG_FILE).is_file() {
            return Self::load_ingested(path);
        }
        Self::from_bench(DatasetSpec::detect(path)?.load()?)
    }

    fn load_ingested(dir: &Path) -> Result<Self> {
        let catalog = io::read_catalog(&dir.join(CATALOG_FILE))?;
        let log_path = dir.join(INTERACTIONS_FILE);
        let log = if log_path.is_file() {
            Some(io::read_interactions(&log_path, catalog.len())?)
        } else {
            None
        };
        let feat_path = dir.join(FEATURES_FILE);
        let features = if feat_path.is_file() {
            let x = io::read_embedding(&feat_path)?;
            if x.len() != catalog.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} has {} rows for {} items",
                    feat_path.display(),
                    x.len(),
                    catalog.len()
                )));
            }
            Some(x)
        } else {
            None
        };
        Ok(Dataset {
            name: dir_name(dir),
            catalog,
            log,
            features,
        })
    }

    fn from_bench(data: BenchData) -> Result<Self> {
        match data {
            BenchData::Interactions { name, log, catalog } => Ok(Dataset {
                name,
                catalog,
                log: Some(log),
                features: None,
            }),
            BenchData::Labeled { name, records } => {
                let p = adult_provider(&records, &AdultConfig::default())?;
                let meta = p
                    .lines
                    .iter()
                    .map(|l| ItemMeta {
                        external_id: Some(format!("line {l}")),
                        ..ItemMeta::default()
                    })
                    .collect();
                Ok(Dataset {
                    name,
                    catalog: p.catalog.with_meta(meta)?,
                    log: None,
                    features: Some(p.features),
                })
            }
        }
    }

    /// The benchmark input for this dataset. Census data has to come from
    /// the raw file since `ingest` keeps only normalized features.
    pub fn bench_data(path: &Path) -> Result<BenchData> {
        if path.join(CATALOG_FILE).is_file() {
            let d = Self::load_ingested(path)?;
            let log = d.log.ok_or_else(|| {
                Error::InvalidParameter(format!("{} has no {INTERACTIONS_FILE}; evaluate census data from the raw file", path.display()))
            })?;
            return Ok(BenchData::Interactions {
                name: d.name,
                log,
                catalog: d.catalog,
            });
        }
        DatasetSpec::detect(path)?.load()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = vec![dir.join(CATALOG_FILE)];
        io::write_catalog(&written[0], &self.catalog)?;
        if let Some(log) = &self.log {
            written.push(dir.join(INTERACTIONS_FILE));
            io::write_interactions(&written[1], log)?;
        }
        if let Some(x) = &self.features {
            let p = dir.join(FEATURES_FILE);
            io::write_embedding(&p, x)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn dir_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned())
}

/// What a provider file holds: an embedding ranked under some metric, or a
/// crawled network served as is.
#[derive(Clone, Debug)]
pub enum ProviderModel {
    Embedding { x: EmbeddingMatrix, metric: Metric },
    Network(RecommendationNetwork),
}

impl ProviderModel {
    pub fn num_items(&self) -> usize {
        match self {
            ProviderModel::Embedding { x, .. } => x.len(),
            ProviderModel::Network(g) => g.len(),
        }
    }
}

const METRIC_TAG: &str = "# metric=";

/// Embedding file with its metric recorded in a leading comment.
pub fn format_provider_embedding(x: &EmbeddingMatrix, metric: Metric) -> String {
    let name = match metric {
        Metric::Euclidean => "euclidean",
        Metric::InnerProduct => "inner-product",
    };
    format!("{METRIC_TAG}{name}\n{}", io::format_embedding(x))
}

/// Tells embeddings (`item_id` header) from networks (`src` header or a
/// `# n=` line). `metric` overrides the one recorded in the file, which
/// defaults to euclidean.
pub fn read_provider(path: &Path, metric: Option<Metric>) -> Result<ProviderModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut recorded = None;
    let mut network_tag = false;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(m) = line.strip_prefix(METRIC_TAG) {
            recorded = Some(m.trim().parse::<Metric>()?);
        } else if line.starts_with("# n=") {
            network_tag = true;
        } else if line.starts_with('#') {
            continue;
        } else if line.starts_with("item_id") {
            let x = io::parse_embedding(&text, path)?;
            return Ok(ProviderModel::Embedding {
                x,
                metric: metric.or(recorded).unwrap_or(Metric::Euclidean),
            });
        } else {
            break;
        }
    }
    let g = io::parse_network(&text, path)?;
    if !network_tag && g.is_empty() {
        return Err(Error::InvalidParameter(format!("{}: neither an embedding nor a network", path.display())));
    }
    Ok(ProviderModel::Network(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use userside::model::ItemId;

    #[test]
    fn provider_kind_is_sniffed() {
        let dir = tempfile::tempdir().unwrap();
        let x = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 0.0]]).unwrap();
        let emb = dir.path().join("x.tsv");
        fs::write(&emb, format_provider_embedding(&x, Metric::InnerProduct)).unwrap();
        match read_provider(&emb, None).unwrap() {
            ProviderModel::Embedding { x: got, metric } => {
                assert_eq!(got, x);
                assert_eq!(metric, Metric::InnerProduct);
            }
            other => panic!("{other:?}"),
        }
        match read_provider(&emb, Some(Metric::Euclidean)).unwrap() {
            ProviderModel::Embedding { metric, .. } => assert_eq!(metric, Metric::Euclidean),
            other => panic!("{other:?}"),
        }

        let g = RecommendationNetwork::from_lists(vec![
            vec![ItemId::new(2)],
            vec![ItemId::new(3)],
            vec![ItemId::new(1)],
        ])
        .unwrap();
        let net = dir.path().join("g.tsv");
        io::write_network(&net, &g).unwrap();
        match read_provider(&net, None).unwrap() {
            ProviderModel::Network(got) => assert_eq!(got.successors(ItemId::new(3)), &[ItemId::new(1)]),
            other => panic!("{other:?}"),
        }

        let junk = dir.path().join("junk.tsv");
        fs::write(&junk, "hello\tworld\n").unwrap();
        assert!(read_provider(&junk, None).is_err());
    }

    #[test]
    fn ingested_directory_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let catalog = ItemCatalog::from_group_names(&["a", "b", "a"]).unwrap();
        let d = Dataset {
            name: "t".into(),
            catalog: catalog.clone(),
            log: Some(
                InteractionLog::new(
                    vec![userside::provider::Interaction {
                        user: 4,
                        item: ItemId::new(2),
                        timestamp: Some(7),
                    }],
                    3,
                )
                .unwrap(),
            ),
            features: None,
        };
        let files = d.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.catalog, catalog);
        assert_eq!(back.log, d.log);
        assert!(back.features.is_none());
    }
}
