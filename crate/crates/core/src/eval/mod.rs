//! Datasets, evaluation protocol, ranking metrics and the benchmark runner.

mod bench;
mod ingest;
mod metrics;
mod prep;

pub use bench::{run_benchmark, BenchConfig, BenchData, BenchReport, DatasetSpec, MethodRow};
pub use ingest::{ingest_movielens, ingest_triples, GroupRule, OTHER, PROTECTED};
pub use metrics::{label_accuracy, ndcg_at_k, recall_at_k};
pub use prep::{compact, kcore, make_split, Compacted, Split};
