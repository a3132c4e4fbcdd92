use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::ingest::{ingest_movielens, ingest_triples, GroupRule};
use super::metrics::{label_accuracy, ndcg_at_k, recall_at_k};
use super::prep::{compact, kcore, make_split};
use crate::algos::{
    consul, oracle_method, pp_baseline, private_rank, private_walk, provider_method, ConsulParams, EtpRecommender, Method,
    RecResult, WalkParams,
};
use crate::error::{Error, Infeasibility, Result};
use crate::model::{AccessCount, ItemCatalog, ItemId, UserHistory};
use crate::provider::{
    adult_provider, parse_adult, train_bpr, AdultConfig, AdultFeature, AdultRecord, BprConfig, EmbeddingMatrix, InteractionLog,
    KnnProvider, Metric, NeighborTable,
};
use crate::recnet::{crawl_all, PageRankParams, RecommendationNetwork};
use crate::recovery::RecoveryConfig;

/// Where a dataset lives and how to read it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetSpec {
    /// Directory holding `u.data` and `u.item`.
    MovieLens(PathBuf),
    /// Census file, comma-separated.
    Adult(PathBuf),
    /// `user item rating? timestamp?` table.
    Triples(PathBuf),
}

impl DatasetSpec {
    /// Picks the reader from the path: a directory with `u.data` is
    /// MovieLens, a directory with `adult.data` or a `.data`/`.test` file is
    /// the census format, anything else is a triple table.
    pub fn detect(path: &Path) -> Result<Self> {
        if path.is_dir() {
            if path.join("u.data").is_file() {
                return Ok(DatasetSpec::MovieLens(path.into()));
            }
            if path.join("adult.data").is_file() {
                return Ok(DatasetSpec::Adult(path.join("adult.data")));
            }
            return Err(Error::InvalidParameter(format!("{}: no known dataset layout", path.display())));
        }
        if !path.is_file() {
            return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("data" | "test") => Ok(DatasetSpec::Adult(path.into())),
            _ => Ok(DatasetSpec::Triples(path.into())),
        }
    }

    pub fn load(&self) -> Result<BenchData> {
        let name = |p: &Path| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned());
        Ok(match self {
            DatasetSpec::MovieLens(dir) => {
                let (log, catalog) = ingest_movielens(dir)?;
                BenchData::Interactions {
                    name: name(dir),
                    log,
                    catalog,
                }
            }
            DatasetSpec::Triples(path) => {
                let (log, catalog) = ingest_triples(path)?;
                BenchData::Interactions {
                    name: name(path),
                    log,
                    catalog,
                }
            }
            DatasetSpec::Adult(path) => BenchData::Labeled {
                name: name(path),
                records: parse_adult(path)?,
            },
        })
    }
}

#[derive(Clone, Debug)]
pub enum BenchData {
    /// Implicit feedback; the provider is BPR and quality is nDCG/recall of
    /// each user's held-out item.
    Interactions {
        name: String,
        log: InteractionLog,
        catalog: ItemCatalog,
    },
    /// Census records; the provider is exact k-NN on features and quality is
    /// label accuracy.
    Labeled { name: String, records: Vec<AdultRecord> },
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub k: usize,
    pub tau: usize,
    pub l_max: usize,
    pub patience: usize,
    pub seed: u64,
    pub rule: GroupRule,
    /// Applied to interaction logs before splitting.
    pub kcore: Option<usize>,
    /// Evaluate a seeded sample of this many users or source items.
    pub max_cases: Option<usize>,
    /// Its seed is replaced by `seed`.
    pub bpr: BprConfig,
    /// Its `k` and `seed` are replaced.
    pub adult: AdultConfig,
    pub recovery: RecoveryConfig,
}

impl BenchConfig {
    pub fn new(k: usize, tau: usize) -> Self {
        BenchConfig {
            methods: vec![Method::Provider, Method::Oracle, Method::PrivateRank, Method::PrivateWalk, Method::Consul],
            k,
            tau,
            l_max: 100,
            patience: 100,
            seed: 0,
            rule: GroupRule::YearBefore { year: 1990 },
            kcore: None,
            max_cases: None,
            bpr: BprConfig::default(),
            adult: AdultConfig {
                features: vec![AdultFeature::Age, AdultFeature::EducationNum, AdultFeature::CapitalGain],
                ..AdultConfig::default()
            },
            recovery: RecoveryConfig::default(),
        }
    }
}

fn serialize_mean<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

/// Aggregates of one method over all cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Mean accesses per call; infinite for methods reading hidden scores.
    #[serde(serialize_with = "serialize_mean")]
    pub accesses: f64,
    pub max_accesses: AccessCount,
    /// Lists with some group below `tau`.
    pub fairness_violations: usize,
    /// Lists with every group at exactly `tau`.
    pub exact_quota_lists: usize,
    /// Lists shorter than `K`.
    pub short_lists: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub dataset: String,
    pub rule: String,
    pub k: usize,
    pub tau: usize,
    pub seed: u64,
    pub items: usize,
    pub groups: BTreeMap<String, usize>,
    pub cases: usize,
    pub rows: Vec<MethodRow>,
}

impl BenchReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// One line per method, columns as in the JSON report.
    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("method\tndcg\trecall\taccuracy\taccess\tfairness_violations\n");
        for r in &self.rows {
            let access = if r.accesses.is_finite() {
                format!("{:.1}", r.accesses)
            } else {
                "inf".into()
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{access}\t{}",
                r.method,
                opt(r.ndcg),
                opt(r.recall),
                opt(r.accuracy),
                r.fairness_violations
            );
        }
        out
    }
}

struct Case {
    source: ItemId,
    history: UserHistory,
    relevant: Option<BTreeSet<ItemId>>,
}

/// What every case shares.
struct Env {
    catalog: ItemCatalog,
    table: Arc<NeighborTable>,
    hidden: EmbeddingMatrix,
    metric: Metric,
    /// The crawled network when no case hides a history.
    network: Option<RecommendationNetwork>,
    etp: Option<EtpRecommender>,
}

struct Outcome {
    result: RecResult,
    ndcg: Option<f64>,
    recall: Option<f64>,
    accuracy: Option<f64>,
}

fn run_case(env: &Env, cfg: &BenchConfig, index: usize, case: &Case) -> Result<Vec<Outcome>> {
    let (k, tau) = (cfg.k, cfg.tau);
    let provider = KnnProvider::from_table(Arc::clone(&env.table), k, case.history.clone())?;
    let mut own_network = None;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let result = match method {
            Method::Provider => provider_method(&provider, &env.catalog, case.source)?,
            Method::Consul => {
                let p = ConsulParams {
                    l_max: cfg.l_max,
                    seed: cfg.seed,
                    ..ConsulParams::new(k, tau)
                };
                consul(&provider, &env.catalog, case.source, &case.history, &p)?
            }
            Method::PrivateWalk => {
                let p = WalkParams {
                    l_max: cfg.l_max,
                    patience: cfg.patience,
                    seed: cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    ..WalkParams::new(k, tau)
                };
                private_walk(&provider, &env.catalog, case.source, &case.history, &p)?
            }
            Method::PrivateRank => {
                let g = match &env.network {
                    Some(g) => g,
                    None => own_network.get_or_insert(crawl_all(&provider)?),
                };
                private_rank(g, &env.catalog, case.source, &case.history, k, tau, &PageRankParams::for_list_len(k))?
            }
            Method::Pp => pp_baseline(&provider, &env.catalog, case.source, &case.history, k, tau)?,
            Method::Oracle => oracle_method(&env.hidden, env.metric, &env.catalog, case.source, &case.history, k, tau)?,
            Method::Etp => env
                .etp
                .as_ref()
                .expect("recovered before the run")
                .recommend(&env.catalog, case.source, &case.history, k, tau)?,
        };
        let list = result.list.items();
        let (ndcg, recall, accuracy) = match &case.relevant {
            Some(rel) => (Some(ndcg_at_k(list, rel, k)?), Some(recall_at_k(list, rel, k)?), None),
            None => (None, None, Some(label_accuracy(list, case.source, &env.catalog)?)),
        };
        outcomes.push(Outcome {
            result,
            ndcg,
            recall,
            accuracy,
        });
    }
    Ok(outcomes)
}

fn sample_cases(cases: Vec<Case>, max: Option<usize>, seed: u64) -> Vec<Case> {
    match max {
        Some(m) if m < cases.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, cases.len(), m).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<Case>> = cases.into_iter().map(Some).collect();
            keep.into_iter().map(|i| slots[i].take().expect("distinct")).collect()
        }
        _ => cases,
    }
}

fn prepare(data: &BenchData, cfg: &BenchConfig) -> Result<(String, Env, Vec<Case>)> {
    match data {
        BenchData::Interactions { name, log, catalog } => {
            let (log, catalog) = match cfg.kcore {
                Some(c) => {
                    let sub = compact(&kcore(log, c), catalog)?;
                    (sub.log, sub.catalog)
                }
                None => (log.clone(), catalog.clone()),
            };
            let catalog = cfg.rule.apply(&catalog, Some(&log), None)?;
            let split = make_split(&log, cfg.seed);
            let bpr = BprConfig {
                seed: cfg.seed,
                ..cfg.bpr.clone()
            };
            let model = train_bpr(&split.train, &bpr)?;
            let histories = split.histories();
            let longest = histories.values().map(UserHistory::len).max().unwrap_or(0);
            let depth = (cfg.k + longest).min(catalog.len().saturating_sub(1));
            let table = NeighborTable::build(&model.item_factors, Metric::InnerProduct, depth)?;
            let cases = split
                .source_item
                .iter()
                .map(|(user, &source)| Case {
                    source,
                    history: histories[user].clone(),
                    relevant: Some(split.test[user].clone()),
                })
                .collect();
            let env = Env {
                catalog,
                table: Arc::new(table),
                hidden: model.item_factors,
                metric: Metric::InnerProduct,
                network: None,
                etp: None,
            };
            Ok((name.clone(), env, cases))
        }
        BenchData::Labeled { name, records } => {
            let acfg = AdultConfig {
                k: cfg.k,
                seed: cfg.seed,
                ..cfg.adult.clone()
            };
            let p = adult_provider(records, &acfg)?;
            let catalog = cfg.rule.apply(&p.catalog, None, None)?;
            let cases = catalog
                .items()
                .map(|source| Case {
                    source,
                    history: UserHistory::empty(),
                    relevant: None,
                })
                .collect();
            let env = Env {
                catalog,
                table: Arc::clone(p.provider.table()),
                hidden: p.features,
                metric: Metric::Euclidean,
                network: None,
                etp: None,
            };
            Ok((name.clone(), env, cases))
        }
    }
}

/// Runs every configured method on every case and aggregates the results.
/// Infeasible fairness requirements are reported before any method runs.
/// The report depends only on the data and the configuration.
pub fn run_benchmark(data: &BenchData, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    let (name, mut env, cases) = prepare(data, cfg)?;
    let groups = env.catalog.num_groups();
    if cfg.tau * groups > cfg.k {
        return Err(Error::Infeasible(Infeasibility::QuotaExceedsList {
            tau: cfg.tau,
            groups,
            k: cfg.k,
        }));
    }
    let cases = sample_cases(cases, cfg.max_cases, cfg.seed);
    for c in &cases {
        env.catalog.check_feasible(c.source, &c.history, cfg.k, cfg.tau)?;
    }
    let shared_history = cases.iter().all(|c| c.history.is_empty());
    let needs_network = cfg.methods.contains(&Method::Etp) || (shared_history && cfg.methods.contains(&Method::PrivateRank));
    if needs_network {
        let plain = KnnProvider::from_table(Arc::clone(&env.table), cfg.k, UserHistory::empty())?;
        let g = crawl_all(&plain)?;
        if cfg.methods.contains(&Method::Etp) {
            log::info!("recovering a {}-dimensional embedding of {} items", cfg.recovery.d, g.len());
            env.etp = Some(EtpRecommender::new(&g, &cfg.recovery)?);
        }
        if shared_history {
            env.network = Some(g);
        }
    }
    log::info!("evaluating {} cases on {name}", cases.len());
    let per_case: Vec<Vec<Outcome>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_case(&env, cfg, i, c))
        .collect::<Result<_>>()?;

    let n = cases.len().max(1) as f64;
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let outs = per_case.iter().map(|o| &o[m]);
            let mean = |f: &dyn Fn(&Outcome) -> Option<f64>| -> Option<f64> {
                let vals: Option<Vec<f64>> = per_case.iter().map(|o| f(&o[m])).collect();
                vals.map(|v| v.iter().sum::<f64>() / n)
            };
            let mut total = 0u64;
            let mut max = AccessCount::Finite(0);
            for o in outs.clone() {
                match (o.result.stats.accesses, max) {
                    (AccessCount::Finite(a), AccessCount::Finite(b)) => {
                        total += a;
                        max = AccessCount::Finite(a.max(b));
                    }
                    _ => max = AccessCount::Unbounded,
                }
            }
            MethodRow {
                method,
                ndcg: mean(&|o| o.ndcg),
                recall: mean(&|o| o.recall),
                accuracy: mean(&|o| o.accuracy),
                accesses: match max {
                    AccessCount::Finite(_) => total as f64 / n,
                    AccessCount::Unbounded => f64::INFINITY,
                },
                max_accesses: max,
                fairness_violations: outs.clone().filter(|o| !o.result.is_sound(cfg.tau)).count(),
                exact_quota_lists: outs.clone().filter(|o| o.result.group_counts.values().all(|&c| c == cfg.tau)).count(),
                short_lists: outs.clone().filter(|o| o.result.list.len() < cfg.k).count(),
                fallbacks: outs.filter(|o| o.result.fallback_used).count(),
            }
        })
        .collect();
    Ok(BenchReport {
        dataset: name,
        rule: cfg.rule.to_string(),
        k: cfg.k,
        tau: cfg.tau,
        seed: cfg.seed,
        items: env.catalog.len(),
        groups: env.catalog.group_counts(&env.catalog.items().collect::<Vec<_>>()),
        cases: cases.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ItemMeta;
    use crate::provider::Interaction;
    use rand::Rng;

    /// Two taste blocks over 60 movies, half of each block released
    /// before 1990.
    fn synthetic() -> BenchData {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let mut events = Vec::new();
        for user in 0..80u32 {
            let block = (user % 2) as usize;
            for t in 0..12 {
                let item = 2 * rng.random_range(0..n / 2) + block;
                events.push(Interaction {
                    user,
                    item: ItemId::from_index(item),
                    timestamp: Some(t),
                });
            }
        }
        let meta = (0..n)
            .map(|i| ItemMeta {
                year: Some(if (i / 2) % 2 == 0 { 1980 } else { 1995 }),
                ..ItemMeta::default()
            })
            .collect();
        BenchData::Interactions {
            name: "synthetic".into(),
            log: InteractionLog::new(events, n).unwrap(),
            catalog: ItemCatalog::single_group(n).with_meta(meta).unwrap(),
        }
    }

    fn config() -> BenchConfig {
        let mut cfg = BenchConfig::new(6, 3);
        cfg.methods = Method::ALL.iter().copied().filter(|m| *m != Method::Etp).collect();
        cfg.bpr.factors = 8;
        cfg.bpr.epochs = 30;
        cfg
    }

    #[test]
    fn balanced_and_local() {
        let r = run_benchmark(&synthetic(), &config()).unwrap();
        assert_eq!(r.items, 60);
        assert_eq!(r.cases, 80);
        assert_eq!(r.groups, BTreeMap::from([("other".into(), 30), ("protected".into(), 30)]));
        for m in [Method::Consul, Method::PrivateWalk, Method::PrivateRank, Method::Oracle] {
            let row = r.row(m).unwrap();
            assert_eq!(row.fairness_violations, 0, "{m}");
            assert_eq!(row.exact_quota_lists, 80, "{m}");
            assert_eq!(row.short_lists, 0);
            assert!(row.ndcg.unwrap() >= 0.0 && row.recall.unwrap() <= 1.0);
        }
        assert_eq!(r.row(Method::PrivateRank).unwrap().accesses, 60.0);
        assert_eq!(r.row(Method::Provider).unwrap().accesses, 1.0);
        assert!(r.row(Method::Oracle).unwrap().accesses.is_infinite());
        assert!(r.row(Method::Consul).unwrap().max_accesses.finite().unwrap() <= 100);
    }

    #[test]
    fn report_is_deterministic() {
        let a = run_benchmark(&synthetic(), &config()).unwrap();
        let b = run_benchmark(&synthetic(), &config()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.to_tsv(), b.to_tsv());
        let json: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(json["rows"][1]["method"], "consul");
        assert_eq!(json["rows"][5]["accesses"], "inf");
        assert!(a.to_tsv().lines().nth(6).unwrap().starts_with("oracle\t"));
    }

    #[test]
    fn consistency_at_tau_zero() {
        let mut cfg = config();
        cfg.tau = 0;
        let r = run_benchmark(&synthetic(), &cfg).unwrap();
        let p = r.row(Method::Provider).unwrap();
        for m in [Method::Consul, Method::PrivateRank, Method::Oracle, Method::Pp] {
            let row = r.row(m).unwrap();
            assert_eq!(row.ndcg, p.ndcg, "{m}");
            assert_eq!(row.recall, p.recall, "{m}");
        }
    }

    #[test]
    fn infeasible_tau_fails_up_front() {
        let mut cfg = config();
        cfg.tau = 4;
        assert!(run_benchmark(&synthetic(), &cfg).unwrap_err().is_infeasible());
    }

    #[test]
    fn labeled_dataset_reports_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records = (0..120)
            .map(|i| AdultRecord {
                line: i + 1,
                age: rng.random_range(20.0..60.0),
                education_num: rng.random_range(1.0..16.0),
                capital_gain: rng.random_range(1.0..1e4),
                sex: if i % 3 == 0 { "Female" } else { "Male" }.into(),
                income: if rng.random::<bool>() { ">50K" } else { "<=50K" }.into(),
            })
            .collect();
        let data = BenchData::Labeled {
            name: "adult".into(),
            records,
        };
        let mut cfg = BenchConfig::new(6, 3);
        cfg.rule = GroupRule::Attribute;
        cfg.methods.push(Method::Etp);
        cfg.max_cases = Some(40);
        cfg.recovery.d = 3;
        let r = run_benchmark(&data, &cfg).unwrap();
        assert_eq!(r.cases, 40);
        let n = r.items as f64;
        assert_eq!(r.row(Method::PrivateRank).unwrap().accesses, n);
        assert_eq!(r.row(Method::Etp).unwrap().accesses, n);
        for row in &r.rows {
            assert!(row.ndcg.is_none());
            let acc = row.accuracy.unwrap();
            assert!((0.0..=1.0).contains(&acc));
            if row.method != Method::Provider {
                assert_eq!(row.fairness_violations, 0, "{}", row.method);
            }
        }
    }
}
