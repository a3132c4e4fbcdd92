use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use userside::algos::Method;
use userside::error::Error;
use userside::eval::{run_benchmark, BenchConfig, GroupRule};
use userside::io;
use userside::model::{ItemCatalog, ItemId, UserHistory};
use userside::provider::{knn_provider, train_bpr, BprConfig, Metric};
use userside::recnet::crawl_all;
use userside::recovery::{procrustes_align, recover, RecoveryConfig, RecoveryMethod};

use crate::engine::{Engine, Query};
use crate::load::{format_provider_embedding, read_provider, Dataset, ProviderModel};
use crate::service::{self, AppState, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "userside", version, about = "Fair recommendations built from a provider's public item pages")]
pub struct Cli {
    /// Log filter, e.g. `info` or `userside=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a raw dataset into catalog/interaction/feature tables.
    Ingest(IngestArgs),
    /// Fit a provider embedding.
    TrainProvider(TrainArgs),
    /// Fetch every item page of an embedding provider into a network file.
    Crawl(CrawlArgs),
    /// Print one recommendation result as JSON.
    Recommend(RecommendArgs),
    /// Run the benchmark and print its report.
    Evaluate(EvaluateArgs),
    /// Estimate item coordinates from a network file.
    Recover(RecoverArgs),
    /// Fit a similarity transform of one embedding onto another.
    Align(AlignArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// MovieLens directory, census file, or user/item table.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Regroup items before writing, e.g. `year-before:1990`.
    #[arg(long)]
    pub rule: Option<GroupRule>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Matrix factorization on interactions, ranked by inner product.
    Bpr,
    /// Census features, ranked by euclidean distance.
    Knn,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub provider: ProviderKind,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Embedding file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CrawlArgs {
    /// Embedding file.
    #[arg(long)]
    pub provider: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Network file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the metric recorded in the embedding file.
    #[arg(long)]
    pub metric: Option<Metric>,
}

#[derive(Args, Debug)]
pub struct ProviderArgs {
    /// Embedding or network file.
    #[arg(long)]
    pub provider: PathBuf,
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Catalog table; defaults to the dataset's, or one group.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Dataset supplying the catalog and, for popularity rules, the log.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Regrouping applied to the catalog.
    #[arg(long)]
    pub rule: Option<GroupRule>,
    #[arg(long, default_value_t = 100)]
    pub l_max: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding dimension assumed by ETP.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub source: u32,
    #[arg(long)]
    pub method: Method,
    /// Required unless the provider is a network.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: usize,
    /// Items the user already knows, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub history: Vec<u32>,
    /// History file, one id per line.
    #[arg(long)]
    pub history_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub tau: usize,
    /// Methods to compare, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long)]
    pub rule: Option<GroupRule>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub l_max: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long)]
    pub kcore: Option<usize>,
    /// Evaluate a seeded sample of this many cases.
    #[arg(long)]
    pub max_cases: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Directory for `report.json` and `report.tsv`; JSON goes to stdout
    /// either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Network file.
    #[arg(long, alias = "provider")]
    pub network: PathBuf,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = "ordinal")]
    pub recovery: RecoveryMethod,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Embedding file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Estimated embedding.
    #[arg(long)]
    pub embedding: PathBuf,
    /// Ground-truth embedding.
    #[arg(long)]
    pub reference: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Embedding or network file; without it the provider is trained from
    /// the dataset.
    #[arg(long)]
    pub provider: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Grouping for requests outside a session.
    #[arg(long, default_value = "attribute")]
    pub rule: GroupRule,
    #[arg(long, default_value_t = 100)]
    pub l_max: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest `K + |H|` an embedding provider can serve.
    #[arg(long, default_value_t = 200)]
    pub depth: usize,
    #[arg(long)]
    pub crawl_cache: Option<PathBuf>,
    /// Idle seconds before a session is dropped.
    #[arg(long, default_value_t = 3600)]
    pub session_ttl: u64,
}

/// Marks errors caused by the invocation rather than by a failed run.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// 0 on success, 2 for configuration and input errors, 3 when the fairness
/// requirement cannot be met, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible(_) => 3,
                Error::InvalidParameter(_)
                | Error::UnknownItem(_)
                | Error::UnknownGroup(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn emit_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::TrainProvider(a) => train_provider(a),
        Command::Crawl(a) => crawl(a),
        Command::Recommend(a) => recommend(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Align(a) => align(a),
        Command::Serve(a) => serve(a),
    }
}

fn ingest(a: IngestArgs) -> anyhow::Result<()> {
    let mut d = Dataset::load(&a.dataset)?;
    if let Some(rule) = &a.rule {
        if rule.needs_source() {
            return Err(config_error(format!("rule {rule} depends on the source item and cannot be stored")));
        }
        d.catalog = rule.apply(&d.catalog, d.log.as_ref(), None)?;
    }
    for p in d.write(&a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn train_provider(a: TrainArgs) -> anyhow::Result<()> {
    let d = Dataset::load(&a.dataset)?;
    let (x, metric) = match a.provider {
        ProviderKind::Bpr => {
            let log = d
                .log
                .as_ref()
                .ok_or_else(|| config_error(format!("{} has no interactions to train on", a.dataset.display())))?;
            let mut cfg = BprConfig {
                seed: a.seed,
                ..BprConfig::default()
            };
            if let Some(f) = a.factors {
                cfg.factors = f;
            }
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            let model = train_bpr(log, &cfg)?;
            if let Some(loss) = model.loss_history.last() {
                log::info!("trained {} epochs, final loss {loss:.4}", model.loss_history.len());
            }
            (model.item_factors, Metric::InnerProduct)
        }
        ProviderKind::Knn => {
            let x = d
                .features
                .ok_or_else(|| config_error(format!("{} has no item features", a.dataset.display())))?;
            (x, Metric::Euclidean)
        }
    };
    write_text(&a.out, &format_provider_embedding(&x, metric))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

fn crawl(a: CrawlArgs) -> anyhow::Result<()> {
    let (x, metric) = match read_provider(&a.provider, a.metric)? {
        ProviderModel::Embedding { x, metric } => (x, metric),
        ProviderModel::Network(_) => return Err(config_error("crawl needs an embedding provider; this is already a network")),
    };
    let p = knn_provider(&x, a.k, metric, UserHistory::empty())?;
    let g = crawl_all(&p)?;
    io::write_network(&a.out, &g)?;
    log::info!("crawled {} pages", g.len());
    Ok(())
}

fn catalog_for(p: &ProviderArgs, n: usize, source: ItemId) -> anyhow::Result<ItemCatalog> {
    let dataset = p.dataset.as_deref().map(Dataset::load).transpose()?;
    let catalog = match (&p.catalog, &dataset) {
        (Some(path), _) => io::read_catalog(path)?,
        (None, Some(d)) => d.catalog.clone(),
        (None, None) => ItemCatalog::single_group(n),
    };
    if catalog.len() != n {
        return Err(config_error(format!("catalog has {} items, provider has {n}", catalog.len())));
    }
    match &p.rule {
        Some(rule) => Ok(rule.apply(&catalog, dataset.as_ref().and_then(|d| d.log.as_ref()), Some(source))?),
        None => Ok(catalog),
    }
}

fn recommend(a: RecommendArgs) -> anyhow::Result<()> {
    let p = &a.provider;
    let model = read_provider(&p.provider, p.metric)?;
    let n = model.num_items();
    let mut history: UserHistory = a.history.iter().map(|&i| ItemId::new(i)).collect();
    if let Some(path) = &a.history_file {
        for &i in io::read_history(path)?.iter() {
            history.insert(i);
        }
    }
    let k = match (&model, a.k) {
        (_, Some(k)) => k,
        (ProviderModel::Network(g), None) => g.list_len(),
        (ProviderModel::Embedding { .. }, None) => return Err(config_error("--k is required for an embedding provider")),
    };
    if a.source == 0 || a.history.contains(&0) {
        return Err(config_error("item ids start at 1"));
    }
    let source = ItemId::new(a.source);
    let catalog = catalog_for(p, n, source)?;
    let recovery = RecoveryConfig {
        d: p.d,
        seed: p.seed,
        ..RecoveryConfig::default()
    };
    let engine = Engine::new(model, k + history.len(), recovery)?;
    let q = Query {
        source,
        history,
        method: a.method,
        k,
        tau: a.tau,
        l_max: p.l_max,
        patience: p.patience,
        seed: p.seed,
    };
    emit_json(&engine.recommend(&catalog, &q)?)
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let data = Dataset::bench_data(&a.dataset)?;
    let mut cfg = BenchConfig::new(a.k, a.tau);
    if !a.method.is_empty() {
        cfg.methods = a.method.clone();
    }
    if let Some(rule) = a.rule {
        if rule.needs_source() {
            return Err(config_error(format!("rule {rule} depends on the source item and is not supported by evaluate")));
        }
        cfg.rule = rule;
    } else if matches!(data, userside::eval::BenchData::Labeled { .. }) {
        cfg.rule = GroupRule::Attribute;
    }
    cfg.seed = a.seed;
    cfg.l_max = a.l_max;
    cfg.patience = a.patience;
    cfg.kcore = a.kcore;
    cfg.max_cases = a.max_cases;
    if let Some(e) = a.epochs {
        cfg.bpr.epochs = e;
    }
    cfg.recovery.d = a.d;
    cfg.recovery.seed = a.seed;
    let report = run_benchmark(&data, &cfg)?;
    if let Some(dir) = &a.out {
        io::write_json(&dir.join("report.json"), &report)?;
        write_text(&dir.join("report.tsv"), &report.to_tsv())?;
    }
    emit_json(&report)
}

fn recover_cmd(a: RecoverArgs) -> anyhow::Result<()> {
    let g = io::read_network(&a.network)?;
    let mut cfg = RecoveryConfig {
        d: a.d,
        method: a.recovery,
        seed: a.seed,
        ..RecoveryConfig::default()
    };
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    let r = recover(&g, &cfg)?;
    if !r.converged {
        log::warn!("recovery stopped after {} iterations without converging", r.iterations);
    }
    io::write_embedding(&a.out, &r.embedding)?;
    Ok(())
}

fn align(a: AlignArgs) -> anyhow::Result<()> {
    let xhat = io::read_embedding(&a.embedding)?;
    let xref = io::read_embedding(&a.reference)?;
    let alignment = procrustes_align(&xhat, &xref)?;
    if let Some(out) = &a.out {
        io::write_json(out, &alignment)?;
    }
    emit_json(&alignment)
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    if !a.dataset.exists() {
        return Err(config_error(format!("{} does not exist", a.dataset.display())));
    }
    let dataset = Dataset::load(&a.dataset)?;
    let model = match &a.provider {
        Some(path) => read_provider(path, a.metric)?,
        None => match (&dataset.features, &dataset.log) {
            (Some(x), _) => ProviderModel::Embedding {
                x: x.clone(),
                metric: a.metric.unwrap_or(Metric::Euclidean),
            },
            (None, Some(log)) => {
                log::info!("training a BPR provider on {} events", log.len());
                let cfg = BprConfig {
                    seed: a.seed,
                    ..BprConfig::default()
                };
                ProviderModel::Embedding {
                    x: train_bpr(log, &cfg)?.item_factors,
                    metric: a.metric.unwrap_or(Metric::InnerProduct),
                }
            }
            (None, None) => bail!(ConfigError("the dataset has neither features nor interactions".into())),
        },
    };
    let engine = Engine::new(model, a.depth, RecoveryConfig::default())?;
    let cfg = ServiceConfig {
        listen: a.listen,
        rule: a.rule,
        l_max: a.l_max,
        patience: a.patience,
        seed: a.seed,
        session_ttl: Duration::from_secs(a.session_ttl),
        crawl_cache: a.crawl_cache,
        ..ServiceConfig::default()
    };
    let state = AppState::new(dataset, engine, cfg)?;
    tokio::runtime::Runtime::new()?.block_on(service::serve(state))
}
