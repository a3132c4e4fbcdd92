//! Flat-file formats: catalogs, histories, interaction logs, embeddings,
//! networks, and JSON reports.
//!
//! All tables are UTF-8, tab-separated, with one header line. Lines starting
//! with `#` and blank lines are ignored by every reader except where a `#`
//! line carries metadata (the network header).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ItemCatalog, ItemId, ItemMeta, UserHistory};
use crate::provider::{EmbeddingMatrix, Interaction, InteractionLog};
use crate::recnet::RecommendationNetwork;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `(line number, fields)` of every data line.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        (!line.trim().is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split('\t').collect()))
    })
}

fn parse_id(path: &Path, line: usize, cell: &str) -> Result<ItemId> {
    match cell.trim().parse::<u32>() {
        Ok(v) if v > 0 => Ok(ItemId::new(v)),
        _ => Err(Error::parse(path, line, format!("bad item id '{cell}'"))),
    }
}

/// Columns `item_id, group, label, meta`; the last two may be empty.
pub const CATALOG_HEADER: &str = "item_id\tgroup\tlabel\tmeta";

pub fn read_catalog(path: &Path) -> Result<ItemCatalog> {
    parse_catalog(&read(path)?, path)
}

/// Items must be listed as `1..=n` in order. Group ids follow first
/// appearance.
pub fn parse_catalog(text: &str, path: &Path) -> Result<ItemCatalog> {
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    let mut metas = Vec::new();
    for (line, cells) in rows(text).skip(1) {
        if cells.len() < 2 || cells.len() > 4 {
            return Err(Error::parse(path, line, format!("expected 2 to 4 fields, found {}", cells.len())));
        }
        let id = parse_id(path, line, cells[0])?;
        if id.index() != groups.len() {
            return Err(Error::parse(path, line, format!("expected item {}, found {id}", groups.len() + 1)));
        }
        if cells[1].is_empty() {
            return Err(Error::parse(path, line, "empty group"));
        }
        groups.push(cells[1].to_string());
        labels.push(cells.get(2).copied().unwrap_or("").to_string());
        let meta = match cells.get(3).copied().unwrap_or("") {
            "" => ItemMeta::default(),
            json => serde_json::from_str(json).map_err(|e| Error::parse(path, line, format!("bad meta: {e}")))?,
        };
        metas.push(meta);
    }
    let mut catalog = ItemCatalog::from_group_names(&groups)?.with_meta(metas)?;
    if labels.iter().any(|l| !l.is_empty()) {
        if let Some(i) = labels.iter().position(String::is_empty) {
            return Err(Error::InvalidParameter(format!("{}: item {} has no label", path.display(), i + 1)));
        }
        catalog = catalog.with_labels(labels)?;
    }
    Ok(catalog)
}

pub fn format_catalog(catalog: &ItemCatalog) -> String {
    let mut out = format!("{CATALOG_HEADER}\n");
    for item in catalog.items() {
        let meta = catalog.meta(item);
        let meta = if meta.is_empty() {
            String::new()
        } else {
            serde_json::to_string(meta).expect("meta serializes")
        };
        let _ = writeln!(
            out,
            "{item}\t{}\t{}\t{meta}",
            catalog.group_name(catalog.group(item)),
            catalog.label(item).unwrap_or("")
        );
    }
    out
}

pub fn write_catalog(path: &Path, catalog: &ItemCatalog) -> Result<()> {
    write(path, &format_catalog(catalog))
}

/// One item id per line.
pub fn read_history(path: &Path) -> Result<UserHistory> {
    rows(&read(path)?)
        .map(|(line, cells)| parse_id(path, line, cells[0]))
        .collect()
}

pub fn write_history(path: &Path, history: &UserHistory) -> Result<()> {
    write(path, &history.iter().map(|i| format!("{i}\n")).collect::<String>())
}

pub const INTERACTIONS_HEADER: &str = "user\titem\trating\ttimestamp";

/// Raw `(user, item, timestamp)` cells of an interaction table, before any
/// id mapping. The header line is optional and recognized by its first
/// field `user`.
/// `(line, user, item, timestamp)`.
pub(crate) type RawTriple<'a> = (usize, &'a str, &'a str, Option<i64>);

pub(crate) fn parse_triples<'a>(text: &'a str, path: &Path) -> Result<Vec<RawTriple<'a>>> {
    let mut out = Vec::new();
    for (line, cells) in rows(text) {
        if out.is_empty() && cells[0] == "user" {
            continue;
        }
        if cells.len() < 2 || cells.len() > 4 {
            return Err(Error::parse(path, line, format!("expected 2 to 4 fields, found {}", cells.len())));
        }
        if cells[0].is_empty() || cells[1].is_empty() {
            return Err(Error::parse(path, line, "empty user or item"));
        }
        let ts = match cells.get(3).map(|c| c.trim()) {
            None | Some("") => None,
            Some(c) => Some(c.parse::<i64>().map_err(|_| Error::parse(path, line, format!("bad timestamp '{c}'")))?),
        };
        out.push((line, cells[0], cells[1], ts));
    }
    Ok(out)
}

/// Interactions over dense item ids `1..=num_items`; users must be
/// nonnegative integers.
pub fn read_interactions(path: &Path, num_items: usize) -> Result<InteractionLog> {
    let text = read(path)?;
    let mut events = Vec::new();
    for (line, user, item, timestamp) in parse_triples(&text, path)? {
        let user = user
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::parse(path, line, format!("bad user '{user}'")))?;
        let item = parse_id(path, line, item)?;
        if item.index() >= num_items {
            return Err(Error::parse(path, line, format!("item {item} outside 1..={num_items}")));
        }
        events.push(Interaction { user, item, timestamp });
    }
    InteractionLog::new(events, num_items)
}

pub fn format_interactions(log: &InteractionLog) -> String {
    let mut out = format!("{INTERACTIONS_HEADER}\n");
    for e in log.interactions() {
        let ts = e.timestamp.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{}\t{}\t\t{ts}", e.user, e.item);
    }
    out
}

pub fn write_interactions(path: &Path, log: &InteractionLog) -> Result<()> {
    write(path, &format_interactions(log))
}

/// Header `item_id v1 .. vd`; row `i` is item `i`. Values are written in
/// shortest round-trip form, so a write-read cycle is lossless.
pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    parse_embedding(&read(path)?, path)
}

pub fn parse_embedding(text: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let mut it = rows(text);
    let (hline, header) = it.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    if header[0] != "item_id" {
        return Err(Error::parse(path, hline, "header must start with item_id"));
    }
    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut n = 0;
    for (line, cells) in it {
        if cells.len() != d + 1 {
            return Err(Error::parse(path, line, format!("expected {} fields, found {}", d + 1, cells.len())));
        }
        let id = parse_id(path, line, cells[0])?;
        if id.index() != n {
            return Err(Error::parse(path, line, format!("expected item {}, found {id}", n + 1)));
        }
        for c in &cells[1..] {
            match c.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return Err(Error::parse(path, line, format!("bad value '{c}'"))),
            }
        }
        n += 1;
    }
    EmbeddingMatrix::new(n, d, data)
}

pub fn format_embedding(x: &EmbeddingMatrix) -> String {
    let mut out = String::from("item_id");
    for c in 1..=x.dim() {
        let _ = write!(out, "\tv{c}");
    }
    out.push('\n');
    for i in 0..x.len() {
        let _ = write!(out, "{}", i + 1);
        for v in x.row(i) {
            let _ = write!(out, "\t{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_embedding(path: &Path, x: &EmbeddingMatrix) -> Result<()> {
    write(path, &format_embedding(x))
}

/// Rows `src rank dst`, ranks from 1. An optional leading `# n=<n> k=<k>`
/// line fixes the sizes; without it `n` is the largest id seen and `K` the
/// largest rank.
pub fn read_network(path: &Path) -> Result<RecommendationNetwork> {
    parse_network(&read(path)?, path)
}

pub fn parse_network(text: &str, path: &Path) -> Result<RecommendationNetwork> {
    let (mut n, mut k) = (None, None);
    if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        for tok in first.split_whitespace() {
            let num = |v: &str| v.parse::<usize>().map_err(|_| Error::parse(path, 1, format!("bad header value '{v}'")));
            if let Some(v) = tok.strip_prefix("n=") {
                n = Some(num(v)?);
            } else if let Some(v) = tok.strip_prefix("k=") {
                k = Some(num(v)?);
            }
        }
    }
    let mut edges = Vec::new();
    for (line, cells) in rows(text) {
        if edges.is_empty() && cells[0] == "src" {
            continue;
        }
        if cells.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 fields, found {}", cells.len())));
        }
        let src = parse_id(path, line, cells[0])?;
        let rank = match cells[1].trim().parse::<usize>() {
            Ok(r) if r > 0 => r,
            _ => return Err(Error::parse(path, line, format!("bad rank '{}'", cells[1]))),
        };
        let dst = parse_id(path, line, cells[2])?;
        edges.push((line, src, rank, dst));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|e| e.1.get().max(e.3.get()) as usize).max().unwrap_or(0));
    let k = k.unwrap_or_else(|| edges.iter().map(|e| e.2).max().unwrap_or(0));
    let mut pages: Vec<Vec<Option<ItemId>>> = vec![Vec::new(); n];
    for &(line, src, rank, dst) in &edges {
        if src.index() >= n || dst.index() >= n || rank > k {
            return Err(Error::parse(path, line, format!("edge {src} {rank} {dst} outside n={n} k={k}")));
        }
        let page = &mut pages[src.index()];
        page.resize(k, None);
        if page[rank - 1].replace(dst).is_some() {
            return Err(Error::parse(path, line, format!("rank {rank} of item {src} given twice")));
        }
    }
    let mut g = RecommendationNetwork::empty(n, k);
    for (i, page) in pages.into_iter().enumerate() {
        if page.is_empty() {
            continue;
        }
        let list: Option<Vec<ItemId>> = page.into_iter().collect();
        let list = list.ok_or_else(|| Error::InvalidParameter(format!("{}: page of item {} has gaps", path.display(), i + 1)))?;
        g.set_page(ItemId::from_index(i), list)?;
    }
    Ok(g)
}

pub fn format_network(g: &RecommendationNetwork) -> String {
    let mut out = format!("# n={} k={}\nsrc\trank\tdst\n", g.len(), g.list_len());
    for (src, rank, dst) in g.edges() {
        let _ = writeln!(out, "{src}\t{rank}\t{dst}");
    }
    out
}

pub fn write_network(path: &Path, g: &RecommendationNetwork) -> Result<()> {
    write(path, &format_network(g))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read(path)?)?)
}
