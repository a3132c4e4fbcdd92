use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::parse_triples;
use crate::model::{GroupId, ItemCatalog, ItemId, ItemMeta};
use crate::provider::{Interaction, InteractionLog};

fn read_latin1(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes.iter().map(|&b| b as char).collect())
}

/// Release year from a `dd-Mon-yyyy` date.
fn year_of(date: &str) -> Option<i32> {
    date.rsplit('-').next()?.trim().parse().ok()
}

/// Reads `u.data` (`user item rating timestamp`, tab-separated) and `u.item`
/// (pipe-separated, latin-1) from a MovieLens-100k style directory. All
/// items start in one group; see [`GroupRule`].
pub fn ingest_movielens(dir: &Path) -> Result<(InteractionLog, ItemCatalog)> {
    let item_path = dir.join("u.item");
    let text = read_latin1(&item_path)?;
    let mut metas = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('|').collect();
        if f.len() < 3 {
            return Err(Error::parse(&item_path, i + 1, format!("expected at least 3 fields, found {}", f.len())));
        }
        match f[0].trim().parse::<usize>() {
            Ok(id) if id == metas.len() + 1 => {}
            _ => {
                return Err(Error::parse(
                    &item_path,
                    i + 1,
                    format!("expected movie id {}, found '{}'", metas.len() + 1, f[0]),
                ))
            }
        }
        metas.push(ItemMeta {
            external_id: Some(f[0].trim().to_string()),
            title: Some(f[1].to_string()),
            year: year_of(f[2]),
        });
    }
    let n = metas.len();
    let catalog = ItemCatalog::single_group(n).with_meta(metas)?;

    let data_path = dir.join("u.data");
    let text = std::fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::parse(&data_path, i + 1, format!("bad {what} in '{line}'"));
        if f.len() != 4 {
            return Err(bad("field count"));
        }
        let user = f[0].parse::<u32>().map_err(|_| bad("user"))?;
        let item = match f[1].parse::<u32>() {
            Ok(v) if v >= 1 && v as usize <= n => ItemId::new(v),
            _ => return Err(bad("item")),
        };
        f[2].parse::<f64>().map_err(|_| bad("rating"))?;
        let timestamp = Some(f[3].parse::<i64>().map_err(|_| bad("timestamp"))?);
        events.push(Interaction { user, item, timestamp });
    }
    Ok((InteractionLog::new(events, n)?, catalog))
}

/// Reads a `user item rating? timestamp?` table with arbitrary string ids.
/// Items and users get dense ids in order of first appearance; the original
/// item id is kept as metadata.
pub fn ingest_triples(path: &Path) -> Result<(InteractionLog, ItemCatalog)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut users: HashMap<&str, u32> = HashMap::new();
    let mut items: HashMap<&str, ItemId> = HashMap::new();
    let mut metas = Vec::new();
    let mut events = Vec::new();
    for (_, user, item, timestamp) in parse_triples(&text, path)? {
        let next = users.len() as u32;
        let user = *users.entry(user).or_insert(next);
        let item = *items.entry(item).or_insert_with(|| {
            metas.push(ItemMeta {
                external_id: Some(item.to_string()),
                ..ItemMeta::default()
            });
            ItemId::from_index(metas.len() - 1)
        });
        events.push(Interaction { user, item, timestamp });
    }
    let catalog = ItemCatalog::single_group(metas.len()).with_meta(metas)?;
    Ok((InteractionLog::new(events, catalog.len())?, catalog))
}

pub const PROTECTED: &str = "protected";
pub const OTHER: &str = "other";

/// How items are split into a protected group and the rest.
///
/// Textual form: `year-before:1990`, `min-interactions:50`, `attribute`,
/// `year-distance:10`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupRule {
    /// Released strictly before `year`. Items without a year are not
    /// protected.
    YearBefore { year: i32 },
    /// Fewer than `count` interaction events.
    MinInteractions { count: usize },
    /// Keep the catalog's own groups.
    Attribute,
    /// Released more than `years` before or after the source item.
    YearDistance { years: i32 },
}

impl GroupRule {
    pub fn needs_source(&self) -> bool {
        matches!(self, GroupRule::YearDistance { .. })
    }

    /// Regroups `catalog` into `protected` (group 0) and `other` (group 1),
    /// or returns it unchanged for [`GroupRule::Attribute`].
    pub fn apply(&self, catalog: &ItemCatalog, log: Option<&InteractionLog>, source: Option<ItemId>) -> Result<ItemCatalog> {
        let protected: Vec<bool> = match *self {
            GroupRule::Attribute => return Ok(catalog.clone()),
            GroupRule::YearBefore { year } => catalog
                .items()
                .map(|i| catalog.meta(i).year.is_some_and(|y| y < year))
                .collect(),
            GroupRule::MinInteractions { count } => {
                let log = log.ok_or_else(|| Error::InvalidParameter(format!("rule {self} needs an interaction log")))?;
                if log.num_items() != catalog.len() {
                    return Err(Error::InvalidParameter("log and catalog sizes differ".into()));
                }
                log.item_event_counts().into_iter().map(|c| c < count).collect()
            }
            GroupRule::YearDistance { years } => {
                let source = source.ok_or_else(|| Error::InvalidParameter(format!("rule {self} needs a source item")))?;
                catalog.check(source)?;
                let y0 = catalog
                    .meta(source)
                    .year
                    .ok_or_else(|| Error::InvalidParameter(format!("source item {source} has no release year")))?;
                catalog
                    .items()
                    .map(|i| catalog.meta(i).year.is_some_and(|y| (y - y0).abs() > years))
                    .collect()
            }
        };
        let attr = protected.into_iter().map(|p| GroupId(if p { 0 } else { 1 })).collect();
        catalog.regroup(vec![PROTECTED.into(), OTHER.into()], attr)
    }
}

impl fmt::Display for GroupRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupRule::YearBefore { year } => write!(f, "year-before:{year}"),
            GroupRule::MinInteractions { count } => write!(f, "min-interactions:{count}"),
            GroupRule::Attribute => f.write_str("attribute"),
            GroupRule::YearDistance { years } => write!(f, "year-distance:{years}"),
        }
    }
}

impl FromStr for GroupRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |what: &str| -> Result<i64> {
            arg.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("group rule '{s}' needs a numeric {what}")))
        };
        match kind.trim() {
            "year-before" | "oldness" => Ok(GroupRule::YearBefore {
                year: if arg.is_empty() { 1990 } else { num("year")? as i32 },
            }),
            "min-interactions" | "popularity" => {
                let count = if arg.is_empty() { 50 } else { num("count")? };
                Ok(GroupRule::MinInteractions {
                    count: usize::try_from(count).map_err(|_| Error::InvalidParameter(format!("negative count in '{s}'")))?,
                })
            }
            "attribute" => Ok(GroupRule::Attribute),
            "year-distance" => Ok(GroupRule::YearDistance {
                years: if arg.is_empty() { 10 } else { num("distance")? as i32 },
            }),
            _ => Err(Error::InvalidParameter(format!("unknown group rule '{s}'"))),
        }
    }
}
