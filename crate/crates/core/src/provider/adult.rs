//! Census records as items: a person's page recommends the people nearest in
//! a few normalized demographic features.

use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, KnnProvider, Metric, NeighborTable};
use crate::error::{Error, Result};
use crate::model::{ItemCatalog, UserHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdultRecord {
    /// 1-based line in the source file.
    pub line: usize,
    pub age: f64,
    pub education_num: f64,
    pub capital_gain: f64,
    pub sex: String,
    pub income: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdultFeature {
    Age,
    EducationNum,
    /// Log-transformed.
    CapitalGain,
}

impl AdultFeature {
    fn raw(self, r: &AdultRecord) -> f64 {
        match self {
            AdultFeature::Age => r.age,
            AdultFeature::EducationNum => r.education_num,
            AdultFeature::CapitalGain => r.capital_gain,
        }
    }
}

const COLUMNS: usize = 15;
const AGE: usize = 0;
const EDUCATION_NUM: usize = 4;
const SEX: usize = 9;
const CAPITAL_GAIN: usize = 10;
const INCOME: usize = 14;

/// Parses the comma-separated census file (no header). Blank lines and the
/// `|`-prefixed banner line of the test split are skipped.
pub fn parse_adult(path: &Path) -> Result<Vec<AdultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_adult_str(&text, path)
}

pub fn parse_adult_str(text: &str, path: &Path) -> Result<Vec<AdultRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != COLUMNS {
            return Err(Error::parse(path, lineno, format!("expected {COLUMNS} fields, found {}", cells.len())));
        }
        let num = |col: usize, name: &str| -> Result<f64> {
            cells[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, lineno, format!("non-numeric {name} '{}'", cells[col])))
        };
        out.push(AdultRecord {
            line: lineno,
            age: num(AGE, "age")?,
            education_num: num(EDUCATION_NUM, "education-num")?,
            capital_gain: num(CAPITAL_GAIN, "capital-gain")?,
            sex: cells[SEX].to_string(),
            income: cells[INCOME].trim_end_matches('.').to_string(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdultConfig {
    pub features: Vec<AdultFeature>,
    pub k: usize,
    /// Drop rows holding the minimum or maximum of any selected feature.
    pub drop_extremes: bool,
    /// Keep a uniform random subset of this many rows after normalization.
    pub subsample: Option<usize>,
    pub seed: u64,
}

impl Default for AdultConfig {
    fn default() -> Self {
        AdultConfig {
            features: vec![AdultFeature::Age, AdultFeature::CapitalGain],
            k: 10,
            drop_extremes: true,
            subsample: None,
            seed: 0,
        }
    }
}

/// The provider together with what it hides.
#[derive(Debug)]
pub struct AdultProvider {
    pub provider: KnnProvider,
    /// Groups by sex, labels by income bracket.
    pub catalog: ItemCatalog,
    /// Normalized features; row `i` belongs to item `i + 1`.
    pub features: EmbeddingMatrix,
    /// Source file line of each item.
    pub lines: Vec<usize>,
}

/// Column-wise z-score; constant columns become zero.
fn z_normalize(x: &mut EmbeddingMatrix) {
    let (n, d) = (x.len(), x.dim());
    if n == 0 {
        return;
    }
    for c in 0..d {
        let mean = (0..n).map(|i| x.row(i)[c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.row(i)[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let v = &mut x.row_mut(i)[c];
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
}

pub fn adult_provider(records: &[AdultRecord], cfg: &AdultConfig) -> Result<AdultProvider> {
    if cfg.features.is_empty() {
        return Err(Error::InvalidParameter("no features selected".into()));
    }
    let mut keep: Vec<&AdultRecord> = records.iter().collect();
    if cfg.drop_extremes {
        for &f in &cfg.features {
            let lo = records.iter().map(|r| f.raw(r)).fold(f64::INFINITY, f64::min);
            let hi = records.iter().map(|r| f.raw(r)).fold(f64::NEG_INFINITY, f64::max);
            keep.retain(|r| f.raw(r) != lo && f.raw(r) != hi);
        }
    }
    let d = cfg.features.len();
    let mut data = Vec::with_capacity(keep.len() * d);
    for r in &keep {
        for &f in &cfg.features {
            let v = f.raw(r);
            data.push(match f {
                AdultFeature::CapitalGain if v <= 0.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "capital-gain {v} on line {} has no logarithm; enable drop_extremes",
                        r.line
                    )))
                }
                AdultFeature::CapitalGain => v.ln(),
                _ => v,
            });
        }
    }
    let mut x = EmbeddingMatrix::new(keep.len(), d, data)?;
    z_normalize(&mut x);

    let rows: Vec<usize> = match cfg.subsample {
        Some(m) if m < keep.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut idx = sample(&mut rng, keep.len(), m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..keep.len()).collect(),
    };
    let x = x.select_rows(&rows);
    let kept: Vec<&AdultRecord> = rows.iter().map(|&i| keep[i]).collect();

    let sexes: Vec<&str> = kept.iter().map(|r| r.sex.as_str()).collect();
    let catalog = ItemCatalog::from_group_names(&sexes)?
        .with_labels(kept.iter().map(|r| r.income.clone()).collect())?;
    let n = x.len();
    if n <= cfg.k {
        return Err(Error::InvalidParameter(format!("{n} records left, need more than K={}", cfg.k)));
    }
    let table = NeighborTable::build(&x, Metric::Euclidean, cfg.k)?;
    let provider = KnnProvider::from_table(Arc::new(table), cfg.k, UserHistory::empty())?;
    Ok(AdultProvider {
        provider,
        catalog,
        features: x,
        lines: kept.iter().map(|r| r.line).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ItemId;
    use crate::oracle::ProviderOracle;

    fn rec(line: usize, age: f64, cg: f64, sex: &str) -> AdultRecord {
        AdultRecord {
            line,
            age,
            education_num: 9.0,
            capital_gain: cg,
            sex: sex.into(),
            income: "<=50K".into(),
        }
    }

    #[test]
    fn parses_rows_and_strips_income_dot() {
        let text = "|banner\n25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, United-States, <=50K.\n\n";
        let r = parse_adult_str(text, Path::new("a")).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].age, 25.0);
        assert_eq!(r[0].education_num, 7.0);
        assert_eq!(r[0].sex, "Male");
        assert_eq!(r[0].income, "<=50K");
        assert_eq!(r[0].line, 2);
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let text = "x, Private, 1, 11th, 7, a, b, c, d, Male, 0, 0, 40, US, <=50K\n";
        match parse_adult_str(text, Path::new("a")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_of_capital_gain() {
        let e = std::f64::consts::E;
        let records = vec![rec(1, 30.0, e, "F"), rec(2, 31.0, e * e, "M"), rec(3, 32.0, e.powi(3), "F")];
        let cfg = AdultConfig {
            features: vec![AdultFeature::CapitalGain],
            k: 1,
            drop_extremes: false,
            ..AdultConfig::default()
        };
        let p = adult_provider(&records, &cfg).unwrap();
        // ln gives 1, 2, 3; z-scored: -sqrt(3/2), 0, sqrt(3/2)
        let s = 1.5f64.sqrt();
        for (i, want) in [-s, 0.0, s].iter().enumerate() {
            assert!((p.features.row(i)[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn extremes_are_dropped() {
        let records: Vec<AdultRecord> = (0..10)
            .map(|i| rec(i + 1, 20.0 + i as f64, 1.0 + (i * 7 % 10) as f64, if i % 2 == 0 { "F" } else { "M" }))
            .collect();
        let cfg = AdultConfig {
            k: 2,
            ..AdultConfig::default()
        };
        let p = adult_provider(&records, &cfg).unwrap();
        // ages 20 and 29 go, then capital-gain 1 (i=0, gone) and 10 (i=7)
        assert_eq!(p.lines, vec![2, 3, 4, 5, 6, 7, 9]);
        assert!(p.lines.iter().all(|&l| records[l - 1].capital_gain != 10.0));
    }

    #[test]
    fn identical_records_are_mutual_first_neighbors() {
        let mut records: Vec<AdultRecord> = (0..6).map(|i| rec(i + 1, 20.0 + 3.0 * i as f64, 5.0, "F")).collect();
        records.push(rec(7, 26.0, 5.0, "M"));
        let cfg = AdultConfig {
            features: vec![AdultFeature::Age],
            k: 1,
            drop_extremes: false,
            ..AdultConfig::default()
        };
        let p = adult_provider(&records, &cfg).unwrap();
        assert_eq!(p.provider.query(ItemId::new(3)).unwrap().ids(), vec![7]);
        assert_eq!(p.provider.query(ItemId::new(7)).unwrap().ids(), vec![3]);
        assert_eq!(p.catalog.num_groups(), 2);
    }
}
