use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{ItemCatalog, ItemId};

fn check_relevant(relevant: &BTreeSet<ItemId>, k: usize) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::InvalidParameter("relevant set is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    Ok(())
}

/// Binary-relevance nDCG over the first `k` entries of `rec`. The ideal
/// list holds `min(|relevant|, k)` hits at the top.
pub fn ndcg_at_k(rec: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<f64> {
    check_relevant(relevant, k)?;
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = rec
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(pos, _)| gain(pos))
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(gain).sum();
    Ok(dcg / idcg)
}

/// `|rec[..k] ∩ relevant| / min(|relevant|, k)`.
pub fn recall_at_k(rec: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<f64> {
    check_relevant(relevant, k)?;
    let hits = rec.iter().take(k).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / relevant.len().min(k) as f64)
}

/// Fraction of `rec` sharing the label of `source`.
pub fn label_accuracy(rec: &[ItemId], source: ItemId, catalog: &ItemCatalog) -> Result<f64> {
    let label = |i: ItemId| -> Result<&str> {
        catalog.check(i)?;
        catalog
            .label(i)
            .ok_or_else(|| Error::InvalidParameter(format!("item {i} has no label")))
    };
    if rec.is_empty() {
        return Err(Error::InvalidParameter("empty recommendation list".into()));
    }
    let want = label(source)?;
    let mut same = 0;
    for &i in rec {
        same += (label(i)? == want) as usize;
    }
    Ok(same as f64 / rec.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<ItemId> {
        v.iter().map(|&i| ItemId::new(i)).collect()
    }

    fn set(v: &[u32]) -> BTreeSet<ItemId> {
        ids(v).into_iter().collect()
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&ids(&[4, 1, 2]), &set(&[4]), 3).unwrap(), 1.0);
        let r = ndcg_at_k(&ids(&[1, 4, 2]), &set(&[4]), 3).unwrap();
        assert!((r - 0.6309297535714575).abs() < 1e-15, "{r}");
        assert_eq!(ndcg_at_k(&ids(&[1, 2]), &set(&[4]), 2).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&ids(&[1, 4]), &set(&[4]), 1).unwrap(), 0.0);
        assert!(ndcg_at_k(&ids(&[1]), &BTreeSet::new(), 1).is_err());
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&ids(&[1, 2, 3]), &set(&[1, 3]), 3).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ids(&[1, 2, 3]), &set(&[1, 9]), 3).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ids(&[1, 2, 3]), &set(&[7, 9]), 3).unwrap(), 0.0);
        // more relevant items than slots
        assert_eq!(recall_at_k(&ids(&[1, 2]), &set(&[1, 2, 3]), 2).unwrap(), 1.0);
        assert!(recall_at_k(&ids(&[1]), &BTreeSet::new(), 1).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let labels: Vec<String> = (0..11).map(|i| if i < 8 { "x" } else { "y" }.to_string()).collect();
        let c = ItemCatalog::single_group(11).with_labels(labels).unwrap();
        let rec: Vec<ItemId> = (2..=11).map(ItemId::new).collect();
        assert!((label_accuracy(&rec, ItemId::new(1), &c).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(label_accuracy(&ids(&[2, 3]), ItemId::new(1), &c).unwrap(), 1.0);
        assert_eq!(label_accuracy(&ids(&[2, 3]), ItemId::new(9), &c).unwrap(), 0.0);
        assert!(label_accuracy(&ids(&[2]), ItemId::new(1), &ItemCatalog::single_group(3)).is_err());
    }

    /// Definition-level nDCG: the DCG of the list divided by the DCG of the
    /// best reordering of the same-length list.
    fn brute_ndcg(rec: &[u32], relevant: &[u32], k: usize) -> f64 {
        let dcg = |list: &[bool]| -> f64 { list.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| 1.0 / (i as f64 + 2.0).ln() * 2f64.ln()).sum() };
        let top: Vec<bool> = rec.iter().take(k).map(|i| relevant.contains(i)).collect();
        let ideal: Vec<bool> = (0..k).map(|i| i < relevant.len()).collect();
        dcg(&top) / dcg(&ideal)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn metrics_match_definitions(
            rec in prop::sample::subsequence((1u32..=30).collect::<Vec<_>>(), 0..=12).prop_shuffle(),
            relevant in prop::collection::btree_set(1u32..=30, 1..8),
            k in 1usize..12,
        ) {
            let rel: Vec<u32> = relevant.iter().copied().collect();
            let got = ndcg_at_k(&ids(&rec), &set(&rel), k).unwrap();
            prop_assert!((got - brute_ndcg(&rec, &rel, k)).abs() < 1e-12);
            let hits = rec.iter().take(k).filter(|i| relevant.contains(i)).count();
            let want = hits as f64 / rel.len().min(k) as f64;
            prop_assert!((recall_at_k(&ids(&rec), &set(&rel), k).unwrap() - want).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }
    }
}
