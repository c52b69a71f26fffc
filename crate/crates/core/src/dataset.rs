//! Dataset assembly: per-class balancing and the train/test split.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symexec::ApiCallRecord;

/// Labeled records plus where they came from.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub records: Vec<ApiCallRecord>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source_files: Vec<String>,
    /// Kept records per class after balancing.
    pub class_counts: BTreeMap<String, usize>,
    pub balance_cap: usize,
    pub seed: u64,
}

impl Dataset {
    /// Labels present, in canonical (sorted) order.
    pub fn class_names(&self) -> Vec<String> {
        self.provenance.class_counts.keys().cloned().collect()
    }
}

/// Keep at most `cap` records per class, sampled uniformly without
/// replacement; classes at or below the cap are kept whole. Unlabeled
/// records are dropped. Deterministic for a given seed.
pub fn balance(records: Vec<ApiCallRecord>, cap: usize, seed: u64) -> Result<Dataset> {
    if cap == 0 {
        return Err(Error::contract("balance cap must be positive"));
    }
    let mut by_class: BTreeMap<String, Vec<ApiCallRecord>> = BTreeMap::new();
    for rec in records {
        let Some(api) = rec.api.clone() else {
            continue;
        };
        by_class.entry(api).or_default().push(rec);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut kept = Vec::new();
    let mut class_counts = BTreeMap::new();
    for (api, mut group) in by_class {
        if group.len() > cap {
            // Partial Fisher-Yates: the first `cap` slots end up a uniform
            // sample without replacement.
            for i in 0..cap {
                let j = rng.random_range(i..group.len());
                group.swap(i, j);
            }
            group.truncate(cap);
        }
        class_counts.insert(api, group.len());
        kept.extend(group);
    }
    Ok(Dataset {
        records: kept,
        provenance: Provenance {
            source_files: Vec::new(),
            class_counts,
            balance_cap: cap,
            seed,
        },
    })
}

/// Index split of a record list into train and test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub train_frac: f64,
    pub seed: u64,
    pub stratified: bool,
}

/// Seeded train/test split. Stratified mode shuffles within each class and
/// sends `ceil(train_frac * count)` records to train, so single-record
/// classes always land in train; unstratified mode shuffles globally.
pub fn split(
    records: &[ApiCallRecord],
    train_frac: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitIndices> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::contract(format!(
            "train_frac {train_frac} outside (0, 1)"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut take = |indices: &mut Vec<usize>, rng: &mut StdRng| {
        for i in 0..indices.len().saturating_sub(1) {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let n_train = ((train_frac * indices.len() as f64).ceil() as usize).min(indices.len());
        train.extend_from_slice(&indices[..n_train]);
        test.extend_from_slice(&indices[n_train..]);
    };
    if stratified {
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            by_class.entry(rec.api_name()).or_default().push(i);
        }
        for (_, mut indices) in by_class {
            take(&mut indices, &mut rng);
        }
    } else {
        let mut indices: Vec<usize> = (0..records.len()).collect();
        take(&mut indices, &mut rng);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        test,
        train_frac,
        seed,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexec::RawArg;

    fn rec(api: &str, tag: u32) -> ApiCallRecord {
        ApiCallRecord {
            binary_id: format!("b{tag}"),
            call_addr: tag,
            api: Some(api.to_string()),
            n_args: 3,
            raw_args: vec![RawArg::Star; 12],
            image_range: None,
        }
    }

    #[test]
    fn oversized_classes_are_capped() {
        let records: Vec<_> = (0..1000).map(|i| rec("BigClass", i)).collect();
        let ds = balance(records, 400, 1).unwrap();
        assert_eq!(ds.records.len(), 400);
        assert_eq!(ds.provenance.class_counts["BigClass"], 400);
        // Without replacement: all call addresses distinct.
        let mut addrs: Vec<u32> = ds.records.iter().map(|r| r.call_addr).collect();
        addrs.sort_unstable();
        addrs.dedup();
        assert_eq!(addrs.len(), 400);
    }

    #[test]
    fn undersized_classes_are_kept_whole() {
        let records: Vec<_> = (0..250).map(|i| rec("SmallClass", i)).collect();
        let ds = balance(records, 400, 1).unwrap();
        assert_eq!(ds.records.len(), 250);
    }

    #[test]
    fn balancing_is_seed_deterministic() {
        let records: Vec<_> = (0..900).map(|i| rec("C", i)).collect();
        let a = balance(records.clone(), 100, 7).unwrap();
        let b = balance(records, 100, 7).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn split_is_a_stratified_partition() {
        let mut records = Vec::new();
        for i in 0..100 {
            records.push(rec("A", i));
        }
        for i in 0..10 {
            records.push(rec("B", 1000 + i));
        }
        let s = split(&records, 0.8, 3, true).unwrap();
        assert_eq!(s.train.len() + s.test.len(), records.len());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), records.len());
        let train_a = s.train.iter().filter(|&&i| i < 100).count();
        assert_eq!(train_a, 80);
        let train_b = s.train.len() - train_a;
        assert_eq!(train_b, 8);
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let records = vec![rec("A", 0), rec("A", 1), rec("Lonely", 2)];
        let s = split(&records, 0.8, 0, true).unwrap();
        assert!(s.train.contains(&2));
    }

    #[test]
    fn unstratified_mode_still_partitions() {
        let records: Vec<_> = (0..50).map(|i| rec("A", i)).collect();
        let s = split(&records, 0.8, 11, false).unwrap();
        assert_eq!(s.train.len(), 40);
        assert_eq!(s.test.len(), 10);
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let records = vec![rec("A", 0)];
        assert!(split(&records, 0.0, 0, true).is_err());
        assert!(split(&records, 1.0, 0, true).is_err());
    }
}
