use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, WindowKey, WindowPair};

/// Fold index per window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: BTreeMap<WindowKey, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, key: &WindowKey) -> Option<usize> {
        self.assignment.get(key).copied()
    }

    /// Keys of each fold, in key order.
    pub fn folds(&self) -> Vec<Vec<WindowKey>> {
        let mut out = vec![Vec::new(); self.k];
        for (key, &f) in &self.assignment {
            out[f].push(key.clone());
        }
        out
    }

    /// Writes `key,fold` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["key", "fold"])?;
        for (key, f) in &self.assignment {
            wtr.write_record([key.to_string(), f.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Splits windows into `k` folds stratified by dataset.
///
/// Within each dataset the windows are sorted by key, shuffled with the
/// seed, then dealt round-robin; the dealing position carries over from one
/// dataset to the next so overall fold sizes also stay within one of each
/// other.
pub fn stratified_folds(pairs: &[WindowPair], k: usize, seed: u64) -> Result<FoldAssignment, CorpusError> {
    let keys: Vec<&WindowKey> = pairs.iter().map(|p| &p.key).collect();
    stratified_folds_for_keys(&keys, k, seed)
}

pub(crate) fn stratified_folds_for_keys(
    keys: &[&WindowKey],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::Invalid(format!("k must be >= 2, got {k}")));
    }
    if keys.len() < k {
        return Err(CorpusError::Invalid(format!(
            "cannot split {} windows into {k} folds",
            keys.len()
        )));
    }
    let mut strata: BTreeMap<&str, Vec<&WindowKey>> = BTreeMap::new();
    for key in keys {
        strata.entry(key.dataset_id.as_str()).or_default().push(key);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut offset = 0;
    for members in strata.values_mut() {
        members.sort();
        members.dedup();
        members.shuffle(&mut rng);
        for (j, key) in members.iter().enumerate() {
            assignment.insert((*key).clone(), (offset + j) % k);
        }
        offset = (offset + members.len()) % k;
    }
    if assignment.len() != keys.len() {
        return Err(CorpusError::Invalid("duplicate window keys".into()));
    }
    Ok(FoldAssignment { k, assignment })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn keys(ds: &str, n: usize) -> Vec<WindowKey> {
        (0..n)
            .map(|i| WindowKey {
                dataset_id: ds.into(),
                subject_id: format!("s{}", i / 7),
                trial_id: format!("t{}", i % 7),
                window_index: i,
            })
            .collect()
    }

    fn counts(fa: &FoldAssignment, ds: &str) -> Vec<usize> {
        let mut c = vec![0; fa.k];
        for (key, &f) in &fa.assignment {
            if key.dataset_id == ds {
                c[f] += 1;
            }
        }
        c
    }

    #[test]
    fn single_dataset_exact_division() {
        let ks = keys("A", 100);
        let refs: Vec<&WindowKey> = ks.iter().collect();
        let fa = stratified_folds_for_keys(&refs, 10, 1).unwrap();
        assert_eq!(counts(&fa, "A"), vec![10; 10]);
    }

    #[test]
    fn two_datasets_proportional() {
        let mut ks = keys("A", 40);
        ks.extend(keys("B", 60));
        let refs: Vec<&WindowKey> = ks.iter().collect();
        let fa = stratified_folds_for_keys(&refs, 10, 3).unwrap();
        assert_eq!(counts(&fa, "A"), vec![4; 10]);
        assert_eq!(counts(&fa, "B"), vec![6; 10]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ks = keys("A", 50);
        let refs: Vec<&WindowKey> = ks.iter().collect();
        let a = stratified_folds_for_keys(&refs, 5, 7).unwrap();
        let b = stratified_folds_for_keys(&refs, 5, 7).unwrap();
        let c = stratified_folds_for_keys(&refs, 5, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // input order does not matter
        let rev: Vec<&WindowKey> = ks.iter().rev().collect();
        assert_eq!(stratified_folds_for_keys(&rev, 5, 7).unwrap(), a);
    }

    #[test]
    fn rejects_bad_k() {
        let ks = keys("A", 5);
        let refs: Vec<&WindowKey> = ks.iter().collect();
        assert!(stratified_folds_for_keys(&refs, 1, 0).is_err());
        assert!(stratified_folds_for_keys(&refs, 6, 0).is_err());
    }

    #[test]
    fn csv_export() {
        let ks = keys("A", 4);
        let refs: Vec<&WindowKey> = ks.iter().collect();
        let fa = stratified_folds_for_keys(&refs, 2, 0).unwrap();
        let mut buf = Vec::new();
        fa.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("key,fold\n"));
        assert_eq!(text.lines().count(), 5);
    }

    proptest! {
        #[test]
        fn partitions_with_bounded_imbalance(sizes in prop::collection::vec(1usize..40, 1..4), k in 2usize..8, seed in 0u64..1000) {
            let mut ks = Vec::new();
            for (i, n) in sizes.iter().enumerate() {
                ks.extend(keys(&format!("D{i}"), *n));
            }
            prop_assume!(ks.len() >= k);
            let refs: Vec<&WindowKey> = ks.iter().collect();
            let fa = stratified_folds_for_keys(&refs, k, seed).unwrap();
            prop_assert_eq!(fa.assignment.len(), ks.len());
            let total: usize = fa.folds().iter().map(|f| f.len()).sum();
            prop_assert_eq!(total, ks.len());
            for (i, n) in sizes.iter().enumerate() {
                let ideal = *n as f64 / k as f64;
                for c in counts(&fa, &format!("D{i}")) {
                    prop_assert!((c as f64 - ideal).abs() <= 1.0);
                }
            }
        }
    }
}
