use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Assignment of record ids to `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

/// Record ids in each role for one cross-validation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRoles {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles ids with `seed` and deals them round-robin, so fold sizes differ by at most one.
pub fn make_folds(record_ids: &[&str], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if record_ids.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} records cannot fill {k} folds",
            record_ids.len()
        )));
    }
    let mut ids: Vec<&str> = record_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate record id".into()));
    }
    ids.shuffle(&mut seed::rng(seed, "folds"));
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    Ok(FoldSplit { k, assignment })
}

impl FoldSplit {
    pub fn fold(&self, f: usize) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, v)| **v == f)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.assignment.values() {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Round `r` tests on fold `r`, validates on fold `r + 1 (mod k)` and trains on the rest.
    pub fn round(&self, r: usize) -> Result<RoundRoles> {
        if self.k < 3 {
            return Err(Error::InvalidArgument(format!(
                "train/validation/test rounds need at least 3 folds, got {}",
                self.k
            )));
        }
        if r >= self.k {
            return Err(Error::InvalidArgument(format!(
                "round {r} out of range for {} folds",
                self.k
            )));
        }
        let val_fold = (r + 1) % self.k;
        let mut roles = RoundRoles {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (id, f) in &self.assignment {
            let bucket = if *f == r {
                &mut roles.test
            } else if *f == val_fold {
                &mut roles.val
            } else {
                &mut roles.train
            };
            bucket.push(id.clone());
        }
        Ok(roles)
    }
}
