//! Monte Carlo cross-validation splits.
//!
//! Each fold is an independent random partition, so a sample may land in the
//! validation set of several folds.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    /// Training ids in input order.
    pub train: Vec<String>,
    /// Validation ids in input order.
    pub validation: Vec<String>,
}

/// `k` random splits holding out `floor(ratio · n)` ids each.
pub fn monte_carlo_splits(ids: &[String], k: usize, ratio: f64, seed: u64) -> Result<Vec<FoldSplit>> {
    if k == 0 {
        return Err(Error::Contract("need at least one fold".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Contract(format!("validation ratio {ratio} outside (0, 1)")));
    }
    let n = ids.len();
    let n_val = (n as f64 * ratio).floor() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::Contract(format!(
            "{n} samples at ratio {ratio} leave an empty training or validation set"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    Ok((0..k)
        .map(|fold| {
            order.shuffle(&mut rng);
            let mut in_val = vec![false; n];
            for &i in &order[..n_val] {
                in_val[i] = true;
            }
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for (i, id) in ids.iter().enumerate() {
                if in_val[i] { &mut validation } else { &mut train }.push(id.clone());
            }
            FoldSplit { fold, train, validation }
        })
        .collect())
}

pub fn write_splits(path: impl AsRef<Path>, splits: &[FoldSplit]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(splits).expect("splits serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_splits(path: impl AsRef<Path>) -> Result<Vec<FoldSplit>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ingest(path, Some(e.line()), e.to_string()))
}
