//! Group-aware cross-validation: all samples of one idiom share a fold.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::logreg::{train_probe, ProbeConfig};
use crate::error::{Error, Result};
use crate::metrics::{macro_f1, mean, std_dev};

pub const DEFAULT_FOLDS: usize = 5;

/// Assign groups to folds: seeded shuffle, then largest groups first onto the
/// currently smallest fold. Returns group → fold.
pub fn assign_folds<'a>(groups: &[&'a str], folds: usize, seed: u64) -> Result<BTreeMap<&'a str, usize>> {
    if folds < 2 {
        return Err(Error::Input(format!("need at least 2 folds, got {folds}")));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g).or_insert(0) += 1;
    }
    if sizes.len() < folds {
        return Err(Error::Input(format!("{} groups for {folds} folds", sizes.len())));
    }
    let mut order: Vec<(&str, usize)> = sizes.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // stable, so equal sizes keep their shuffled order
    order.sort_by_key(|g| std::cmp::Reverse(g.1));
    let mut load = vec![0usize; folds];
    let mut out = BTreeMap::new();
    for (g, n) in order {
        let f = (0..folds).min_by_key(|&f| (load[f], f)).expect("folds >= 2");
        load[f] += n;
        out.insert(g, f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub mean_f1: f64,
    pub std_f1: f64,
    pub fold_f1: Vec<f64>,
}

/// Macro-F1 of probes trained on all folds but one, per held-out fold.
pub fn grouped_cv_f1(
    x: &DMatrix<f64>,
    y: &[bool],
    groups: &[&str],
    folds: usize,
    config: &ProbeConfig,
) -> Result<CvResult> {
    if x.nrows() != y.len() || y.len() != groups.len() {
        return Err(Error::Input("samples, labels and groups differ in length".into()));
    }
    let assignment = assign_folds(groups, folds, config.seed)?;
    let fold_of: Vec<usize> = groups.iter().map(|g| assignment[g]).collect();
    let mut fold_f1 = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
        let ytr: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let probe = train_probe(&x.select_rows(train.iter()), &ytr, config)?;
        let pred = probe.predict(&x.select_rows(test.iter()));
        let gold: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        fold_f1.push(macro_f1(&pred, &gold)?);
    }
    Ok(CvResult {
        mean_f1: mean(&fold_f1),
        std_f1: std_dev(&fold_f1),
        fold_f1,
    })
}

/// Roles of the idiom folds in one rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    pub train: Vec<usize>,
    pub dev: usize,
    pub test: usize,
}

/// Rotation `r` over `folds` folds: fold `r` is the test fold, the next one
/// the dev fold, and the rest train.
pub fn rotation(r: usize, folds: usize) -> Rotation {
    let test = r % folds;
    let dev = (r + 1) % folds;
    Rotation {
        train: (0..folds).filter(|&f| f != test && f != dev).collect(),
        dev,
        test,
    }
}
