//! Evaluation primitives shared by the labeler and probing modules.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Unweighted mean of per-class F1 over every class seen in `pred` or `gold`.
pub fn macro_f1<L: Ord + Clone>(pred: &[L], gold: &[L]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Input("macro_f1 on empty input".into()));
    }
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "macro_f1 length mismatch: {} predictions, {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let classes: BTreeSet<&L> = pred.iter().chain(gold.iter()).collect();
    let mut total = 0.0;
    for class in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, g) in pred.iter().zip(gold) {
            match (p == *class, g == *class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / classes.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "pearson_r length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two paired samples".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_r(&ranks(x), &ranks(y))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// Orders with zero matches count as one match out of `total + 1`.
    AddOneOnZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::None,
        }
    }
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU on whitespace-tokenized text, scaled to [0, 100].
pub fn bleu<S: AsRef<str>>(candidates: &[S], references: &[S], config: &BleuConfig) -> Result<f64> {
    if config.max_order == 0 {
        return Err(Error::Input("BLEU order must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Input("BLEU on an empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "BLEU corpus size mismatch: {} candidates, {} references",
            candidates.len(),
            references.len()
        )));
    }
    let order = config.max_order;
    let mut matches = vec![0usize; order];
    let mut totals = vec![0usize; order];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        let c: Vec<&str> = cand.as_ref().split_whitespace().collect();
        let r: Vec<&str> = reference.as_ref().split_whitespace().collect();
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=order {
            let cc = ngram_counts(&c, n);
            let rc = ngram_counts(&r, n);
            for (gram, count) in &cc {
                matches[n - 1] += (*count).min(rc.get(gram).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..order {
        let (m, t) = match (matches[n], config.smoothing) {
            (0, Smoothing::AddOneOnZero) => (1.0, totals[n] as f64 + 1.0),
            (0, Smoothing::None) => return Ok(0.0),
            (m, _) => (m as f64, totals[n] as f64),
        };
        log_sum += (m / t).ln();
    }
    let brevity = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok((100.0 * brevity * (log_sum / order as f64).exp()).min(100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn macro_f1_cases() {
        assert_eq!(macro_f1(&["a", "b", "a"], &["a", "b", "a"]).unwrap(), 1.0);
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), 0.0);
        // F1_a = 2/3, F1_b = 4/5
        let v = macro_f1(&["a", "b", "b", "b"], &["a", "a", "b", "b"]).unwrap();
        assert_abs_diff_eq!(v, (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        assert!(macro_f1::<u8>(&[], &[]).is_err());
        assert!(macro_f1(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert_abs_diff_eq!(pearson_r(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson_r(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(matches!(
            pearson_r(&[1.0, 1.0], &[2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn spearman_uses_ranks() {
        let rho = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert_abs_diff_eq!(rho, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bleu_identity_and_zero() {
        let c = ["a b c d e", "the house is red"];
        assert_abs_diff_eq!(bleu(&c, &c, &BleuConfig::default()).unwrap(), 100.0, epsilon = 1e-9);
        let z = bleu(&["x y z w"], &["a b c d"], &BleuConfig::default()).unwrap();
        assert_eq!(z, 0.0);
        let smoothed = bleu(
            &["x y z w"],
            &["x b c d"],
            &BleuConfig {
                max_order: 4,
                smoothing: Smoothing::AddOneOnZero,
            },
        )
        .unwrap();
        assert!(smoothed > 0.0 && smoothed < 100.0);
        assert!(bleu::<&str>(&[], &[], &BleuConfig::default()).is_err());
    }

    #[test]
    fn bleu_hand_counted() {
        // matches per order 14/16, 8/13, 4/10, 2/7; c = 16, r = 18
        let cands = [
            "the cat sat on the mat",
            "there is a dog in the garden",
            "he reads books",
        ];
        let refs = [
            "the cat is on the mat",
            "there is a dog in my garden",
            "he reads many books today",
        ];
        let v = bleu(&cands, &refs, &BleuConfig::default()).unwrap();
        assert_abs_diff_eq!(v, 43.954146204, epsilon = 1e-4);
    }
}
