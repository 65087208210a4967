//! Linear probing of encoder hidden states, nullspace projection and
//! intervention bookkeeping.

pub mod amnesic;
pub mod cv;
pub mod freq;
pub mod inlp;
pub mod logreg;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

pub use amnesic::{
    amnesic_success, layer_selection_sweep, AmnesicReport, InterventionOutcome, InterventionRunner, SweepRow,
};
pub use cv::{assign_folds, grouped_cv_f1, rotation, CvResult, Rotation};
pub use freq::{frequency_baseline_labels, frequency_feature, FrequencyTable};
pub use inlp::{apply_projection, inlp_train, inlp_train_with_dev, InlpConfig, NullspaceProjector};
pub use logreg::{train_probe, Probe, ProbeConfig};

use crate::corpus::CorpusSet;
use crate::dumpio::ActivationDump;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// One sample per PIE subtoken.
    #[default]
    PerToken,
    /// The mean PIE subtoken state per sentence.
    MeanPooled,
}

/// Probing data: rows of `x` with their label, idiom and sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
    pub groups: Vec<String>,
    pub sentence_ids: Vec<String>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn group_refs(&self) -> Vec<&str> {
        self.groups.iter().map(String::as_str).collect()
    }

    /// Rows whose group satisfies `keep`.
    pub fn filter_groups(&self, keep: impl Fn(&str) -> bool) -> Samples {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.groups[i])).collect();
        Samples {
            x: self.x.select_rows(rows.iter()),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i].clone()).collect(),
            sentence_ids: rows.iter().map(|&i| self.sentence_ids[i].clone()).collect(),
        }
    }
}

/// Hidden states of PIE subtokens at `layer` (0 = embeddings) for every
/// sentence that has both a dump and a target value, in corpus order.
pub fn probing_samples(
    corpus: &CorpusSet,
    dumps: &BTreeMap<String, ActivationDump>,
    targets: &BTreeMap<String, bool>,
    layer: usize,
    pooling: Pooling,
) -> Result<Samples> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut out = Samples {
        x: DMatrix::zeros(0, 0),
        y: Vec::new(),
        groups: Vec::new(),
        sentence_ids: Vec::new(),
    };
    for s in corpus.iter() {
        let (Some(d), Some(&target)) = (dumps.get(&s.id), targets.get(&s.id)) else {
            continue;
        };
        if layer > d.num_layers() {
            return Err(Error::Input(format!("layer {layer} out of range for `{}`", s.id)));
        }
        let toks: Vec<usize> = s.pie_word_indices.iter().flat_map(|&w| d.src_subtokens_of(w)).collect();
        let states: Vec<Vec<f64>> = toks
            .iter()
            .map(|&t| d.hidden(layer, t).iter().map(|&v| v as f64).collect())
            .collect();
        let states = match pooling {
            Pooling::PerToken => states,
            Pooling::MeanPooled if states.is_empty() => states,
            Pooling::MeanPooled => {
                let n = states.len() as f64;
                let mut m = vec![0.0; states[0].len()];
                for st in &states {
                    m.iter_mut().zip(st).for_each(|(a, b)| *a += b / n);
                }
                vec![m]
            }
        };
        for st in states {
            if let Some(first) = rows.first() {
                if first.len() != st.len() {
                    return Err(Error::Consistency(format!("hidden size differs in `{}`", s.id)));
                }
            }
            rows.push(st);
            out.y.push(target);
            out.groups.push(s.idiom_id.clone());
            out.sentence_ids.push(s.id.clone());
        }
    }
    let d = rows.first().map_or(0, Vec::len);
    out.x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{fixtures::sentence, GoldLabel};
    use crate::dumpio::testutil::simple_dump;
    use crate::dumpio::Tensor;

    #[test]
    fn samples_follow_pie_subtokens() {
        let corpus = CorpusSet::new(vec![
            sentence("a", 3, &[0, 1], GoldLabel::Figurative, "x"),
            sentence("b", 3, &[2], GoldLabel::Literal, "y"),
        ])
        .unwrap();
        let mut dumps = BTreeMap::new();
        for id in ["a", "b"] {
            let mut d = simple_dump(id, 3, 1, 1, 2);
            let data: Vec<f32> = (0..2 * 4 * 2).map(|v| v as f32).collect();
            d.enc_hidden = Tensor::f32(vec![2, 4, 2], data).unwrap();
            dumps.insert(id.to_string(), d);
        }
        let targets: BTreeMap<String, bool> = [("a".into(), true), ("b".into(), false)].into();
        let s = probing_samples(&corpus, &dumps, &targets, 1, Pooling::PerToken).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.groups, ["x", "x", "y"]);
        // layer 1, token 0 starts at offset 8
        assert_eq!(s.x[(0, 0)], 8.0);
        let m = probing_samples(&corpus, &dumps, &targets, 1, Pooling::MeanPooled).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.x[(0, 0)], 9.0);
    }
}
