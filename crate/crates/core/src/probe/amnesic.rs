//! Success of an intervention at turning paraphrases into word-for-word
//! translations, and sweeps over the layers it is applied to.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::CorpusSet;
use crate::error::{Error, Result};
use crate::labeler::{Label2, LabelSet, TranslationSet};
use crate::metrics::{bleu, BleuConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmnesicReport {
    /// Idiom id → percentage of its sentences that flipped.
    pub per_idiom: BTreeMap<String, f64>,
    pub mean_success: f64,
    pub flipped: usize,
    pub total: usize,
    /// BLEU of the post-intervention translations against the originals,
    /// over flipped sentences only.
    pub bleu: Option<f64>,
}

pub struct InterventionOutcome<'a> {
    pub pre_labels: &'a LabelSet,
    pub post_labels: &'a LabelSet,
    pub pre_translations: &'a TranslationSet,
    pub post_translations: &'a TranslationSet,
}

pub fn amnesic_success(outcome: &InterventionOutcome<'_>, corpus: &CorpusSet) -> Result<AmnesicReport> {
    let pre = outcome.pre_labels;
    let post = outcome.post_labels;
    if pre.is_empty() {
        return Err(Error::EmptySet("no sentences in the intervention set".into()));
    }
    if pre.len() != post.len() || pre.ids().zip(post.ids()).any(|(a, b)| a != b) {
        return Err(Error::Consistency(
            "pre and post labels cover different sentences".into(),
        ));
    }
    let mut by_idiom: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    for (a, b) in pre.iter().zip(post.iter()) {
        if a.label2 != Label2::Paraphrase {
            return Err(Error::Input(format!(
                "sentence `{}` is not a paraphrase before the intervention",
                a.sentence_id
            )));
        }
        let s = corpus
            .get(&a.sentence_id)
            .ok_or_else(|| Error::Consistency(format!("label for unknown sentence `{}`", a.sentence_id)))?;
        let entry = by_idiom.entry(s.idiom_id.clone()).or_insert((0, 0));
        entry.1 += 1;
        if b.label2 == Label2::WordForWord {
            entry.0 += 1;
            let missing = || Error::Consistency(format!("no translation for flipped sentence `{}`", a.sentence_id));
            let before = outcome.pre_translations.get(&a.sentence_id).ok_or_else(missing)?;
            let after = outcome.post_translations.get(&a.sentence_id).ok_or_else(missing)?;
            candidates.push(after.text());
            references.push(before.text());
        }
    }
    let per_idiom: BTreeMap<String, f64> = by_idiom
        .iter()
        .map(|(k, &(f, n))| (k.clone(), 100.0 * f as f64 / n as f64))
        .collect();
    let mean_success = per_idiom.values().sum::<f64>() / per_idiom.len() as f64;
    let bleu = if candidates.is_empty() {
        None
    } else {
        Some(bleu(&candidates, &references, &BleuConfig::default())?)
    };
    Ok(AmnesicReport {
        per_idiom,
        mean_success,
        flipped: candidates.len(),
        total: pre.len(),
        bleu,
    })
}

/// Produces post-intervention labels and translations for a set of layers.
pub trait InterventionRunner {
    fn run(&mut self, layers: &BTreeSet<usize>) -> Result<(LabelSet, TranslationSet)>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub layers: String,
    pub success: f64,
    pub bleu: Option<f64>,
    pub flipped: usize,
    pub total: usize,
}

pub fn layer_set_name(layers: &BTreeSet<usize>) -> String {
    if layers.is_empty() {
        return "none".into();
    }
    layers.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

/// Run every layer subset; an empty subset means no intervention.
pub fn layer_selection_sweep(
    runner: &mut dyn InterventionRunner,
    subsets: &[BTreeSet<usize>],
    pre_labels: &LabelSet,
    pre_translations: &TranslationSet,
    corpus: &CorpusSet,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(subsets.len());
    for layers in subsets {
        let (post_labels, post_translations) = if layers.is_empty() {
            (pre_labels.clone(), pre_translations.clone())
        } else {
            runner.run(layers)?
        };
        let report = amnesic_success(
            &InterventionOutcome {
                pre_labels,
                post_labels: &post_labels,
                pre_translations,
                post_translations: &post_translations,
            },
            corpus,
        )?;
        rows.push(SweepRow {
            layers: layer_set_name(layers),
            success: report.mean_success,
            bleu: report.bleu,
            flipped: report.flipped,
            total: report.total,
        });
    }
    Ok(rows)
}
