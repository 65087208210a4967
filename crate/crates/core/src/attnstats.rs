//! Attention statistics over PIE sentences: encoder self-attention within the
//! PIE and between PIE and context, and cross-attention from the translation of
//! the PIE noun. All values are head-averaged word-level weights.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{CorpusSet, PieSentence, Subset};
use crate::dumpio::{aligned_target_token, ActivationDump, AlignmentSet, Variant};
use crate::error::{Error, Result};
use crate::labeler::LabelSet;
use crate::metrics::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    #[serde(rename = "pie2noun")]
    Pie2Noun,
    #[serde(rename = "pie2ctx")]
    Pie2Ctx,
    #[serde(rename = "ctx2pie")]
    Ctx2Pie,
    XattnNoun,
    XattnPieOther,
    XattnEos,
}

impl Analysis {
    pub const ENCODER: [Analysis; 3] = [Analysis::Pie2Noun, Analysis::Pie2Ctx, Analysis::Ctx2Pie];
    pub const CROSS: [Analysis; 3] = [Analysis::XattnNoun, Analysis::XattnPieOther, Analysis::XattnEos];

    pub fn is_cross(self) -> bool {
        Self::CROSS.contains(&self)
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Analysis::Pie2Noun => "pie2noun",
            Analysis::Pie2Ctx => "pie2ctx",
            Analysis::Ctx2Pie => "ctx2pie",
            Analysis::XattnNoun => "xattn_noun",
            Analysis::XattnPieOther => "xattn_pie_other",
            Analysis::XattnEos => "xattn_eos",
        })
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pie2noun" => Analysis::Pie2Noun,
            "pie2ctx" => Analysis::Pie2Ctx,
            "ctx2pie" => Analysis::Ctx2Pie,
            "xattn_noun" => Analysis::XattnNoun,
            "xattn_pie_other" => Analysis::XattnPieOther,
            "xattn_eos" => Analysis::XattnEos,
            other => return Err(Error::Input(format!("unknown analysis `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heads {
    #[default]
    Mean,
    Single(usize),
}

impl Heads {
    fn list(self, num_heads: usize) -> Result<Vec<usize>> {
        match self {
            Heads::Mean => Ok((0..num_heads).collect()),
            Heads::Single(h) if h < num_heads => Ok(vec![h]),
            Heads::Single(h) => Err(Error::Input(format!("head {h} out of range ({num_heads} heads)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileOptions {
    pub heads: Heads,
    /// ctx2pie from every context word instead of context nouns only.
    pub ctx2pie_all_words: bool,
}

/// Word-by-word self-attention of one layer.
#[derive(Debug, Clone)]
pub struct WordAttention {
    n: usize,
    data: Vec<f64>,
}

impl WordAttention {
    pub fn num_words(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }
}

fn word_groups(map: &[Option<usize>], words: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); words];
    for (i, w) in map.iter().enumerate() {
        if let Some(w) = *w {
            groups[w].push(i);
        }
    }
    groups
}

pub fn word_self_attention(dump: &ActivationDump, layer: usize, heads: Heads) -> Result<WordAttention> {
    if layer >= dump.num_layers() {
        return Err(Error::Input(format!("layer {layer} out of range")));
    }
    let hs = heads.list(dump.num_heads())?;
    let s = dump.src_len();
    let mut avg = vec![0.0f64; s * s];
    for &h in &hs {
        for q in 0..s {
            let row = dump.self_attn_row(layer, h, q);
            for (k, &v) in row.iter().enumerate() {
                avg[q * s + k] += v as f64;
            }
        }
    }
    let scale = 1.0 / hs.len() as f64;
    avg.iter_mut().for_each(|v| *v *= scale);

    let n = dump.num_src_words();
    let groups = word_groups(&dump.src_word_of, n);
    let mut data = vec![0.0; n * n];
    for (i, qs) in groups.iter().enumerate() {
        for (j, ks) in groups.iter().enumerate() {
            let total: f64 = qs
                .iter()
                .map(|&q| ks.iter().map(|&k| avg[q * s + k]).sum::<f64>())
                .sum();
            data[i * n + j] = total / qs.len() as f64;
        }
    }
    Ok(WordAttention { n, data })
}

fn check_alignment(dump: &ActivationDump, sentence: &PieSentence) -> Result<()> {
    if dump.sentence_id != sentence.id {
        return Err(Error::Consistency(format!(
            "dump `{}` paired with sentence `{}`",
            dump.sentence_id, sentence.id
        )));
    }
    if dump.num_src_words() != sentence.tokens.len() {
        return Err(Error::Consistency(format!(
            "dump `{}` covers {} words, corpus sentence has {}",
            dump.sentence_id,
            dump.num_src_words(),
            sentence.tokens.len()
        )));
    }
    if sentence.keyword_indices.is_empty() {
        return Err(Error::Input(format!("sentence `{}` has no keyword", sentence.id)));
    }
    Ok(())
}

fn mean_over_pairs(att: &WordAttention, from: &[usize], to: &[usize]) -> Option<f64> {
    if from.is_empty() || to.is_empty() {
        return None;
    }
    let total: f64 = from
        .iter()
        .map(|&q| to.iter().map(|&k| att.get(q, k)).sum::<f64>())
        .sum();
    Some(total / (from.len() * to.len()) as f64)
}

fn encoder_value(att: &WordAttention, s: &PieSentence, analysis: Analysis, opts: &ProfileOptions) -> Option<f64> {
    match analysis {
        Analysis::Pie2Noun => {
            let per_kw: Vec<f64> = s
                .keyword_indices
                .iter()
                .filter_map(|&kw| {
                    let others: Vec<usize> = s.pie_word_indices.iter().copied().filter(|&w| w != kw).collect();
                    mean_over_pairs(att, &others, &[kw])
                })
                .collect();
            (!per_kw.is_empty()).then(|| mean(&per_kw))
        }
        Analysis::Pie2Ctx => mean_over_pairs(att, &s.pie_word_indices, &s.context_nouns_in_window()),
        Analysis::Ctx2Pie => {
            let from = if opts.ctx2pie_all_words {
                s.context_words_in_window()
            } else {
                s.context_nouns_in_window()
            };
            mean_over_pairs(att, &from, &s.keyword_indices)
        }
        _ => None,
    }
}

/// One encoder analysis for one sentence at one layer; `None` when the
/// sentence lacks the tokens the analysis needs.
pub fn encoder_profile(
    dump: &ActivationDump,
    sentence: &PieSentence,
    layer: usize,
    analysis: Analysis,
    opts: &ProfileOptions,
) -> Result<Option<f64>> {
    if analysis.is_cross() {
        return Err(Error::Input(format!("{analysis} is a cross-attention analysis")));
    }
    check_alignment(dump, sentence)?;
    let att = word_self_attention(dump, layer, opts.heads)?;
    Ok(encoder_value(&att, sentence, analysis, opts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossProfile {
    pub to_noun: f64,
    pub to_pie_other: f64,
    pub to_eos: f64,
}

impl CrossProfile {
    pub fn value(&self, analysis: Analysis) -> Option<f64> {
        match analysis {
            Analysis::XattnNoun => Some(self.to_noun),
            Analysis::XattnPieOther => Some(self.to_pie_other),
            Analysis::XattnEos => Some(self.to_eos),
            _ => None,
        }
    }
}

/// Cross-attention from the target word aligned to each keyword. `None` when
/// no keyword has an aligned target word.
pub fn cross_profile(
    dump: &ActivationDump,
    sentence: &PieSentence,
    alignment: &std::collections::BTreeSet<(usize, usize)>,
    layer: usize,
    heads: Heads,
) -> Result<Option<CrossProfile>> {
    check_alignment(dump, sentence)?;
    if dump.cross_attn.is_none() {
        return Err(Error::MissingInput(format!(
            "dump `{}` has no cross-attention",
            dump.sentence_id
        )));
    }
    if layer >= dump.num_layers() {
        return Err(Error::Input(format!("layer {layer} out of range")));
    }
    let hs = heads.list(dump.num_heads())?;
    let src_groups = word_groups(&dump.src_word_of, dump.num_src_words());
    let mut found = Vec::new();
    for &kw in &sentence.keyword_indices {
        let Some(t) = aligned_target_token(alignment, kw) else {
            continue;
        };
        let rows = dump.tgt_subtokens_of(t);
        if rows.is_empty() {
            continue;
        }
        let s = dump.src_len();
        let mut avg = vec![0.0f64; s];
        for &h in &hs {
            for &r in &rows {
                let row = dump.cross_attn_row(layer, h, r).expect("checked above");
                for (k, &v) in row.iter().enumerate() {
                    avg[k] += v as f64;
                }
            }
        }
        let scale = 1.0 / (hs.len() * rows.len()) as f64;
        avg.iter_mut().for_each(|v| *v *= scale);
        let mass = |words: &mut dyn Iterator<Item = usize>| -> f64 {
            words.flat_map(|w| src_groups[w].iter()).map(|&k| avg[k]).sum()
        };
        let to_noun = mass(&mut std::iter::once(kw));
        let to_pie_other = mass(&mut sentence.pie_word_indices.iter().copied().filter(|&w| w != kw));
        found.push(CrossProfile {
            to_noun,
            to_pie_other,
            to_eos: avg[dump.eos_index],
        });
    }
    if found.is_empty() {
        return Ok(None);
    }
    let n = found.len() as f64;
    Ok(Some(CrossProfile {
        to_noun: found.iter().map(|c| c.to_noun).sum::<f64>() / n,
        to_pie_other: found.iter().map(|c| c.to_pie_other).sum::<f64>() / n,
        to_eos: found.iter().map(|c| c.to_eos).sum::<f64>() / n,
    }))
}

/// Per-sentence values of one analysis for one subset, one list per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnProfile {
    pub analysis: Analysis,
    pub subset: Subset,
    pub sentence_ids: Vec<String>,
    /// `layers[l][i]` belongs to `sentence_ids[i]`.
    pub layers: Vec<Vec<f64>>,
    /// Sentences in the subset that were skipped for this analysis.
    pub skipped: usize,
}

pub struct ProfileInputs<'a> {
    pub corpus: &'a CorpusSet,
    pub dumps: &'a BTreeMap<String, ActivationDump>,
    pub labels: Option<&'a LabelSet>,
    pub alignments: Option<&'a AlignmentSet>,
    pub options: ProfileOptions,
}

/// Values of one sentence at every layer; `None` when the sentence is skipped.
fn sentence_values(
    inputs: &ProfileInputs<'_>,
    index: usize,
    sentence: &PieSentence,
    dump: &ActivationDump,
    analysis: Analysis,
) -> Result<Option<Vec<f64>>> {
    let mut out = Vec::with_capacity(dump.num_layers());
    for layer in 0..dump.num_layers() {
        let v = if analysis.is_cross() {
            let alignments = inputs
                .alignments
                .ok_or_else(|| Error::MissingInput("cross-attention analyses need alignments".into()))?;
            let pairs = alignments
                .line(index)
                .ok_or_else(|| Error::Consistency(format!("no alignment line for sentence `{}`", sentence.id)))?;
            cross_profile(dump, sentence, pairs, layer, inputs.options.heads)?.and_then(|c| c.value(analysis))
        } else {
            encoder_profile(dump, sentence, layer, analysis, &inputs.options)?
        };
        match v {
            Some(v) => out.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Collect per-sentence values for every sentence of `subset`. Sentences
/// without a dump are skipped with a warning.
pub fn collect_profile(inputs: &ProfileInputs<'_>, analysis: Analysis, subset: Subset) -> Result<AttnProfile> {
    if subset.needs_labels() && inputs.labels.is_none() {
        return Err(Error::MissingInput(format!("subset {subset} needs translation labels")));
    }
    let members: Vec<(usize, &PieSentence)> = inputs
        .corpus
        .iter()
        .enumerate()
        .filter(|(_, s)| subset.contains(s, inputs.labels))
        .collect();
    type Values = Option<(String, Vec<f64>)>;
    let results: Vec<Result<Values>> = members
        .par_iter()
        .map(|&(i, s)| {
            let Some(dump) = inputs.dumps.get(&s.id) else {
                log::warn!("no dump for sentence `{}`, skipped", s.id);
                return Ok(None);
            };
            Ok(sentence_values(inputs, i, s, dump, analysis)?.map(|v| (s.id.clone(), v)))
        })
        .collect();

    let mut sentence_ids = Vec::new();
    let mut per_sentence = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some((id, v)) => {
                sentence_ids.push(id);
                per_sentence.push(v);
            }
            None => skipped += 1,
        }
    }
    let num_layers = per_sentence.first().map_or(0, Vec::len);
    if per_sentence.iter().any(|v| v.len() != num_layers) {
        return Err(Error::Consistency("dumps disagree on the number of layers".into()));
    }
    let layers = (0..num_layers)
        .map(|l| per_sentence.iter().map(|v| v[l]).collect())
        .collect();
    Ok(AttnProfile {
        analysis,
        subset,
        sentence_ids,
        layers,
        skipped,
    })
}

/// Descriptive statistics for one box in a box plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub n: usize,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles by linear interpolation; whiskers at the most extreme values
/// within 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let lo_whisker = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
    let hi_whisker = v
        .iter()
        .rev()
        .copied()
        .find(|&x| x <= q3 + 1.5 * iqr)
        .unwrap_or(v[v.len() - 1]);
    Some(BoxStats {
        mean: mean(values),
        q1,
        median,
        q3,
        lo_whisker,
        hi_whisker,
        n: values.len(),
    })
}

/// One CSV row of attention statistics. Difference rows leave the quartile
/// fields empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub language: String,
    pub analysis: Analysis,
    pub subset: String,
    pub layer: usize,
    pub mean: f64,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub lo_whisker: Option<f64>,
    pub hi_whisker: Option<f64>,
    pub n: usize,
}

impl StatRow {
    fn from_box(language: &str, analysis: Analysis, subset: String, layer: usize, b: BoxStats) -> Self {
        StatRow {
            language: language.into(),
            analysis,
            subset,
            layer,
            mean: b.mean,
            q1: Some(b.q1),
            median: Some(b.median),
            q3: Some(b.q3),
            lo_whisker: Some(b.lo_whisker),
            hi_whisker: Some(b.hi_whisker),
            n: b.n,
        }
    }
}

pub fn summarize(profile: &AttnProfile, language: &str) -> Vec<StatRow> {
    profile
        .layers
        .iter()
        .enumerate()
        .filter_map(|(l, values)| {
            box_stats(values).map(|b| StatRow::from_box(language, profile.analysis, profile.subset.to_string(), l, b))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerDifference {
    pub layer: usize,
    pub difference: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Per-layer `mean(a) - mean(b)`; layers where either side is empty are
/// omitted with a warning.
pub fn subset_difference(a: &AttnProfile, b: &AttnProfile) -> Result<Vec<LayerDifference>> {
    if a.analysis != b.analysis {
        return Err(Error::Consistency(format!(
            "cannot subtract {} from {}",
            b.analysis, a.analysis
        )));
    }
    let layers = a.layers.len().max(b.layers.len());
    let mut out = Vec::new();
    for l in 0..layers {
        let (va, vb) = (a.layers.get(l), b.layers.get(l));
        match (va, vb) {
            (Some(va), Some(vb)) if !va.is_empty() && !vb.is_empty() => out.push(LayerDifference {
                layer: l,
                difference: mean(va) - mean(vb),
                n_a: va.len(),
                n_b: vb.len(),
            }),
            _ => log::warn!("{}: layer {l} has an empty subset, omitted", a.analysis),
        }
    }
    Ok(out)
}

pub fn difference_rows(a: &AttnProfile, b: &AttnProfile, language: &str) -> Result<Vec<StatRow>> {
    let subset = format!("{}-minus-{}", a.subset, b.subset);
    Ok(subset_difference(a, b)?
        .into_iter()
        .map(|d| StatRow {
            language: language.into(),
            analysis: a.analysis,
            subset: subset.clone(),
            layer: d.layer,
            mean: d.difference,
            q1: None,
            median: None,
            q3: None,
            lo_whisker: None,
            hi_whisker: None,
            n: d.n_a + d.n_b,
        })
        .collect())
}

/// Box statistics of per-language differences at each layer.
pub fn difference_across_languages(per_language: &[Vec<LayerDifference>]) -> BTreeMap<usize, BoxStats> {
    let mut by_layer: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for diffs in per_language {
        for d in diffs {
            by_layer.entry(d.layer).or_default().push(d.difference);
        }
    }
    by_layer
        .into_iter()
        .filter_map(|(l, v)| box_stats(&v).map(|b| (l, b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub analysis: Analysis,
    pub layer: usize,
    pub normal: f64,
    pub projected: f64,
    pub delta: f64,
    pub n: usize,
}

/// Change in every encoder analysis after a hidden-state intervention, over
/// the sentences of `subset`.
pub fn inlp_attention_delta(
    corpus: &CorpusSet,
    labels: Option<&LabelSet>,
    subset: Subset,
    normal: &BTreeMap<String, ActivationDump>,
    projected: &BTreeMap<String, ActivationDump>,
    options: ProfileOptions,
) -> Result<Vec<DeltaRow>> {
    for (id, d) in normal {
        if d.variant != Variant::Normal {
            return Err(Error::Consistency(format!(
                "dump `{id}` in the normal set is {:?}",
                d.variant
            )));
        }
        match projected.get(id) {
            None => return Err(Error::Consistency(format!("no projected dump for `{id}`"))),
            Some(p) if !matches!(p.variant, Variant::Projected { .. }) => {
                return Err(Error::Consistency(format!(
                    "dump `{id}` in the projected set is {:?}",
                    p.variant
                )))
            }
            _ => {}
        }
    }
    let mut rows = Vec::new();
    for analysis in Analysis::ENCODER {
        let before = collect_profile(
            &ProfileInputs {
                corpus,
                dumps: normal,
                labels,
                alignments: None,
                options,
            },
            analysis,
            subset,
        )?;
        let after = collect_profile(
            &ProfileInputs {
                corpus,
                dumps: projected,
                labels,
                alignments: None,
                options,
            },
            analysis,
            subset,
        )?;
        if before.sentence_ids != after.sentence_ids {
            return Err(Error::Consistency(format!(
                "{analysis}: normal and projected dumps cover different sentences"
            )));
        }
        for (l, (b, a)) in before.layers.iter().zip(&after.layers).enumerate() {
            let (normal, projected) = (mean(b), mean(a));
            rows.push(DeltaRow {
                analysis,
                layer: l,
                normal,
                projected,
                delta: projected - normal,
                n: b.len(),
            });
        }
    }
    Ok(rows)
}
