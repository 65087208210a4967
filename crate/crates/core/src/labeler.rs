//! Heuristic copy / word-for-word / paraphrase labels for idiom translations.
//!
//! A translation is word-for-word when a literal translation of one of the
//! idiom's keywords shows up in it, a copy when the keyword itself does, and
//! a paraphrase otherwise. Copies are merged into word-for-word for the
//! two-way label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSet, GoldLabel, PieSentence};
use crate::error::{Error, Result};
use crate::metrics::{bleu, macro_f1, pearson_r, BleuConfig};

/// Lexicon entries shorter than this only match whole tokens.
pub const MIN_SUBSTRING_MATCH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label3 {
    Copy,
    WordForWord,
    Paraphrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label2 {
    WordForWord,
    Paraphrase,
}

impl From<Label3> for Label2 {
    fn from(l: Label3) -> Self {
        match l {
            Label3::Copy | Label3::WordForWord => Label2::WordForWord,
            Label3::Paraphrase => Label2::Paraphrase,
        }
    }
}

impl fmt::Display for Label2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label2::WordForWord => "word_for_word",
            Label2::Paraphrase => "paraphrase",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationLabel {
    pub sentence_id: String,
    pub label3: Label3,
    pub label2: Label2,
    pub matched_keyword: Option<String>,
    pub matched_target: Option<String>,
}

impl TranslationLabel {
    pub fn new(
        sentence_id: impl Into<String>,
        label3: Label3,
        matched_keyword: Option<String>,
        matched_target: Option<String>,
    ) -> Self {
        TranslationLabel {
            sentence_id: sentence_id.into(),
            label3,
            label2: label3.into(),
            matched_keyword,
            matched_target,
        }
    }
}

/// Labels keyed by sentence id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet(BTreeMap<String, TranslationLabel>);

impl LabelSet {
    pub fn get(&self, id: &str) -> Option<&TranslationLabel> {
        self.0.get(id)
    }

    pub fn insert(&mut self, label: TranslationLabel) -> Option<TranslationLabel> {
        self.0.insert(label.sentence_id.clone(), label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TranslationLabel> {
        self.0.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn write_jsonl(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for l in self.0.values() {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl FromIterator<TranslationLabel> for LabelSet {
    fn from_iter<I: IntoIterator<Item = TranslationLabel>>(iter: I) -> Self {
        LabelSet(iter.into_iter().map(|l| (l.sentence_id.clone(), l)).collect())
    }
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufReader::new(f))
}

pub fn read_labels(reader: impl BufRead) -> Result<LabelSet> {
    let mut set = LabelSet::default();
    for l in parse_jsonl::<TranslationLabel>(reader)? {
        if Label2::from(l.label3) != l.label2 {
            return Err(Error::Validation {
                record: l.sentence_id,
                field: "label2",
                message: "label2 disagrees with label3".into(),
            });
        }
        if let Some(prev) = set.insert(l) {
            return Err(Error::DuplicateId(prev.sentence_id));
        }
    }
    Ok(set)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    read_labels(open(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Model,
    ReferenceCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub sentence_id: String,
    #[serde(default)]
    pub target_tokens: Vec<String>,
    /// Detokenized string; split on whitespace when `target_tokens` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl TranslationRecord {
    pub fn new(sentence_id: impl Into<String>, text: &str) -> Self {
        TranslationRecord {
            sentence_id: sentence_id.into(),
            target_tokens: text.split_whitespace().map(str::to_string).collect(),
            target: None,
            provenance: Provenance::Model,
        }
    }

    pub fn text(&self) -> String {
        self.target_tokens.join(" ")
    }
}

/// Translations keyed by sentence id.
pub type TranslationSet = BTreeMap<String, TranslationRecord>;

pub fn read_translations(reader: impl BufRead) -> Result<TranslationSet> {
    let mut out = TranslationSet::new();
    for mut t in parse_jsonl::<TranslationRecord>(reader)? {
        if t.target_tokens.is_empty() {
            if let Some(text) = &t.target {
                t.target_tokens = text.split_whitespace().map(str::to_string).collect();
            }
        }
        if t.target_tokens.is_empty() {
            return Err(Error::Validation {
                record: t.sentence_id,
                field: "target_tokens",
                message: "empty translation".into(),
            });
        }
        if out.contains_key(&t.sentence_id) {
            return Err(Error::DuplicateId(t.sentence_id));
        }
        out.insert(t.sentence_id.clone(), t);
    }
    Ok(out)
}

pub fn load_translations(path: impl AsRef<Path>) -> Result<TranslationSet> {
    read_translations(open(path.as_ref())?)
}

/// Lowercase and trim surrounding punctuation.
pub fn casefold_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Keyword → literal translations, all casefolded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiteralLexicon {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl LiteralLexicon {
    pub fn insert(&mut self, keyword: &str, literal: &str) -> Result<()> {
        let k = casefold_word(keyword);
        let l = literal.trim().to_lowercase();
        if k.is_empty() || l.is_empty() {
            return Err(Error::Input(format!(
                "empty lexicon entry ({keyword:?} -> {literal:?})"
            )));
        }
        self.entries.entry(k).or_default().insert(l);
        Ok(())
    }

    pub fn literals(&self, keyword: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(keyword)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// TSV: keyword, then one or more literal translations.
pub fn read_lexicon(reader: impl BufRead) -> Result<LiteralLexicon> {
    let mut lex = LiteralLexicon::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let keyword = cols.next().unwrap_or_default();
        let literals: Vec<&str> = cols.filter(|c| !c.trim().is_empty()).collect();
        if literals.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("keyword `{keyword}` has no literal translations"),
            });
        }
        for l in literals {
            lex.insert(keyword, l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
    }
    Ok(lex)
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<LiteralLexicon> {
    read_lexicon(open(path.as_ref())?)
}

fn entry_matches(entry: &str, token: &str) -> bool {
    token == entry || (entry.chars().count() >= MIN_SUBSTRING_MATCH && token.contains(entry))
}

pub fn label_translation(
    sentence: &PieSentence,
    translation: &TranslationRecord,
    lexicon: &LiteralLexicon,
) -> Result<TranslationLabel> {
    if sentence.keyword_indices.is_empty() {
        return Err(Error::Input(format!("sentence `{}` has no keywords", sentence.id)));
    }
    let keywords: Vec<String> = sentence
        .keyword_indices
        .iter()
        .map(|&i| casefold_word(&sentence.tokens[i]))
        .collect();
    let targets: Vec<String> = translation
        .target_tokens
        .iter()
        .map(|t| casefold_word(t))
        .filter(|t| !t.is_empty())
        .collect();

    for t in &targets {
        for k in &keywords {
            if let Some(lits) = lexicon.literals(k) {
                if lits.iter().any(|l| entry_matches(l, t)) {
                    return Ok(TranslationLabel::new(
                        &sentence.id,
                        Label3::WordForWord,
                        Some(k.clone()),
                        Some(t.clone()),
                    ));
                }
            }
        }
    }
    for t in &targets {
        if let Some(k) = keywords.iter().find(|k| entry_matches(k, t)) {
            return Ok(TranslationLabel::new(
                &sentence.id,
                Label3::Copy,
                Some(k.clone()),
                Some(t.clone()),
            ));
        }
    }
    Ok(TranslationLabel::new(&sentence.id, Label3::Paraphrase, None, None))
}

/// Label every translation; sentences without a translation are skipped.
pub fn label_corpus(corpus: &CorpusSet, translations: &TranslationSet, lexicon: &LiteralLexicon) -> Result<LabelSet> {
    let mut out = LabelSet::default();
    for t in translations.values() {
        let s = corpus
            .get(&t.sentence_id)
            .ok_or_else(|| Error::Consistency(format!("translation for unknown sentence `{}`", t.sentence_id)))?;
        out.insert(label_translation(s, t, lexicon)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub gold_label: GoldLabel,
    pub n: usize,
    pub paraphrase_pct: f64,
    pub word_for_word_pct: f64,
    pub copy_pct: f64,
}

/// Percentage of paraphrase / word-for-word labels within each gold category.
pub fn label_distribution(labels: &LabelSet, corpus: &CorpusSet) -> Result<Vec<DistributionRow>> {
    let mut counts: BTreeMap<GoldLabel, [usize; 3]> = BTreeMap::new();
    for l in labels.iter() {
        let s = corpus
            .get(&l.sentence_id)
            .ok_or_else(|| Error::Consistency(format!("label for unknown sentence `{}`", l.sentence_id)))?;
        let c = counts.entry(s.gold_label).or_default();
        match l.label3 {
            Label3::Paraphrase => c[0] += 1,
            Label3::WordForWord => c[1] += 1,
            Label3::Copy => c[2] += 1,
        }
    }
    Ok(counts
        .into_iter()
        .map(|(gold, [par, wfw, copy])| {
            let n = par + wfw + copy;
            let pct = |x: usize| 100.0 * x as f64 / n as f64;
            DistributionRow {
                gold_label: gold,
                n,
                paraphrase_pct: pct(par),
                word_for_word_pct: pct(wfw + copy),
                copy_pct: pct(copy),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementEntry {
    pub target: String,
    pub prediction: String,
    pub macro_f1: f64,
    pub n: usize,
    pub genetic_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub entries: Vec<AgreementEntry>,
    /// Correlation between pairwise F1 and genetic similarity, when defined.
    pub pearson_r: Option<f64>,
}

/// Symmetric language-pair similarity lookup.
#[derive(Debug, Clone, Default)]
pub struct GeneticSimilarity(BTreeMap<(String, String), f64>);

impl GeneticSimilarity {
    pub fn insert(&mut self, a: &str, b: &str, sim: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&sim) {
            return Err(Error::Input(format!("similarity {sim} for {a}-{b} outside [0, 1]")));
        }
        let key = if a <= b {
            (a.into(), b.into())
        } else {
            (b.into(), a.into())
        };
        self.0.insert(key, sim);
        Ok(())
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let key = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.0.get(&key).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn read_genetic_similarity(reader: impl BufRead) -> Result<GeneticSimilarity> {
    let mut out = GeneticSimilarity::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
        }
        let sim: f64 = cols[2]
            .parse()
            .map_err(|_| parse_err(format!("bad similarity `{}`", cols[2])))?;
        out.insert(cols[0], cols[1], sim)
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(out)
}

/// Pairwise macro-F1 over figurative sentences, `a` as target and `b` as prediction.
pub fn agreement_matrix(
    labels_by_language: &BTreeMap<String, LabelSet>,
    corpus: &CorpusSet,
    genetic_sim: &GeneticSimilarity,
) -> Result<AgreementReport> {
    if labels_by_language.len() < 2 {
        return Err(Error::Input("agreement needs at least two languages".into()));
    }
    let mut entries = Vec::new();
    for (a, la) in labels_by_language {
        for (b, lb) in labels_by_language {
            if a == b {
                continue;
            }
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for l in la.iter() {
                let fig = corpus
                    .get(&l.sentence_id)
                    .is_some_and(|s| s.gold_label == GoldLabel::Figurative);
                if let (true, Some(other)) = (fig, lb.get(&l.sentence_id)) {
                    gold.push(l.label2);
                    pred.push(other.label2);
                }
            }
            if gold.is_empty() {
                return Err(Error::Consistency(format!(
                    "languages `{a}` and `{b}` share no figurative sentences"
                )));
            }
            let sim = genetic_sim.get(a, b);
            if sim.is_none() && !genetic_sim.is_empty() {
                return Err(Error::MissingInput(format!("no genetic similarity for {a}-{b}")));
            }
            entries.push(AgreementEntry {
                target: a.clone(),
                prediction: b.clone(),
                macro_f1: macro_f1(&pred, &gold)?,
                n: gold.len(),
                genetic_similarity: sim,
            });
        }
    }
    let pearson = if genetic_sim.is_empty() {
        None
    } else {
        let f1: Vec<f64> = entries.iter().map(|e| e.macro_f1).collect();
        let sim: Vec<f64> = entries.iter().filter_map(|e| e.genetic_similarity).collect();
        pearson_r(&f1, &sim).ok()
    };
    Ok(AgreementReport {
        entries,
        pearson_r: pearson,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosstabCell {
    pub reference: Label2,
    pub model: Label2,
    pub n: usize,
    /// Share of the reference row, in percent.
    pub row_pct: f64,
    pub bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosstab {
    /// Reference label → share of all records, in percent.
    pub reference_share: Vec<(Label2, f64)>,
    pub cells: Vec<CrosstabCell>,
}

/// Cross-tabulate model labels against labels of reference translations,
/// with BLEU of model output against the reference per cell.
pub fn crosstab_with_reference(
    model_labels: &LabelSet,
    reference_labels: &LabelSet,
    model_translations: &TranslationSet,
    reference_translations: &TranslationSet,
) -> Result<Crosstab> {
    if !model_labels.ids().eq(reference_labels.ids()) {
        return Err(Error::Consistency(
            "model and reference label sets cover different sentence ids".into(),
        ));
    }
    const ORDER: [Label2; 2] = [Label2::Paraphrase, Label2::WordForWord];
    let mut buckets: BTreeMap<(Label2, Label2), (Vec<String>, Vec<String>)> = BTreeMap::new();
    for m in model_labels.iter() {
        let r = reference_labels.get(&m.sentence_id).expect("ids checked");
        let lookup = |set: &TranslationSet, side: &str| {
            set.get(&m.sentence_id)
                .map(|t| t.text())
                .ok_or_else(|| Error::Consistency(format!("no {side} translation for `{}`", m.sentence_id)))
        };
        let cand = lookup(model_translations, "model")?;
        let refr = lookup(reference_translations, "reference")?;
        let b = buckets.entry((r.label2, m.label2)).or_default();
        b.0.push(cand);
        b.1.push(refr);
    }
    let total = model_labels.len();
    let mut reference_share = Vec::new();
    let mut cells = Vec::new();
    for r in ORDER {
        let row_n: usize = ORDER
            .iter()
            .map(|m| buckets.get(&(r, *m)).map_or(0, |b| b.0.len()))
            .sum();
        reference_share.push((
            r,
            if total > 0 {
                100.0 * row_n as f64 / total as f64
            } else {
                0.0
            },
        ));
        for m in ORDER {
            let (n, bleu_score) = match buckets.get(&(r, m)) {
                Some((c, refs)) => (c.len(), Some(bleu(c, refs, &BleuConfig::default())?)),
                None => (0, None),
            };
            cells.push(CrosstabCell {
                reference: r,
                model: m,
                n,
                row_pct: if row_n > 0 {
                    100.0 * n as f64 / row_n as f64
                } else {
                    0.0
                },
                bleu: bleu_score,
            });
        }
    }
    Ok(Crosstab { reference_share, cells })
}

impl FromStr for Label2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word_for_word" | "wfw" => Ok(Label2::WordForWord),
            "paraphrase" | "par" => Ok(Label2::Paraphrase),
            other => Err(Error::Input(format!("unknown label `{other}`"))),
        }
    }
}
