//! PIE-annotated corpora: loading, validation, control subsets and length statistics.
//!
//! The canonical on-disk format is JSON-lines with one [`PieSentence`] per
//! line. [`magpie`] converts MAGPIE's native records into that format.

pub mod magpie;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::{Label2, LabelSet};

/// Words on each side of the PIE span that count as its context.
pub const CONTEXT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLabel {
    Figurative,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub pie_word_indices: Vec<usize>,
    pub keyword_indices: Vec<usize>,
    pub context_noun_indices: Vec<usize>,
    pub gold_label: GoldLabel,
    pub idiom_id: String,
    pub identical_match: bool,
}

impl PieSentence {
    pub fn validate(&self) -> Result<()> {
        let err = |field, message: String| Error::Validation {
            record: self.id.clone(),
            field,
            message,
        };
        if self.id.is_empty() {
            return Err(err("id", "empty id".into()));
        }
        if self.tokens.is_empty() {
            return Err(err("tokens", "sentence has no tokens".into()));
        }
        let n = self.tokens.len();
        check_ordered(&self.pie_word_indices, n).map_err(|m| err("pie_word_indices", m))?;
        if self.pie_word_indices.is_empty() {
            return Err(err("pie_word_indices", "PIE span is empty".into()));
        }
        check_ordered(&self.keyword_indices, n).map_err(|m| err("keyword_indices", m))?;
        check_ordered(&self.context_noun_indices, n).map_err(|m| err("context_noun_indices", m))?;
        if let Some(k) = self.keyword_indices.iter().find(|k| !self.pie_word_indices.contains(k)) {
            return Err(err(
                "keyword_indices",
                format!("keyword index {k} is not part of the PIE"),
            ));
        }
        if let Some(c) = self
            .context_noun_indices
            .iter()
            .find(|c| self.pie_word_indices.contains(c))
        {
            return Err(err(
                "context_noun_indices",
                format!("context noun index {c} lies inside the PIE"),
            ));
        }
        Ok(())
    }

    pub fn first_pie(&self) -> usize {
        self.pie_word_indices[0]
    }

    pub fn last_pie(&self) -> usize {
        *self.pie_word_indices.last().expect("validated non-empty PIE")
    }

    /// Distance between first and last PIE word; adjacent words are 1 apart.
    pub fn span_distance(&self) -> usize {
        self.last_pie() - self.first_pie()
    }

    pub fn is_pie(&self, word: usize) -> bool {
        self.pie_word_indices.binary_search(&word).is_ok()
    }

    /// Inclusive word range of the context window, clamped to the sentence.
    pub fn context_window(&self) -> (usize, usize) {
        let lo = self.first_pie().saturating_sub(CONTEXT_WINDOW);
        let hi = (self.last_pie() + CONTEXT_WINDOW).min(self.tokens.len() - 1);
        (lo, hi)
    }

    /// Context nouns that fall inside the window around the PIE.
    pub fn context_nouns_in_window(&self) -> Vec<usize> {
        let (lo, hi) = self.context_window();
        self.context_noun_indices
            .iter()
            .copied()
            .filter(|&c| c >= lo && c <= hi)
            .collect()
    }

    /// Every non-PIE word inside the context window.
    pub fn context_words_in_window(&self) -> Vec<usize> {
        let (lo, hi) = self.context_window();
        (lo..=hi).filter(|&w| !self.is_pie(w)).collect()
    }
}

fn check_ordered(indices: &[usize], len: usize) -> std::result::Result<(), String> {
    for w in indices.windows(2) {
        if w[0] >= w[1] {
            return Err(format!(
                "indices must be strictly increasing, found {} then {}",
                w[0], w[1]
            ));
        }
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= len) {
        return Err(format!("index {i} out of bounds for {len} tokens"));
    }
    Ok(())
}

/// A validated corpus with unique sentence ids, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSet {
    sentences: Vec<PieSentence>,
    index: HashMap<String, usize>,
}

impl CorpusSet {
    pub fn new(sentences: Vec<PieSentence>) -> Result<Self> {
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            s.validate()?;
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(CorpusSet { sentences, index })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[PieSentence] {
        &self.sentences
    }

    pub fn iter(&self) -> impl Iterator<Item = &PieSentence> {
        self.sentences.iter()
    }

    pub fn get(&self, id: &str) -> Option<&PieSentence> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn retain(&self, keep: impl Fn(&PieSentence) -> bool) -> CorpusSet {
        let kept: Vec<PieSentence> = self.sentences.iter().filter(|s| keep(s)).cloned().collect();
        let index = kept.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        CorpusSet { sentences: kept, index }
    }

    /// Sentences in a gold/translation category; `None` labels only work for `fig`/`lit`.
    pub fn select(&self, subset: Subset, labels: Option<&LabelSet>) -> Result<CorpusSet> {
        if subset.needs_labels() && labels.is_none() {
            return Err(Error::MissingInput(format!(
                "subset `{subset}` requires translation labels"
            )));
        }
        Ok(self.retain(|s| subset.contains(s, labels)))
    }

    pub fn write_jsonl(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for s in &self.sentences {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(file))
}

pub fn read_corpus(reader: impl BufRead) -> Result<CorpusSet> {
    let mut sentences = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let s: PieSentence = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        sentences.push(s);
    }
    CorpusSet::new(sentences)
}

/// Gold-label and translation-label categories of the analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subset {
    All,
    Fig,
    Lit,
    FigPar,
    FigWfw,
    LitPar,
    LitWfw,
}

impl Subset {
    pub const ANALYSIS: [Subset; 4] = [Subset::Fig, Subset::Lit, Subset::FigPar, Subset::LitWfw];

    pub fn needs_labels(self) -> bool {
        matches!(self, Subset::FigPar | Subset::FigWfw | Subset::LitPar | Subset::LitWfw)
    }

    pub fn contains(self, s: &PieSentence, labels: Option<&LabelSet>) -> bool {
        let gold = s.gold_label;
        let label = || labels.and_then(|l| l.get(&s.id)).map(|l| l.label2);
        match self {
            Subset::All => true,
            Subset::Fig => gold == GoldLabel::Figurative,
            Subset::Lit => gold == GoldLabel::Literal,
            Subset::FigPar => gold == GoldLabel::Figurative && label() == Some(Label2::Paraphrase),
            Subset::FigWfw => gold == GoldLabel::Figurative && label() == Some(Label2::WordForWord),
            Subset::LitPar => gold == GoldLabel::Literal && label() == Some(Label2::Paraphrase),
            Subset::LitWfw => gold == GoldLabel::Literal && label() == Some(Label2::WordForWord),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::All => "all",
            Subset::Fig => "fig",
            Subset::Lit => "lit",
            Subset::FigPar => "fig-par",
            Subset::FigWfw => "fig-wfw",
            Subset::LitPar => "lit-par",
            Subset::LitWfw => "lit-wfw",
        })
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Subset::All,
            "fig" => Subset::Fig,
            "lit" => Subset::Lit,
            "fig-par" => Subset::FigPar,
            "fig-wfw" => Subset::FigWfw,
            "lit-par" => Subset::LitPar,
            "lit-wfw" => Subset::LitWfw,
            other => return Err(Error::Input(format!("unknown subset `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubsetFilter {
    All,
    /// PIE surface form identical to the dictionary form.
    Identical,
    /// Idioms attested in all of fig-par, fig-wfw, lit-par and lit-wfw.
    Intersection,
    /// Exactly three PIE words whose first and last are three positions apart.
    LengthControlled,
}

impl FromStr for SubsetFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => SubsetFilter::All,
            "identical" => SubsetFilter::Identical,
            "intersection" => SubsetFilter::Intersection,
            "length-controlled" | "length_controlled" => SubsetFilter::LengthControlled,
            other => return Err(Error::Input(format!("unknown subset filter `{other}`"))),
        })
    }
}

pub fn filter_subset(corpus: &CorpusSet, filter: SubsetFilter, labels: Option<&LabelSet>) -> Result<CorpusSet> {
    match filter {
        SubsetFilter::All => Ok(corpus.clone()),
        SubsetFilter::Identical => Ok(corpus.retain(|s| s.identical_match)),
        SubsetFilter::LengthControlled => {
            Ok(corpus.retain(|s| s.pie_word_indices.len() == 3 && s.span_distance() == 3))
        }
        SubsetFilter::Intersection => {
            let labels =
                labels.ok_or_else(|| Error::MissingInput("intersection filter requires translation labels".into()))?;
            const CELLS: [Subset; 4] = [Subset::FigPar, Subset::FigWfw, Subset::LitPar, Subset::LitWfw];
            let mut seen: HashMap<&str, BTreeSet<Subset>> = HashMap::new();
            for s in corpus.iter() {
                if let Some(cell) = CELLS.iter().find(|c| c.contains(s, Some(labels))) {
                    seen.entry(s.idiom_id.as_str()).or_default().insert(*cell);
                }
            }
            Ok(corpus.retain(|s| seen.get(s.idiom_id.as_str()).is_some_and(|c| c.len() == CELLS.len())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthStats {
    pub n: usize,
    pub avg_pie_tokens: f64,
    pub avg_span_distance: f64,
    pub avg_relative_position: f64,
    pub avg_context_length: f64,
}

/// Length statistics over one category. Relative position is the mean PIE
/// word position divided by sentence length.
pub fn length_stats(corpus: &CorpusSet, category: Subset, labels: Option<&LabelSet>) -> Result<LengthStats> {
    let selection = corpus.select(category, labels)?;
    if selection.is_empty() {
        return Err(Error::EmptySet(format!("no sentences in category `{category}`")));
    }
    let n = selection.len() as f64;
    let mut acc = [0.0f64; 4];
    for s in selection.iter() {
        let pie = &s.pie_word_indices;
        let mean_pos = pie.iter().sum::<usize>() as f64 / pie.len() as f64;
        let (lo, hi) = s.context_window();
        acc[0] += pie.len() as f64;
        acc[1] += s.span_distance() as f64;
        acc[2] += mean_pos / s.tokens.len() as f64;
        acc[3] += (hi - lo) as f64;
    }
    Ok(LengthStats {
        n: selection.len(),
        avg_pie_tokens: acc[0] / n,
        avg_span_distance: acc[1] / n,
        avg_relative_position: acc[2] / n,
        avg_context_length: acc[3] / n,
    })
}

/// Per-idiom sentence counts, sorted by idiom id.
pub fn idiom_counts(corpus: &CorpusSet) -> BTreeMap<&str, usize> {
    let mut out = BTreeMap::new();
    for s in corpus.iter() {
        *out.entry(s.idiom_id.as_str()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn sentence(id: &str, n_tokens: usize, pie: &[usize], gold: GoldLabel, idiom: &str) -> PieSentence {
        PieSentence {
            id: id.into(),
            tokens: (0..n_tokens).map(|i| format!("w{i}")).collect(),
            pie_word_indices: pie.to_vec(),
            keyword_indices: vec![pie[pie.len() - 1]],
            context_noun_indices: vec![],
            gold_label: gold,
            idiom_id: idiom.into(),
            identical_match: false,
        }
    }
}
