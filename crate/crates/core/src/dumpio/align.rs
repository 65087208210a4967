//! Word alignments in Pharaoh `i-j` format, one line per sentence in corpus order.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use crate::corpus::CorpusSet;
use crate::error::{Error, Result};
use crate::labeler::TranslationSet;

/// Fig-par sentences without an aligned keyword above this fraction trigger a warning.
pub const MAX_UNALIGNED_FRACTION: f64 = 0.34;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    lines: Vec<BTreeSet<(usize, usize)>>,
}

impl AlignmentSet {
    pub fn from_lines(lines: Vec<BTreeSet<(usize, usize)>>) -> Self {
        AlignmentSet { lines }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line(&self, i: usize) -> Option<&BTreeSet<(usize, usize)>> {
        self.lines.get(i)
    }

    /// Pairs for a sentence, resolved by its position in `corpus`.
    pub fn for_sentence<'a>(&'a self, corpus: &CorpusSet, id: &str) -> Option<&'a BTreeSet<(usize, usize)>> {
        corpus.iter().position(|s| s.id == id).and_then(|i| self.lines.get(i))
    }

    /// Bounds check against source words and, when given, target words.
    pub fn validate(&self, corpus: &CorpusSet, translations: Option<&TranslationSet>) -> Result<()> {
        if self.lines.len() != corpus.len() {
            return Err(Error::Consistency(format!(
                "{} alignment lines for {} sentences",
                self.lines.len(),
                corpus.len()
            )));
        }
        for (i, (pairs, s)) in self.lines.iter().zip(corpus.iter()).enumerate() {
            let tgt_len = translations.and_then(|t| t.get(&s.id)).map(|t| t.target_tokens.len());
            for &(src, tgt) in pairs {
                let out_of_range = src >= s.tokens.len() || tgt_len.is_some_and(|n| tgt >= n);
                if out_of_range {
                    return Err(Error::Validation {
                        record: s.id.clone(),
                        field: "alignment",
                        message: format!("pair {src}-{tgt} out of bounds on line {}", i + 1),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn read_alignments(reader: impl BufRead) -> Result<AlignmentSet> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let mut pairs = BTreeSet::new();
        for tok in line.split_whitespace() {
            let parsed = tok
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
            match parsed {
                Some(p) => {
                    pairs.insert(p);
                }
                None => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("malformed alignment pair `{tok}`"),
                    })
                }
            }
        }
        lines.push(pairs);
    }
    Ok(AlignmentSet { lines })
}

pub fn load_alignments(path: impl AsRef<Path>) -> Result<AlignmentSet> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_alignments(std::io::BufReader::new(f))
}

/// Leftmost target word aligned to `keyword`, if any.
pub fn aligned_target_token(pairs: &BTreeSet<(usize, usize)>, keyword: usize) -> Option<usize> {
    pairs
        .range((keyword, 0)..=(keyword, usize::MAX))
        .map(|&(_, t)| t)
        .next()
}
