//! Word-frequency baseline labels from zipf frequencies of PIE tokens.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use crate::corpus::{CorpusSet, PieSentence};
use crate::error::{Error, Result};
use crate::labeler::casefold_word;

pub const DEFAULT_MISSING_ZIPF: f64 = 1.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    zipf: HashMap<String, f64>,
    pub missing: f64,
}

impl FrequencyTable {
    pub fn new(missing: f64) -> Self {
        FrequencyTable {
            zipf: HashMap::new(),
            missing,
        }
    }

    pub fn insert(&mut self, token: &str, z: f64) -> Result<()> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Input(format!(
                "zipf frequency of `{token}` must be positive, got {z}"
            )));
        }
        self.zipf.insert(casefold_word(token), z);
        Ok(())
    }

    pub fn get(&self, token: &str) -> f64 {
        self.zipf.get(&casefold_word(token)).copied().unwrap_or(self.missing)
    }

    pub fn len(&self) -> usize {
        self.zipf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zipf.is_empty()
    }
}

/// Tab-separated `token<TAB>zipf` lines.
pub fn read_frequency_table(reader: impl BufRead, missing: f64) -> Result<FrequencyTable> {
    let mut t = FrequencyTable::new(missing);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(tok), Some(z)) = (cols.next(), cols.next()) else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `token<TAB>zipf`".into(),
            });
        };
        let z: f64 = z.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad zipf value `{z}`"),
        })?;
        t.insert(tok, z).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(t)
}

pub fn load_frequency_table(path: impl AsRef<Path>, missing: f64) -> Result<FrequencyTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_frequency_table(std::io::BufReader::new(f), missing)
}

/// Half the harmonic mean of the tokens' zipf frequencies.
pub fn frequency_feature<S: AsRef<str>>(tokens: &[S], table: &FrequencyTable) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Input("no PIE tokens".into()));
    }
    let inv: f64 = tokens.iter().map(|t| 1.0 / table.get(t.as_ref())).sum();
    Ok(0.5 * tokens.len() as f64 / inv)
}

pub fn sentence_frequency(s: &PieSentence, table: &FrequencyTable) -> Result<f64> {
    let tokens: Vec<&str> = s.pie_word_indices.iter().map(|&i| s.tokens[i].as_str()).collect();
    frequency_feature(&tokens, table)
}

/// `true` when a sentence's feature is at or above the corpus mean.
pub fn frequency_baseline_labels(corpus: &CorpusSet, table: &FrequencyTable) -> Result<BTreeMap<String, bool>> {
    let feats: Vec<(String, f64)> = corpus
        .iter()
        .map(|s| Ok((s.id.clone(), sentence_frequency(s, table)?)))
        .collect::<Result<_>>()?;
    if feats.is_empty() {
        return Err(Error::EmptySet("empty corpus".into()));
    }
    let mean = feats.iter().map(|(_, h)| h).sum::<f64>() / feats.len() as f64;
    Ok(feats.into_iter().map(|(id, h)| (id, h >= mean)).collect())
}
