//! Converter from MAGPIE's JSON-lines release to [`PieSentence`] records.
//!
//! MAGPIE stores the target sentence as `context[2]` and the PIE as character
//! offsets into it. Words are whitespace tokens. Keywords and context nouns
//! are not tagged here; they come from a per-idiom keyword table and an
//! optional noun list.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::Deserialize;

use super::{CorpusSet, GoldLabel, PieSentence};
use crate::error::{Error, Result};
use crate::labeler::casefold_word;

#[derive(Debug, Deserialize)]
struct MagpieRecord {
    id: serde_json::Value,
    idiom: String,
    label: String,
    #[serde(default = "one")]
    confidence: f64,
    context: Vec<String>,
    offsets: Vec<[usize; 2]>,
    #[serde(default)]
    variant_type: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    /// Idiom → casefolded keyword words.
    pub keywords: HashMap<String, Vec<String>>,
    /// Casefolded nouns used to tag context nouns.
    pub nouns: HashSet<String>,
    pub min_confidence: f64,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ConvertReport {
    pub kept: usize,
    /// Skip reasons with counts.
    pub skipped: BTreeMap<&'static str, usize>,
}

/// Parse a keyword table: `idiom<TAB>keyword<TAB>keyword...`.
pub fn read_keyword_table(reader: impl BufRead) -> Result<HashMap<String, Vec<String>>> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let idiom = cols.next().unwrap_or_default().trim().to_string();
        let kws: Vec<String> = cols.map(casefold_word).filter(|k| !k.is_empty()).collect();
        if kws.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("idiom `{idiom}` has no keywords"),
            });
        }
        out.insert(idiom, kws);
    }
    Ok(out)
}

fn keyword_matches(word: &str, keyword: &str) -> bool {
    word == keyword || (keyword.chars().count() >= 4 && word.starts_with(keyword))
}

pub fn convert_magpie(reader: impl BufRead, opts: &ConvertOptions) -> Result<(CorpusSet, ConvertReport)> {
    let mut report = ConvertReport::default();
    let mut out = Vec::new();
    let mut skip = |reason: &'static str| *report.skipped.entry(reason).or_insert(0) += 1;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MagpieRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let gold = match rec.label.as_str() {
            "i" => GoldLabel::Figurative,
            "l" => GoldLabel::Literal,
            _ => {
                skip("label not figurative/literal");
                continue;
            }
        };
        if rec.confidence < opts.min_confidence {
            skip("below confidence threshold");
            continue;
        }
        let Some(text) = rec.context.get(2) else {
            skip("missing target sentence");
            continue;
        };
        let Some(keywords) = opts.keywords.get(&rec.idiom) else {
            skip("idiom without keywords");
            continue;
        };

        // word spans in characters
        let mut spans = Vec::new();
        let mut start = None;
        for (ci, ch) in text.chars().enumerate() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(ci),
                (true, Some(s)) => {
                    spans.push((s, ci));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push((s, text.chars().count()));
        }
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let mut pie: Vec<usize> = spans
            .iter()
            .enumerate()
            .filter(|(_, &(ws, we))| rec.offsets.iter().any(|&[os, oe]| ws < oe && os < we))
            .map(|(i, _)| i)
            .collect();
        pie.dedup();
        if pie.is_empty() {
            skip("offsets do not cover any word");
            continue;
        }
        let folded: Vec<String> = tokens.iter().map(|t| casefold_word(t)).collect();
        let keyword_indices: Vec<usize> = pie
            .iter()
            .copied()
            .filter(|&i| keywords.iter().any(|k| keyword_matches(&folded[i], k)))
            .collect();
        if keyword_indices.is_empty() {
            skip("no keyword found in PIE");
            continue;
        }
        let context_noun_indices: Vec<usize> = (0..tokens.len())
            .filter(|i| !pie.contains(i) && opts.nouns.contains(&folded[*i]))
            .collect();
        let id = match &rec.id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.push(PieSentence {
            id,
            tokens,
            pie_word_indices: pie,
            keyword_indices,
            context_noun_indices,
            gold_label: gold,
            idiom_id: rec.idiom.clone(),
            identical_match: rec.variant_type.as_deref() == Some("identical"),
        });
        report.kept += 1;
    }
    Ok((CorpusSet::new(out)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_offsets_to_word_indices() {
        let line = r#"{"id": 7, "idiom": "at your fingertips", "label": "i", "confidence": 1.0, "context": ["", "", "The wonders are at your fingertips .", "", ""], "offsets": [[16, 18], [19, 23], [24, 34]], "variant_type": "identical"}"#;
        let opts = ConvertOptions {
            keywords: [("at your fingertips".to_string(), vec!["fingertips".to_string()])].into(),
            nouns: ["wonders".to_string()].into(),
            min_confidence: 1.0,
        };
        let (c, report) = convert_magpie(line.as_bytes(), &opts).unwrap();
        assert_eq!(report.kept, 1);
        let s = &c.sentences()[0];
        assert_eq!(s.id, "7");
        assert_eq!(s.pie_word_indices, vec![3, 4, 5]);
        assert_eq!(s.keyword_indices, vec![5]);
        assert_eq!(s.context_noun_indices, vec![1]);
        assert!(s.identical_match);
        assert_eq!(s.gold_label, GoldLabel::Figurative);
    }

    #[test]
    fn skips_other_labels_and_unknown_idioms() {
        let lines = concat!(
            r#"{"id": 1, "idiom": "x", "label": "o", "context": ["","","a b",""], "offsets": [[0,1]]}"#,
            "\n",
            r#"{"id": 2, "idiom": "y", "label": "l", "context": ["","","a b",""], "offsets": [[0,1]]}"#,
        );
        let opts = ConvertOptions {
            keywords: HashMap::new(),
            nouns: HashSet::new(),
            min_confidence: 1.0,
        };
        let (c, report) = convert_magpie(lines.as_bytes(), &opts).unwrap();
        assert!(c.is_empty());
        assert_eq!(report.skipped.values().sum::<usize>(), 2);
    }
}
