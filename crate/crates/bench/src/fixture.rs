//! A small on-disk workspace with every input the command-line tool reads:
//! corpus, raw MAGPIE lines, translations in three languages, lexicons,
//! alignments, normal/masked/projected dumps, and sweep outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use idiolens_core::corpus::{CorpusSet, GoldLabel, PieSentence};
use idiolens_core::dumpio::{ActivationDump, DumpStore, Tensor, Variant};
use idiolens_core::labeler::{Provenance, TranslationRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::softmax_rows;

pub const LANGUAGES: [&str; 3] = ["nl", "de", "it"];
pub const LAYERS: usize = 3;
pub const HEADS: usize = 2;
pub const HIDDEN: usize = 8;

struct Idiom {
    words: &'static [&'static str],
    keyword: usize,
    literal: [&'static str; 3],
}

const IDIOMS: [Idiom; 8] = [
    Idiom {
        words: &["spill", "the", "beans"],
        keyword: 2,
        literal: ["bonen", "Bohnen", "fagioli"],
    },
    Idiom {
        words: &["break", "the", "ice"],
        keyword: 2,
        literal: ["ijs", "Eis", "ghiaccio"],
    },
    Idiom {
        words: &["by", "heart"],
        keyword: 1,
        literal: ["hart", "Herz", "cuore"],
    },
    Idiom {
        words: &["in", "hot", "water"],
        keyword: 2,
        literal: ["heet", "Wasser", "acqua"],
    },
    Idiom {
        words: &["under", "the", "weather"],
        keyword: 2,
        literal: ["weer", "Wetter", "tempo"],
    },
    Idiom {
        words: &["at", "your", "fingertips"],
        keyword: 2,
        literal: ["vingertoppen", "Fingerspitzen", "polpastrelli"],
    },
    Idiom {
        words: &["pull", "strings"],
        keyword: 1,
        literal: ["touwtjes", "Fäden", "fili"],
    },
    Idiom {
        words: &["hit", "the", "sack"],
        keyword: 2,
        literal: ["zak", "Sack", "sacco"],
    },
];

const FILLER: [&str; 12] = [
    "the", "man", "said", "that", "he", "would", "today", "house", "friend", "later", "she", "dog",
];
const NOUNS: [&str; 4] = ["man", "house", "friend", "dog"];
const TARGET_FILLER: [[&str; 8]; 3] = [
    ["de", "man", "zei", "dat", "hij", "vandaag", "huis", "later"],
    ["der", "Mann", "sagte", "dass", "er", "heute", "Haus", "später"],
    ["il", "uomo", "disse", "che", "lui", "oggi", "casa", "dopo"],
];
const PARAPHRASE: [[&str; 3]; 3] = [
    ["verklappen", "ontspannen", "uit het hoofd"],
    ["verraten", "auflockern", "auswendig"],
    ["rivelare", "rompere", "a memoria"],
];

pub struct FixturePaths {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub magpie: PathBuf,
    pub keywords: PathBuf,
    pub nouns: PathBuf,
    pub translations: BTreeMap<&'static str, PathBuf>,
    pub lexicons: BTreeMap<&'static str, PathBuf>,
    pub reference: PathBuf,
    pub alignments: PathBuf,
    pub genetic: PathBuf,
    pub frequency: PathBuf,
    pub dumps: PathBuf,
    pub masked: PathBuf,
    pub projected: PathBuf,
    pub sweep: PathBuf,
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()
}

fn json_lines<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    write_lines(
        path,
        items
            .into_iter()
            .map(|t| serde_json::to_string(&t).expect("serializable")),
    )
}

fn build_sentence(rng: &mut ChaCha8Rng, i: usize) -> PieSentence {
    let idiom_ix = i % IDIOMS.len();
    let idiom = &IDIOMS[idiom_ix];
    let mut tokens: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        tokens.push(FILLER.choose(rng).unwrap().to_string());
    }
    let start = tokens.len();
    tokens.extend(idiom.words.iter().map(|w| w.to_string()));
    for _ in 0..rng.random_range(1..=4) {
        tokens.push(FILLER.choose(rng).unwrap().to_string());
    }
    let end = start + idiom.words.len();
    let context_noun_indices = (0..tokens.len())
        .filter(|&w| (w < start || w >= end) && NOUNS.contains(&tokens[w].as_str()))
        .collect();
    PieSentence {
        id: format!("m{i:03}"),
        tokens,
        pie_word_indices: (start..end).collect(),
        keyword_indices: vec![start + idiom.keyword],
        context_noun_indices,
        gold_label: if (i / IDIOMS.len()).is_multiple_of(2) {
            GoldLabel::Figurative
        } else {
            GoldLabel::Literal
        },
        idiom_id: idiom.words.join(" "),
        identical_match: rng.random_bool(0.7),
    }
}

/// Target tokens for one sentence: literal keyword translation with a
/// probability that depends on the gold label, otherwise a paraphrase, and
/// occasionally the English keyword copied over.
fn build_translation(rng: &mut ChaCha8Rng, s: &PieSentence, lang: usize, wfw_boost: f64) -> Vec<String> {
    let idiom = IDIOMS
        .iter()
        .find(|d| d.words.join(" ") == s.idiom_id)
        .expect("known idiom");
    let mut out: Vec<String> = (0..rng.random_range(3..=5))
        .map(|_| TARGET_FILLER[lang].choose(rng).unwrap().to_string())
        .collect();
    let p_wfw = if s.gold_label == GoldLabel::Literal { 0.85 } else { 0.3 };
    let roll: f64 = rng.random();
    let insert = if roll < (p_wfw + wfw_boost).min(1.0) {
        idiom.literal[lang].to_string()
    } else if roll > 0.95 {
        s.tokens[s.keyword_indices[0]].clone()
    } else {
        PARAPHRASE[lang].choose(rng).unwrap().to_string()
    };
    let at = rng.random_range(0..=out.len());
    for (k, w) in insert.split_whitespace().enumerate() {
        out.insert(at + k, w.to_string());
    }
    out
}

fn subtokens(tokens: &[String]) -> (Vec<String>, Vec<Option<usize>>) {
    let mut pieces = Vec::new();
    let mut word_of = Vec::new();
    for (w, t) in tokens.iter().enumerate() {
        if t.chars().count() > 6 {
            let cut = t.char_indices().nth(4).map_or(t.len(), |(i, _)| i);
            pieces.push(format!("▁{}", &t[..cut]));
            pieces.push(t[cut..].to_string());
            word_of.extend([Some(w), Some(w)]);
        } else {
            pieces.push(format!("▁{t}"));
            word_of.push(Some(w));
        }
    }
    (pieces, word_of)
}

fn build_dump(rng: &mut ChaCha8Rng, s: &PieSentence, target: &[String]) -> ActivationDump {
    let (mut src, mut src_word_of) = subtokens(&s.tokens);
    src.push("</s>".into());
    src_word_of.push(None);
    let (tgt, tgt_word_of) = subtokens(target);
    let (n, t) = (src.len(), tgt.len());
    let sign = if s.gold_label == GoldLabel::Figurative {
        1.0
    } else {
        -1.0
    };
    let mut hidden = Vec::with_capacity((LAYERS + 1) * n * HIDDEN);
    for l in 0..=LAYERS {
        for w in &src_word_of {
            let in_pie = w.is_some_and(|w| s.is_pie(w));
            for k in 0..HIDDEN {
                let noise: f64 = rng.sample(StandardNormal);
                let signal = if in_pie && k == 0 { 0.8 * l as f64 * sign } else { 0.0 };
                hidden.push((noise + signal) as f32);
            }
        }
    }
    ActivationDump {
        sentence_id: s.id.clone(),
        source_subtokens: src,
        target_subtokens: tgt,
        src_word_of,
        tgt_word_of,
        eos_index: n - 1,
        enc_self_attn: Tensor::f32(vec![LAYERS, HEADS, n, n], softmax_rows(rng, LAYERS * HEADS * n, n))
            .expect("shape matches data"),
        cross_attn: Some(
            Tensor::f32(vec![LAYERS, HEADS, t, n], softmax_rows(rng, LAYERS * HEADS * t, n))
                .expect("shape matches data"),
        ),
        enc_hidden: Tensor::f32(vec![LAYERS + 1, n, HIDDEN], hidden).expect("shape matches data"),
        variant: Variant::Normal,
    }
}

fn to_io(e: idiolens_core::Error) -> io::Error {
    io::Error::other(e.to_string())
}

fn magpie_line(s: &PieSentence) -> serde_json::Value {
    let text = s.tokens.join(" ");
    let mut offsets = Vec::new();
    let mut pos = 0;
    for (w, t) in s.tokens.iter().enumerate() {
        if s.is_pie(w) {
            offsets.push([pos, pos + t.len()]);
        }
        pos += t.len() + 1;
    }
    serde_json::json!({
        "id": s.id,
        "idiom": s.idiom_id,
        "label": if s.gold_label == GoldLabel::Figurative { "i" } else { "l" },
        "confidence": 1.0,
        "context": ["", "", text, "", ""],
        "offsets": offsets,
        "variant_type": if s.identical_match { "identical" } else { "combined-inflection" },
    })
}

/// Write the workspace under `dir` with `n` sentences (at least 16).
pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> io::Result<FixturePaths> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = |name: &str| dir.join(name);
    let paths = FixturePaths {
        root: dir.to_path_buf(),
        corpus: p("corpus.jsonl"),
        magpie: p("magpie.jsonl"),
        keywords: p("keywords.tsv"),
        nouns: p("nouns.txt"),
        translations: LANGUAGES
            .iter()
            .map(|l| (*l, p(&format!("translations_{l}.jsonl"))))
            .collect(),
        lexicons: LANGUAGES.iter().map(|l| (*l, p(&format!("lexicon_{l}.tsv")))).collect(),
        reference: p("reference_nl.jsonl"),
        alignments: p("alignments_nl.txt"),
        genetic: p("genetic.tsv"),
        frequency: p("zipf.tsv"),
        dumps: p("dumps"),
        masked: p("masked"),
        projected: p("projected"),
        sweep: p("sweep"),
    };

    let sentences: Vec<PieSentence> = (0..n).map(|i| build_sentence(&mut rng, i)).collect();
    let corpus = CorpusSet::new(sentences).map_err(to_io)?;
    corpus.write_jsonl(io::BufWriter::new(fs::File::create(&paths.corpus)?))?;
    json_lines(&paths.magpie, corpus.iter().map(magpie_line))?;
    write_lines(
        &paths.keywords,
        IDIOMS
            .iter()
            .map(|d| format!("{}\t{}", d.words.join(" "), d.words[d.keyword])),
    )?;
    write_lines(&paths.nouns, NOUNS.iter().map(|s| s.to_string()))?;

    let mut targets: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
    for (li, lang) in LANGUAGES.iter().enumerate() {
        let rows: Vec<Vec<String>> = corpus.iter().map(|s| build_translation(&mut rng, s, li, 0.0)).collect();
        json_lines(
            &paths.translations[lang],
            corpus.iter().zip(&rows).map(|(s, t)| TranslationRecord {
                sentence_id: s.id.clone(),
                target_tokens: t.clone(),
                target: Some(t.join(" ")),
                provenance: Provenance::Model,
            }),
        )?;
        write_lines(
            &paths.lexicons[lang],
            IDIOMS
                .iter()
                .map(|d| format!("{}\t{}", d.words[d.keyword], d.literal[li])),
        )?;
        targets.insert(li, rows);
    }
    json_lines(
        &paths.reference,
        corpus.iter().map(|s| {
            let t = build_translation(&mut rng, s, 0, 0.1);
            TranslationRecord {
                sentence_id: s.id.clone(),
                target_tokens: t,
                target: None,
                provenance: Provenance::ReferenceCorpus,
            }
        }),
    )?;
    write_lines(
        &paths.genetic,
        ["nl\tde\t0.8".into(), "nl\tit\t0.4".into(), "de\tit\t0.45".into()],
    )?;
    let mut vocab: Vec<&str> = FILLER.to_vec();
    vocab.extend(IDIOMS.iter().flat_map(|d| d.words.iter().copied()));
    vocab.sort_unstable();
    vocab.dedup();
    write_lines(
        &paths.frequency,
        std::iter::once("# token\tzipf".to_string())
            .chain(vocab.iter().map(|w| format!("{w}\t{:.2}", 7.0 - w.len() as f64 * 0.5))),
    )?;

    // word alignments: roughly diagonal, keyword onto its literal when present
    let nl = &targets[&0];
    let align_lines = corpus.iter().zip(nl).map(|(s, t)| {
        let idiom = IDIOMS
            .iter()
            .find(|d| d.words.join(" ") == s.idiom_id)
            .expect("known idiom");
        let mut pairs = Vec::new();
        for w in 0..s.tokens.len() {
            let j = if s.keyword_indices.contains(&w) {
                t.iter().position(|x| x == idiom.literal[0]).unwrap_or(t.len() - 1)
            } else {
                (w * t.len() / s.tokens.len()).min(t.len() - 1)
            };
            if w % 5 != 4 {
                pairs.push(format!("{w}-{j}"));
            }
        }
        pairs.join(" ")
    });
    write_lines(&paths.alignments, align_lines)?;

    let normal: Vec<ActivationDump> = corpus.iter().zip(nl).map(|(s, t)| build_dump(&mut rng, s, t)).collect();
    let masked: Vec<ActivationDump> = corpus
        .iter()
        .zip(&normal)
        .map(|(s, d)| {
            let mut m = d.clone();
            let token = d.src_subtokens_of(s.keyword_indices[0])[0];
            m.variant = Variant::Masked { token, layer: None };
            let width = d.src_len() * HIDDEN;
            let mut data = d.enc_hidden.as_f32().expect("f32 dumps").to_vec();
            for (i, v) in data.iter_mut().enumerate().skip(width) {
                let layer = i / width;
                *v += 0.4 * layer as f32 * rng.sample::<f32, _>(StandardNormal);
            }
            m.enc_hidden = Tensor::f32(d.enc_hidden.dims().to_vec(), data).expect("same shape");
            m
        })
        .collect();
    let projected: Vec<ActivationDump> = normal
        .iter()
        .map(|d| {
            let mut m = d.clone();
            m.variant = Variant::Projected {
                projector: "inlp".into(),
            };
            let n = d.src_len();
            m.enc_self_attn = Tensor::f32(vec![LAYERS, HEADS, n, n], softmax_rows(&mut rng, LAYERS * HEADS * n, n))
                .expect("shape matches data");
            m
        })
        .collect();
    for (sub, dumps) in [
        (&paths.dumps, &normal),
        (&paths.masked, &masked),
        (&paths.projected, &projected),
    ] {
        fs::create_dir_all(sub)?;
        DumpStore::write(sub, dumps.iter()).map_err(to_io)?;
        corpus.write_jsonl(io::BufWriter::new(fs::File::create(sub.join("corpus.jsonl"))?))?;
    }

    for (name, boost) in [("0", 0.5f64), ("2", 0.0), ("0-1-2", 0.6)] {
        let d = paths.sweep.join(name);
        fs::create_dir_all(&d)?;
        let mut sweep_rng = ChaCha8Rng::seed_from_u64(seed ^ boost.to_bits());
        json_lines(
            &d.join("translations.jsonl"),
            corpus.iter().zip(nl).map(|(s, t)| {
                let t = if boost > 0.0 {
                    build_translation(&mut sweep_rng, s, 0, boost)
                } else {
                    t.clone()
                };
                TranslationRecord::new(s.id.clone(), &t.join(" "))
            }),
        )?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use idiolens_core::dumpio::load_alignments;
    use idiolens_core::labeler::load_translations;

    #[test]
    fn fixture_is_internally_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), 32, 1).unwrap();
        let corpus = idiolens_core::corpus::load_corpus(&p.corpus).unwrap();
        assert_eq!(corpus.len(), 32);
        let t = load_translations(&p.translations["nl"]).unwrap();
        load_alignments(&p.alignments)
            .unwrap()
            .validate(&corpus, Some(&t))
            .unwrap();
        let dumps = DumpStore::open(&p.dumps).unwrap().load_all().unwrap();
        assert_eq!(dumps.len(), 32);
        for d in dumps.values() {
            d.check_structure().unwrap();
        }
    }
}
