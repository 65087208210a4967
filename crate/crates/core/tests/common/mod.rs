#![allow(dead_code)]

use std::collections::BTreeSet;

use idiolens_core::corpus::{GoldLabel, PieSentence};
use idiolens_core::dumpio::{ActivationDump, Tensor, Variant};
use rand::Rng;

pub fn softmax_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() * 4.0).collect();
        let z: f64 = raw.iter().map(|x| x.exp()).sum();
        out.extend(raw.iter().map(|x| (x.exp() / z) as f32));
    }
    out
}

pub struct Synthetic {
    pub sentence: PieSentence,
    pub dump: ActivationDump,
    pub alignment: BTreeSet<(usize, usize)>,
}

/// A sentence of 3..=max_words words with random subtoken splits, a PIE of
/// 2-3 words, random context nouns, and a dump with random attention.
pub fn random_case(rng: &mut impl Rng, id: &str, max_words: usize, layers: usize, heads: usize) -> Synthetic {
    let words = rng.random_range(3..=max_words);
    let mut src_word_of = Vec::new();
    for w in 0..words {
        let pieces = if rng.random_bool(0.3) { 2 } else { 1 };
        for _ in 0..pieces {
            src_word_of.push(Some(w));
        }
    }
    src_word_of.push(None);
    let s = src_word_of.len();

    let pie_len = rng.random_range(2..=3.min(words));
    let start = rng.random_range(0..=words - pie_len);
    let pie: Vec<usize> = (start..start + pie_len).collect();
    let keywords = if pie_len > 2 && rng.random_bool(0.3) {
        vec![pie[0], pie[pie_len - 1]]
    } else {
        vec![pie[pie_len - 1]]
    };
    let context: Vec<usize> = (0..words)
        .filter(|w| !pie.contains(w) && rng.random_bool(0.5))
        .collect();

    let tgt_words = rng.random_range(1..=words);
    let mut tgt_word_of = Vec::new();
    for w in 0..tgt_words {
        let pieces = if rng.random_bool(0.3) { 2 } else { 1 };
        for _ in 0..pieces {
            tgt_word_of.push(Some(w));
        }
    }
    let t = tgt_word_of.len();
    let mut alignment = BTreeSet::new();
    for w in 0..words {
        if rng.random_bool(0.6) {
            alignment.insert((w, rng.random_range(0..tgt_words)));
        }
    }

    let dim = 4;
    let sentence = PieSentence {
        id: id.into(),
        tokens: (0..words).map(|i| format!("w{i}")).collect(),
        pie_word_indices: pie,
        keyword_indices: keywords,
        context_noun_indices: context,
        gold_label: if rng.random_bool(0.5) {
            GoldLabel::Figurative
        } else {
            GoldLabel::Literal
        },
        idiom_id: format!("idiom{}", rng.random_range(0..5)),
        identical_match: rng.random_bool(0.5),
    };
    let dump = ActivationDump {
        sentence_id: id.into(),
        source_subtokens: (0..s).map(|i| format!("s{i}")).collect(),
        target_subtokens: (0..t).map(|i| format!("t{i}")).collect(),
        src_word_of,
        tgt_word_of,
        eos_index: s - 1,
        enc_self_attn: Tensor::f32(vec![layers, heads, s, s], softmax_rows(rng, layers * heads * s, s)).unwrap(),
        cross_attn: Some(Tensor::f32(vec![layers, heads, t, s], softmax_rows(rng, layers * heads * t, s)).unwrap()),
        enc_hidden: Tensor::f32(
            vec![layers + 1, s, dim],
            (0..(layers + 1) * s * dim).map(|_| rng.random::<f32>()).collect(),
        )
        .unwrap(),
        variant: Variant::Normal,
    };
    dump.check_structure().unwrap();
    Synthetic {
        sentence,
        dump,
        alignment,
    }
}

/// Word-level attention straight from the definition, one element at a time.
pub fn naive_word(d: &ActivationDump, layer: usize, from: usize, to: usize) -> f64 {
    let s = d.src_len();
    let h = d.num_heads();
    let mut total = 0.0;
    let mut nq = 0;
    for q in 0..s {
        if d.src_word_of[q] != Some(from) {
            continue;
        }
        nq += 1;
        for head in 0..h {
            for k in 0..s {
                if d.src_word_of[k] == Some(to) {
                    total += d.self_attn_row(layer, head, q)[k] as f64;
                }
            }
        }
    }
    total / (nq * h) as f64
}
