//! Synthetic data for benchmarks and end-to-end tests.

pub mod fixture;

use std::collections::BTreeSet;

use idiolens_core::corpus::{GoldLabel, PieSentence};
use idiolens_core::dumpio::{ActivationDump, Tensor, Variant};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish random orthogonal matrix from the QR factors of a Gaussian one.
pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Rows of `rows * cols` attention weights, each a softmax of random logits.
pub fn softmax_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() * 4.0).collect();
        let z: f64 = raw.iter().map(|x| x.exp()).sum();
        out.extend(raw.iter().map(|x| (x.exp() / z) as f32));
    }
    out
}

pub struct SyntheticCase {
    pub sentence: PieSentence,
    pub dump: ActivationDump,
    pub alignment: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct CaseShape {
    /// Upper bound on source subtokens, end-of-sentence token included.
    pub max_subtokens: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
}

/// A random sentence with a 2-3 word PIE, random subtoken splits, context
/// nouns, a target side with alignments, and random attention.
pub fn random_case(rng: &mut impl Rng, id: &str, shape: CaseShape) -> SyntheticCase {
    assert!(shape.max_subtokens >= 4, "need room for a PIE and the end token");
    let budget = shape.max_subtokens - 1;
    let words = rng.random_range(3..=budget);
    let mut src_word_of = Vec::new();
    let mut spare = budget - words;
    for w in 0..words {
        let pieces = if spare > 0 && rng.random_bool(0.3) {
            spare -= 1;
            2
        } else {
            1
        };
        src_word_of.extend(std::iter::repeat_n(Some(w), pieces));
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
        tgt_word_of.extend(std::iter::repeat_n(Some(w), pieces));
    }
    let t = tgt_word_of.len();
    let mut alignment = BTreeSet::new();
    for w in 0..words {
        if rng.random_bool(0.6) {
            alignment.insert((w, rng.random_range(0..tgt_words)));
        }
    }

    let CaseShape {
        layers, heads, hidden, ..
    } = shape;
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
        enc_self_attn: Tensor::f32(vec![layers, heads, s, s], softmax_rows(rng, layers * heads * s, s))
            .expect("shape matches data"),
        cross_attn: Some(
            Tensor::f32(vec![layers, heads, t, s], softmax_rows(rng, layers * heads * t, s))
                .expect("shape matches data"),
        ),
        enc_hidden: Tensor::f32(
            vec![layers + 1, s, hidden],
            (0..(layers + 1) * s * hidden)
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        )
        .expect("shape matches data"),
        variant: Variant::Normal,
    };
    SyntheticCase {
        sentence,
        dump,
        alignment,
    }
}

/// Vocabulary-skewed paired representations. Every token type carries a
/// shared code `E[t]` and a private code `G[t]`; `A = E[t] + noise` and
/// `B = R A + 1.5 G[t] + noise`. The pool and the subsets draw from disjoint
/// type ranges, and the subsets differ in how many types they cover.
pub struct SkewedSplits {
    pub pool: (DMatrix<f64>, DMatrix<f64>),
    pub subsets: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

pub const SKEW_DIM: usize = 64;
pub const SKEW_TOKENS: usize = 5120;
pub const SKEW_TYPES: [usize; 5] = [80, 160, 320, 640, 1280];

pub fn skewed_splits<R: Rng>(rng: &mut R) -> SkewedSplits {
    let d = SKEW_DIM;
    let vocab = 20_000;
    let e = gaussian(rng, d, vocab);
    let g = gaussian(rng, d, vocab);
    let r = random_orthogonal(rng, d);
    let draw = |rng: &mut R, types: &[usize]| {
        let mut a = DMatrix::zeros(d, SKEW_TOKENS);
        let mut b = DMatrix::zeros(d, SKEW_TOKENS);
        for c in 0..SKEW_TOKENS {
            let t = types[rng.random_range(0..types.len())];
            let col = e.column(t) + gaussian(rng, d, 1) * 0.1;
            let bcol = &r * &col + g.column(t) * 1.5 + gaussian(rng, d, 1) * 0.3;
            a.set_column(c, &col);
            b.set_column(c, &bcol);
        }
        (a, b)
    };
    let pool_types: Vec<usize> = (10_000..vocab).collect();
    let pool = draw(rng, &pool_types);
    let subsets = SKEW_TYPES
        .iter()
        .map(|&nt| {
            let types: Vec<usize> = rand::seq::index::sample(rng, 10_000, nt).into_iter().collect();
            draw(rng, &types)
        })
        .collect();
    SkewedSplits { pool, subsets }
}

/// `n x d` rows where every dimension carries the label, with roughly
/// `positive_rate` positives.
pub fn linearly_encoded(rng: &mut impl Rng, n: usize, d: usize, positive_rate: f64) -> (DMatrix<f64>, Vec<bool>) {
    let y: Vec<bool> = (0..n).map(|_| rng.random_bool(positive_rate)).collect();
    let shift: Vec<f64> = (0..d).map(|_| 0.5 + rng.random::<f64>()).collect();
    let x = DMatrix::from_fn(n, d, |i, j| {
        let noise: f64 = rng.sample(StandardNormal);
        noise + if y[i] { shift[j] } else { 0.0 }
    });
    (x, y)
}
