mod common;

use std::collections::BTreeMap;

use common::{naive_word, random_case, Synthetic};
use idiolens_core::attnstats::{
    collect_profile, cross_profile, encoder_profile, summarize, Analysis, Heads, ProfileInputs, ProfileOptions,
};
use idiolens_core::corpus::{CorpusSet, Subset};
use idiolens_core::dumpio::{AlignmentSet, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn in_window(c: usize, first: usize, last: usize) -> bool {
    c + 10 >= first && c <= last + 10
}

fn oracle_encoder(case: &Synthetic, layer: usize, analysis: Analysis) -> Option<f64> {
    let s = &case.sentence;
    let d = &case.dump;
    let first = s.pie_word_indices[0];
    let last = *s.pie_word_indices.last().unwrap();
    let ctx: Vec<usize> = s
        .context_noun_indices
        .iter()
        .copied()
        .filter(|&c| in_window(c, first, last))
        .collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    match analysis {
        Analysis::Pie2Noun => {
            let mut per_kw = Vec::new();
            for &kw in &s.keyword_indices {
                let vals: Vec<f64> = s
                    .pie_word_indices
                    .iter()
                    .filter(|&&q| q != kw)
                    .map(|&q| naive_word(d, layer, q, kw))
                    .collect();
                if let Some(m) = mean(&vals) {
                    per_kw.push(m);
                }
            }
            mean(&per_kw)
        }
        Analysis::Pie2Ctx => {
            let mut vals = Vec::new();
            for &q in &s.pie_word_indices {
                for &c in &ctx {
                    vals.push(naive_word(d, layer, q, c));
                }
            }
            mean(&vals)
        }
        Analysis::Ctx2Pie => {
            let mut vals = Vec::new();
            for &c in &ctx {
                for &kw in &s.keyword_indices {
                    vals.push(naive_word(d, layer, c, kw));
                }
            }
            mean(&vals)
        }
        _ => unreachable!(),
    }
}

fn oracle_cross(case: &Synthetic, layer: usize) -> Option<[f64; 3]> {
    let s = &case.sentence;
    let d = &case.dump;
    let mut per_kw = Vec::new();
    for &kw in &s.keyword_indices {
        let Some(&(_, t)) = case.alignment.iter().find(|(src, _)| *src == kw) else {
            continue;
        };
        let rows: Vec<usize> = (0..d.tgt_word_of.len())
            .filter(|&r| d.tgt_word_of[r] == Some(t))
            .collect();
        let mut acc = [0.0; 3];
        for h in 0..d.num_heads() {
            for &r in &rows {
                let row = d.cross_attn_row(layer, h, r).unwrap();
                for (k, &v) in row.iter().enumerate() {
                    let v = v as f64;
                    match d.src_word_of[k] {
                        Some(w) if w == kw => acc[0] += v,
                        Some(w) if s.pie_word_indices.contains(&w) => acc[1] += v,
                        _ => {}
                    }
                    if k == d.eos_index {
                        acc[2] += v;
                    }
                }
            }
        }
        let n = (d.num_heads() * rows.len()) as f64;
        per_kw.push(acc.map(|a| a / n));
    }
    if per_kw.is_empty() {
        return None;
    }
    let n = per_kw.len() as f64;
    let mut out = [0.0; 3];
    for v in &per_kw {
        for i in 0..3 {
            out[i] += v[i] / n;
        }
    }
    Some(out)
}

#[test]
fn randomized_dumps_match_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = ProfileOptions::default();
    for i in 0..60 {
        let case = random_case(&mut rng, &format!("s{i}"), 10, 3, 4);
        for layer in 0..3 {
            for a in Analysis::ENCODER {
                let got = encoder_profile(&case.dump, &case.sentence, layer, a, &opts).unwrap();
                let want = oracle_encoder(&case, layer, a);
                match (got, want) {
                    (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-6, "{a} layer {layer}: {g} vs {w}"),
                    (None, None) => {}
                    other => panic!("{a}: presence differs {other:?}"),
                }
            }
            let got = cross_profile(&case.dump, &case.sentence, &case.alignment, layer, Heads::Mean).unwrap();
            match (got, oracle_cross(&case, layer)) {
                (Some(g), Some(w)) => {
                    for (x, y) in [g.to_noun, g.to_pie_other, g.to_eos].iter().zip(w) {
                        assert!((x - y).abs() <= 1e-6);
                    }
                }
                (None, None) => {}
                other => panic!("cross presence differs {other:?}"),
            }
        }
    }
}

fn permute_heads(t: &Tensor, perm: &[usize]) -> Tensor {
    let d = t.dims().to_vec();
    let block = d[2] * d[3];
    let src = t.as_f32().unwrap();
    let mut out = Vec::with_capacity(src.len());
    for l in 0..d[0] {
        for &h in perm {
            let start = (l * d[1] + h) * block;
            out.extend_from_slice(&src[start..start + block]);
        }
    }
    Tensor::f32(d, out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn head_permutation_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, "s", 8, 2, 4);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let mut permuted = case.dump.clone();
        permuted.enc_self_attn = permute_heads(&case.dump.enc_self_attn, &perm);
        permuted.cross_attn = case.dump.cross_attn.as_ref().map(|c| permute_heads(c, &perm));
        let opts = ProfileOptions::default();
        for layer in 0..2 {
            for a in Analysis::ENCODER {
                let x = encoder_profile(&case.dump, &case.sentence, layer, a, &opts).unwrap();
                let y = encoder_profile(&permuted, &case.sentence, layer, a, &opts).unwrap();
                prop_assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    prop_assert!((x - y).abs() < 1e-9);
                    prop_assert!((0.0..=1.0 + 1e-9).contains(&x));
                }
            }
            let x = cross_profile(&case.dump, &case.sentence, &case.alignment, layer, Heads::Mean).unwrap();
            let y = cross_profile(&permuted, &case.sentence, &case.alignment, layer, Heads::Mean).unwrap();
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x.to_noun - y.to_noun).abs() < 1e-9);
                prop_assert!((x.to_eos - y.to_eos).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sentence_order_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cases: Vec<Synthetic> = (0..8).map(|i| random_case(&mut rng, &format!("s{i}"), 8, 2, 2)).collect();
        let build = |order: &[usize]| {
            let corpus = CorpusSet::new(order.iter().map(|&i| cases[i].sentence.clone()).collect()).unwrap();
            let align = AlignmentSet::from_lines(order.iter().map(|&i| cases[i].alignment.clone()).collect());
            (corpus, align)
        };
        let dumps: BTreeMap<_, _> = cases.iter().map(|c| (c.sentence.id.clone(), c.dump.clone())).collect();
        let ids: Vec<usize> = (0..8).collect();
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        let (c1, a1) = build(&ids);
        let (c2, a2) = build(&shuffled);
        for analysis in Analysis::ENCODER.into_iter().chain(Analysis::CROSS) {
            let run = |corpus: &CorpusSet, align: &AlignmentSet| {
                let inputs = ProfileInputs {
                    corpus,
                    dumps: &dumps,
                    labels: None,
                    alignments: Some(align),
                    options: ProfileOptions::default(),
                };
                summarize(&collect_profile(&inputs, analysis, Subset::All).unwrap(), "xx")
            };
            let (r1, r2) = (run(&c1, &a1), run(&c2, &a2));
            prop_assert_eq!(r1.len(), r2.len());
            for (x, y) in r1.iter().zip(&r2) {
                prop_assert!((x.mean - y.mean).abs() < 1e-12);
                prop_assert_eq!(x.median, y.median);
                prop_assert_eq!(x.n, y.n);
            }
        }
    }
}
