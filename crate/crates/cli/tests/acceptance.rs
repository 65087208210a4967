//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use idiolens_bench::{random_case, random_orthogonal, skewed_splits, CaseShape, SyntheticCase};
use idiolens_core::attnstats::{cross_profile, encoder_profile, Analysis, Heads, ProfileOptions};
use idiolens_core::dumpio::container::{read_records_from, write_records_to};
use idiolens_core::labeler::{label_translation, Label3, LiteralLexicon, TranslationRecord};
use idiolens_core::metrics::{bleu, macro_f1, pearson_r, BleuConfig};
use idiolens_core::probe::inlp::inlp_train;
use idiolens_core::probe::InlpConfig;
use idiolens_core::repr::{fit_cca, refit_similarity, DEFAULT_RIDGE};
use idiolens_core::{ActdRecord, GoldLabel, PieSentence, Tensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Runner {
    failed: usize,
}

impl Runner {
    fn check(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed > budget {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
}

// ---------- labeler ----------

struct LabelCase {
    idiom: &'static str,
    keywords: &'static [&'static str],
    translation: &'static str,
    expected: Label3,
}

const fn case(
    idiom: &'static str,
    keywords: &'static [&'static str],
    translation: &'static str,
    expected: Label3,
) -> LabelCase {
    LabelCase {
        idiom,
        keywords,
        translation,
        expected,
    }
}

use Label3::{Copy as C, Paraphrase as P, WordForWord as W};

const LEXICON: &[(&str, &str)] = &[
    ("fingertips", "vingertoppen"),
    ("fingertips", "vingers"),
    ("heart", "hart"),
    ("scratch", "kras"),
    ("blue", "blauw"),
    ("stock", "voorraad"),
    ("board", "bord"),
    ("beans", "bonen"),
    ("ice", "ijs"),
    ("water", "water"),
    ("sack", "zak"),
    ("strings", "touwtjes"),
    ("strings", "snaren"),
    ("weather", "weer"),
    ("cake", "taart"),
    ("bucket", "emmer"),
    ("cat", "kat"),
    ("bag", "tas"),
    ("bag", "zak"),
    ("leg", "been"),
    ("bush", "struik"),
    ("iron", "ijzer"),
    ("horses", "paarden"),
];

const LABEL_CASES: [LabelCase; 40] = [
    case("at your fingertips", &["fingertips"], "alles binnen handbereik", P),
    case("at your fingertips", &["fingertips"], "aan je vingertoppen", W),
    case("at your fingertips", &["fingertips"], "at your Fingertips!", C),
    case("by heart", &["heart"], "uit het hoofd", P),
    case("by heart", &["heart"], "met het hart", W),
    case("from scratch", &["scratch"], "vanaf nul", P),
    case("from scratch", &["scratch"], "vanaf een kras", W),
    case("out of the blue", &["blue"], "uit het niets", P),
    case("out of the blue", &["blue"], "uit het blauw", W),
    case("take stock", &["stock"], "de balans opmaken", P),
    case("take stock", &["stock"], "de voorraad opnemen", W),
    case("across the board", &["board"], "over de hele linie", P),
    case("across the board", &["board"], "over het bord", W),
    case("spill the beans", &["beans"], "hij morste de bonensoep", W),
    case("break the ice", &["ice"], "het ijs breken", W),
    case("break the ice", &["ice"], "hij at een ijsje", P),
    case("in hot water", &["water"], "in de problemen", P),
    case("in hot water", &["water"], "in heet Water.", W),
    case("hit the sack", &["sack"], "naar bed gaan", P),
    case("hit the sack", &["sack"], "de zak raken", W),
    case("pull strings", &["strings"], "aan de touwtjes trekken", W),
    case("pull strings", &["strings"], "kruiwagens gebruiken", P),
    case("pull strings", &["strings"], "aan de snaren trekken", W),
    case("under the weather", &["weather"], "niet lekker", P),
    case("under the weather", &["weather"], "onder het WEER", W),
    case("piece of cake", &["cake"], "een fluitje van een cent", P),
    case("piece of cake", &["cake"], "een stuk taart", W),
    case("piece of cake", &["cake"], "een stuk cake", C),
    case("kick the bucket", &["bucket"], "het loodje leggen", P),
    case("kick the bucket", &["bucket"], "de emmer schoppen", W),
    case(
        "let the cat out of the bag",
        &["cat", "bag"],
        "de kat uit de zak laten",
        W,
    ),
    case(
        "let the cat out of the bag",
        &["cat", "bag"],
        "het geheim verklappen",
        P,
    ),
    case("let the cat out of the bag", &["cat", "bag"], "de cat uit de bag", C),
    case(
        "let the cat out of the bag",
        &["cat", "bag"],
        "iets uit de tas halen",
        W,
    ),
    case("pull my leg", &["leg"], "in de maling nemen", P),
    case("pull my leg", &["leg"], "aan mijn been trekken", W),
    case("beat around the bush", &["bush"], "rond de bushes slaan", C),
    case("beat around the bush", &["bush"], "rond de struiken slaan", W),
    case(
        "strike while the iron is hot",
        &["iron"],
        "het ijzer smeden als het heet is",
        W,
    ),
    case("hold your horses", &["horses"], "rustig aan", P),
];

fn labeler() -> Outcome {
    let mut lex = LiteralLexicon::default();
    for (k, l) in LEXICON {
        lex.insert(k, l).map_err(|e| e.to_string())?;
    }
    let mut counts = [0usize; 3];
    for (i, c) in LABEL_CASES.iter().enumerate() {
        let tokens: Vec<String> = ["she", "said"]
            .iter()
            .copied()
            .chain(c.idiom.split(' '))
            .map(String::from)
            .collect();
        let keyword_indices = c
            .keywords
            .iter()
            .map(|k| tokens.iter().position(|t| t == k).expect("keyword in idiom"))
            .collect();
        let sentence = PieSentence {
            id: format!("c{i}"),
            pie_word_indices: (2..tokens.len()).collect(),
            tokens,
            keyword_indices,
            context_noun_indices: vec![],
            gold_label: GoldLabel::Figurative,
            idiom_id: c.idiom.into(),
            identical_match: true,
        };
        let rec = TranslationRecord::new(sentence.id.clone(), c.translation);
        let got = label_translation(&sentence, &rec, &lex)
            .map_err(|e| e.to_string())?
            .label3;
        ensure(got == c.expected, || {
            format!(
                "`{}` -> `{}`: {got:?}, expected {:?}",
                c.idiom, c.translation, c.expected
            )
        })?;
        counts[got as usize] += 1;
    }
    Ok(format!(
        "{} cases ({} copy, {} word-for-word, {} paraphrase)",
        LABEL_CASES.len(),
        counts[C as usize],
        counts[W as usize],
        counts[P as usize]
    ))
}

// ---------- attention ----------

/// `[L][H][R][C]` element, read straight from the flat buffer.
fn at(t: &Tensor, l: usize, h: usize, r: usize, c: usize) -> f64 {
    let d = t.dims();
    t.as_f32().expect("f32 attention")[((l * d[1] + h) * d[2] + r) * d[3] + c] as f64
}

fn word_attention(case: &SyntheticCase, layer: usize, from: usize, to: usize) -> f64 {
    let d = &case.dump;
    let (heads, s) = (d.enc_self_attn.dims()[1], d.enc_self_attn.dims()[2]);
    let mut sum = 0.0;
    let mut queries = 0usize;
    for q in 0..s {
        if d.src_word_of[q] != Some(from) {
            continue;
        }
        queries += 1;
        for h in 0..heads {
            for k in 0..s {
                if d.src_word_of[k] == Some(to) {
                    sum += at(&d.enc_self_attn, layer, h, q, k);
                }
            }
        }
    }
    sum / (queries * heads) as f64
}

fn avg(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn oracle(case: &SyntheticCase, layer: usize, analysis: Analysis) -> Option<f64> {
    let s = &case.sentence;
    let first = *s.pie_word_indices.iter().min()?;
    let last = *s.pie_word_indices.iter().max()?;
    let nouns: Vec<usize> = s
        .context_noun_indices
        .iter()
        .copied()
        .filter(|&c| c + 10 >= first && c <= last + 10)
        .collect();
    let mut vals = Vec::new();
    match analysis {
        Analysis::Pie2Noun => {
            for &kw in &s.keyword_indices {
                let inner: Vec<f64> = s
                    .pie_word_indices
                    .iter()
                    .filter(|&&w| w != kw)
                    .map(|&w| word_attention(case, layer, w, kw))
                    .collect();
                if let Some(m) = avg(&inner) {
                    vals.push(m);
                }
            }
        }
        Analysis::Pie2Ctx => {
            for &w in &s.pie_word_indices {
                for &c in &nouns {
                    vals.push(word_attention(case, layer, w, c));
                }
            }
        }
        Analysis::Ctx2Pie => {
            for &c in &nouns {
                for &kw in &s.keyword_indices {
                    vals.push(word_attention(case, layer, c, kw));
                }
            }
        }
        Analysis::XattnNoun | Analysis::XattnPieOther | Analysis::XattnEos => {
            let d = &case.dump;
            let x = d.cross_attn.as_ref()?;
            let (heads, t_len, s_len) = (x.dims()[1], x.dims()[2], x.dims()[3]);
            for &kw in &s.keyword_indices {
                let Some(t) = case.alignment.iter().filter(|(a, _)| *a == kw).map(|&(_, b)| b).min() else {
                    continue;
                };
                let rows: Vec<usize> = (0..t_len).filter(|&r| d.tgt_word_of[r] == Some(t)).collect();
                let mut mass = 0.0;
                for h in 0..heads {
                    for &r in &rows {
                        for k in 0..s_len {
                            let hit = match analysis {
                                Analysis::XattnNoun => d.src_word_of[k] == Some(kw),
                                Analysis::XattnPieOther => {
                                    d.src_word_of[k].is_some_and(|w| w != kw && s.pie_word_indices.contains(&w))
                                }
                                _ => k == d.eos_index,
                            };
                            if hit {
                                mass += at(x, layer, h, r, k);
                            }
                        }
                    }
                }
                vals.push(mass / (heads * rows.len()) as f64);
            }
        }
    }
    avg(&vals)
}

fn attention() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa77e);
    let shape = CaseShape {
        max_subtokens: 12,
        layers: 6,
        heads: 8,
        hidden: 4,
    };
    let opts = ProfileOptions::default();
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for i in 0..200 {
        let case = random_case(&mut rng, &format!("d{i}"), shape);
        ensure(case.dump.src_len() <= 12, || {
            format!("case {i} has {} subtokens", case.dump.src_len())
        })?;
        for layer in 0..6 {
            for a in Analysis::ENCODER {
                let got = encoder_profile(&case.dump, &case.sentence, layer, a, &opts).map_err(|e| e.to_string())?;
                let want = oracle(&case, layer, a);
                match (got, want) {
                    (Some(g), Some(w)) => {
                        worst = worst.max((g - w).abs());
                        compared += 1;
                    }
                    (None, None) => {}
                    other => return Err(format!("case {i} {a} layer {layer}: {other:?}")),
                }
            }
            let got = cross_profile(&case.dump, &case.sentence, &case.alignment, layer, Heads::Mean)
                .map_err(|e| e.to_string())?;
            for a in Analysis::CROSS {
                match (got.as_ref().and_then(|p| p.value(a)), oracle(&case, layer, a)) {
                    (Some(g), Some(w)) => {
                        worst = worst.max((g - w).abs());
                        compared += 1;
                    }
                    (None, None) => {}
                    other => return Err(format!("case {i} {a} layer {layer}: {other:?}")),
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    ensure(compared > 200 * 6 * 3, || format!("only {compared} values compared"))?;
    Ok(format!(
        "200 dumps, {compared} values, max deviation {worst:.1e} <= 1e-6"
    ))
}

// ---------- CCA ----------

fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    idiolens_bench::gaussian(rng, r, c)
}

fn cca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xcca);
    let err = |e: idiolens_core::Error| e.to_string();

    let x = gaussian(&mut rng, 8, 600);
    let own = refit_similarity(&x, &x, 0.0).map_err(err)?;
    ensure((own - 1.0).abs() <= 1e-6, || format!("self-similarity {own}"))?;

    let a = gaussian(&mut rng, 8, 2000);
    let b = gaussian(&mut rng, 6, 8) * &a + gaussian(&mut rng, 6, 2000) * 0.8;
    let base = refit_similarity(&a, &b, 0.0).map_err(err)?;
    let qa = random_orthogonal(&mut rng, 8);
    let qb = random_orthogonal(&mut rng, 6);
    let turned = refit_similarity(&(&qa * &a), &(&qb * &b), 0.0).map_err(err)?;
    ensure((base - turned).abs() <= 1e-4, || {
        format!("orthogonal transform moved {base} to {turned}")
    })?;

    let u = gaussian(&mut rng, 8, 5000);
    let v = gaussian(&mut rng, 8, 5000);
    let independent = refit_similarity(&u, &v, DEFAULT_RIDGE).map_err(err)?;
    ensure(independent <= 0.1, || {
        format!("independent data similarity {independent}")
    })?;

    let splits = skewed_splits(&mut rng);
    let pooled = fit_cca(&splits.pool.0, &splits.pool.1, DEFAULT_RIDGE).map_err(err)?;
    let mut two_step = Vec::new();
    let mut refit = Vec::new();
    for (sa, sb) in &splits.subsets {
        two_step.push(pooled.similarity(sa, sb).map_err(err)?);
        refit.push(refit_similarity(sa, sb, DEFAULT_RIDGE).map_err(err)?);
    }
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let (s2, sr) = (spread(&two_step), spread(&refit));
    ensure(s2 <= 0.05, || format!("two-step spread {s2:.4} ({two_step:?})"))?;
    ensure(sr > 0.10, || format!("refit spread {sr:.4} ({refit:?})"))?;
    Ok(format!(
        "self {own:.9}, rotation delta {:.1e}, independent {independent:.4}, spread two-step {s2:.4} vs refit {sr:.4}",
        (base - turned).abs()
    ))
}

// ---------- INLP ----------

fn inlp() -> Outcome {
    let err = |e: idiolens_core::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e1f);
    let (x, y) = idiolens_bench::linearly_encoded(&mut rng, 1500, 16, 0.65);
    let cfg = InlpConfig {
        iterations: 16,
        ..InlpConfig::default()
    };
    let p = inlp_train(&x, &y, &cfg).map_err(err)?;
    let mut worst_null = 0.0f64;
    for w in &p.probe_weights {
        let w = nalgebra::DVector::from_column_slice(w);
        worst_null = worst_null.max((&p.p * w).norm());
    }
    ensure(!p.probe_weights.is_empty(), || "no directions stored".into())?;
    ensure(worst_null <= 1e-6, || format!("max |P w| = {worst_null:e}"))?;
    let idem = (&p.p * &p.p - &p.p).amax();
    let sym = (&p.p - p.p.transpose()).amax();
    ensure(idem <= 1e-6, || format!("|P^2 - P| = {idem:e}"))?;
    ensure(sym <= 1e-6, || format!("|P - P^T| = {sym:e}"))?;
    let acc = p.residual_accuracy.ok_or("no residual accuracy")?;
    let maj = p.majority_rate.ok_or("no majority rate")?;
    ensure((acc - maj).abs() <= 0.02, || {
        format!("residual accuracy {acc:.4} vs majority {maj:.4}")
    })?;
    Ok(format!(
        "{} directions, max |Pw| {worst_null:.1e}, idempotence {idem:.1e}, symmetry {sym:.1e}, residual {:.2}% vs majority {:.2}%",
        p.rank_removed(),
        100.0 * acc,
        100.0 * maj
    ))
}

// ---------- metrics ----------

fn metrics() -> Outcome {
    let err = |e: idiolens_core::Error| e.to_string();
    // per class F1: a 2/3, b 1/2, c 2/3
    let f1 = macro_f1(&["a", "a", "b", "b", "c"], &["a", "b", "b", "c", "c"]).map_err(err)?;
    ensure((f1 - 11.0 / 18.0).abs() <= 1e-9, || format!("macro F1 {f1}"))?;
    // sum dx dy = 11, sum dx^2 = 5, sum dy^2 = 26
    let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 9.0]).map_err(err)?;
    ensure((r - 11.0 / 130f64.sqrt()).abs() <= 1e-9, || format!("pearson {r}"))?;

    let cands = ["the cat sat on the mat", "a dog ran in the park", "it is raining today"];
    let refs = [
        "the cat sat on the mat",
        "a dog ran through the park",
        "it is raining hard today",
    ];
    // precisions 15/16, 10/13, 6/10, 3/7; lengths 16 vs 17
    let expected = 61.646_325_087_6;
    let b = bleu(&cands, &refs, &BleuConfig::default()).map_err(err)?;
    ensure((b - expected).abs() <= 1e-4, || {
        format!("bleu {b}, expected {expected}")
    })?;
    let same = bleu(&refs, &refs, &BleuConfig::default()).map_err(err)?;
    ensure(same == 100.0, || format!("bleu(c, c) = {same}"))?;
    Ok(format!(
        "macro F1 {f1:.12}, pearson {r:.12}, bleu {b:.6}, bleu(c,c) {same}"
    ))
}

// ---------- determinism ----------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = common::fixture(&dir.path().join("in"));
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        let steps = common::pipeline(&f, &out, 13);
        common::run_pipeline(&steps, None);
        runs.push(steps);
    }
    let mut names = BTreeSet::new();
    let mut files = 0;
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        names.insert(a.name);
        for (pa, pb) in a.outputs.iter().zip(&b.outputs) {
            let (x, y) = (
                fs::read(pa).map_err(|e| e.to_string())?,
                fs::read(pb).map_err(|e| e.to_string())?,
            );
            ensure(x == y, || {
                format!("{} output {} differs between runs", a.name, pa.display())
            })?;
            files += 1;
        }
    }
    ensure(names.len() == 16, || {
        format!("only {} subcommands exercised", names.len())
    })?;
    Ok(format!(
        "{} subcommands, {files} output files byte-identical",
        names.len()
    ))
}

// ---------- dump round trip ----------

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0);
    let mut tensors = Vec::new();
    for _ in 0..1000 {
        let rank = rng.random_range(0..5);
        let dims: Vec<usize> = (0..rank).map(|_| rng.random_range(0..6)).collect();
        let n = dims.iter().product();
        let t = if rng.random_bool(0.5) {
            Tensor::f64(dims, (0..n).map(|_| f64::from_bits(rng.random())).collect())
        } else {
            Tensor::f32(dims, (0..n).map(|_| f32::from_bits(rng.random())).collect())
        };
        tensors.push(t.map_err(|e| e.to_string())?);
    }
    let records: Vec<ActdRecord> = tensors
        .chunks(10)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(ActdRecord::new(serde_json::Map::new()), |r, (i, t)| {
                    r.with_tensor(format!("t{i}"), t.clone())
                })
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tensors.actd");
    write_records_to(&path, &records).map_err(|e| e.to_string())?;
    let back = read_records_from(&path).map_err(|e| e.to_string())?;
    ensure(back.len() == records.len(), || {
        format!("{} records read back", back.len())
    })?;
    let bits = |t: &Tensor| -> Vec<u64> {
        match (t.as_f32(), t.as_f64()) {
            (Some(v), _) => v.iter().map(|x| x.to_bits() as u64).collect(),
            (_, Some(v)) => v.iter().map(|x| x.to_bits()).collect(),
            _ => unreachable!(),
        }
    };
    let mut checked = 0;
    for (r, b) in records.iter().zip(&back) {
        for i in 0..10 {
            let name = format!("t{i}");
            let (x, y) = (r.tensor(&name).expect("written"), b.tensor(&name).ok_or("tensor lost")?);
            ensure(
                x.dims() == y.dims() && x.as_f32().is_some() == y.as_f32().is_some(),
                || format!("{name}: shape or dtype changed"),
            )?;
            ensure(bits(x) == bits(y), || format!("{name}: bits changed"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} tensors bit-identical"))
}

fn main() {
    let mut r = Runner { failed: 0 };
    r.check("labeler three-way cases", Duration::from_secs(1), labeler);
    r.check("attention matches loop oracle", Duration::from_secs(30), attention);
    r.check("cca invariants and spread", Duration::from_secs(120), cca);
    r.check("inlp projector invariants", Duration::from_secs(60), inlp);
    r.check("metrics hand cases", Duration::from_secs(1), metrics);
    r.check("cli determinism", Duration::from_secs(120), determinism);
    r.check("dump round trip", Duration::from_secs(30), round_trip);
    if r.failed > 0 {
        println!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}
