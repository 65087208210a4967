use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use idiolens_core::attnstats::{inlp_attention_delta, ProfileOptions};
use idiolens_core::corpus::{CorpusSet, GoldLabel, Subset};
use idiolens_core::labeler::{label_corpus, load_lexicon, load_translations, Label2, LabelSet, LiteralLexicon};
use idiolens_core::probe::freq::load_frequency_table;
use idiolens_core::probe::inlp::write_projectors;
use idiolens_core::probe::{
    amnesic_success, assign_folds, frequency_baseline_labels, grouped_cv_f1, inlp_train_with_dev,
    layer_selection_sweep, probing_samples, rotation, InlpConfig, InterventionOutcome, InterventionRunner, Pooling,
    ProbeConfig,
};
use idiolens_core::{Error, TranslationSet};
use nalgebra::DMatrix;
use serde::Serialize;

use super::{dump_inputs, parse_flag, read_corpus, read_dumps};
use crate::args::{InlpEvalArgs, InlpSweepArgs, InlpTrainArgs, ProbeArgs};
use crate::output::{write_csv, write_json, write_via_path};
use crate::usage;

/// fig-par → true, fig-wfw → false, over figurative sentences with a label.
fn paraphrase_targets(corpus: &CorpusSet, labels: &LabelSet) -> BTreeMap<String, bool> {
    corpus
        .iter()
        .filter(|s| s.gold_label == GoldLabel::Figurative)
        .filter_map(|s| {
            labels
                .get(&s.id)
                .map(|l| (s.id.clone(), l.label2 == Label2::Paraphrase))
        })
        .collect()
}

#[derive(Serialize)]
struct ProbeRow {
    language: String,
    layer: usize,
    target: String,
    mean_f1: f64,
    std_f1: f64,
    n: usize,
}

pub fn probe(a: &ProbeArgs, seed: u64) -> Result<()> {
    let inputs = dump_inputs(&a.input)?;
    let targets = match a.target.as_str() {
        "gold" => inputs
            .corpus
            .iter()
            .map(|s| (s.id.clone(), s.gold_label == GoldLabel::Figurative))
            .collect(),
        "frequency" => {
            let Some(path) = &a.frequency else {
                return usage("--target frequency needs --frequency");
            };
            let table = load_frequency_table(path, a.missing_zipf)?;
            frequency_baseline_labels(&inputs.corpus, &table)?
        }
        "paraphrase" => {
            let Some(labels) = &inputs.labels else {
                return usage("--target paraphrase needs --labels");
            };
            paraphrase_targets(&inputs.corpus, labels)
        }
        other => return usage(format!("--target: unknown target `{other}`")),
    };
    let pooling = if a.mean_pooled {
        Pooling::MeanPooled
    } else {
        Pooling::PerToken
    };
    let layers = inputs
        .dumps
        .values()
        .next()
        .ok_or_else(|| Error::EmptySet("no activation dumps".into()))?
        .num_layers();
    let cfg = ProbeConfig {
        l2: a.l2,
        seed,
        ..ProbeConfig::default()
    };
    let mut rows = Vec::new();
    for layer in 0..=layers {
        let samples = probing_samples(&inputs.corpus, &inputs.dumps, &targets, layer, pooling)?;
        let cv = grouped_cv_f1(&samples.x, &samples.y, &samples.group_refs(), a.folds, &cfg)
            .with_context(|| format!("probing layer {layer}"))?;
        rows.push(ProbeRow {
            language: a.language.clone(),
            layer,
            target: a.target.clone(),
            mean_f1: cv.mean_f1,
            std_f1: cv.std_f1,
            n: samples.len(),
        });
    }
    write_csv(
        &a.out,
        &rows,
        &["language", "layer", "target", "mean_f1", "std_f1", "n"],
    )
}

/// Idiom → fold over sentences, so every command splits the same way.
fn sentence_folds(
    corpus: &CorpusSet,
    ids: impl Iterator<Item = String>,
    folds: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>> {
    let ids: Vec<String> = ids.collect();
    let groups: Vec<&str> = ids
        .iter()
        .map(|id| corpus.get(id).expect("id from corpus").idiom_id.as_str())
        .collect();
    let by_group = assign_folds(&groups, folds, seed)?;
    Ok(ids
        .iter()
        .zip(&groups)
        .map(|(id, g)| (id.clone(), by_group[g]))
        .collect())
}

#[derive(Serialize)]
struct InlpRow {
    layer: usize,
    directions: usize,
    first_accuracy: Option<f64>,
    last_accuracy: Option<f64>,
    residual_accuracy: Option<f64>,
    majority_rate: Option<f64>,
    n_train: usize,
    n_dev: usize,
}

#[derive(Serialize)]
struct AccuracyRow {
    layer: usize,
    iteration: usize,
    dev_accuracy: f64,
}

fn rows_of(x: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    x.select_rows(keep.iter())
}

pub fn inlp_train(a: &InlpTrainArgs, seed: u64) -> Result<()> {
    if a.rotation >= a.folds {
        return usage(format!(
            "--rotation {} needs fewer than --folds {}",
            a.rotation, a.folds
        ));
    }
    let inputs = dump_inputs(&a.input)?;
    let Some(labels) = &inputs.labels else {
        return usage("inlp-train needs --labels");
    };
    let targets: BTreeMap<String, bool> = paraphrase_targets(&inputs.corpus, labels)
        .into_iter()
        .filter(|(id, _)| inputs.dumps.contains_key(id))
        .collect();
    let fold_of = sentence_folds(&inputs.corpus, targets.keys().cloned(), a.folds, seed)?;
    let rot = rotation(a.rotation, a.folds);
    let num_layers = inputs
        .dumps
        .values()
        .next()
        .ok_or_else(|| Error::EmptySet("no activation dumps".into()))?
        .num_layers();
    let layers: Vec<usize> = if a.layers.is_empty() {
        (0..=num_layers).collect()
    } else {
        a.layers.clone()
    };
    let cfg = InlpConfig {
        iterations: a.iterations,
        probe: ProbeConfig {
            l2: a.l2,
            seed,
            ..ProbeConfig::default()
        },
        dev_fraction: 0.0,
        seed,
    };

    let mut projectors = BTreeMap::new();
    let mut summary = Vec::new();
    let mut per_iteration = Vec::new();
    for &layer in &layers {
        let samples = probing_samples(&inputs.corpus, &inputs.dumps, &targets, layer, Pooling::PerToken)?;
        let (mut train, mut dev) = (Vec::new(), Vec::new());
        for (i, id) in samples.sentence_ids.iter().enumerate() {
            let f = fold_of[id];
            if rot.train.contains(&f) {
                train.push(i);
            } else if f == rot.dev {
                dev.push(i);
            }
        }
        let pick = |rows: &[usize]| -> Vec<bool> { rows.iter().map(|&i| samples.y[i]).collect() };
        let proj = inlp_train_with_dev(
            &rows_of(&samples.x, &train),
            &pick(&train),
            &rows_of(&samples.x, &dev),
            &pick(&dev),
            &cfg,
        )
        .with_context(|| format!("training projector for layer {layer}"))?;
        summary.push(InlpRow {
            layer,
            directions: proj.rank_removed(),
            first_accuracy: proj.accuracies.first().copied().filter(|v| v.is_finite()),
            last_accuracy: proj.accuracies.last().copied().filter(|v| v.is_finite()),
            residual_accuracy: proj.residual_accuracy,
            majority_rate: proj.majority_rate,
            n_train: train.len(),
            n_dev: dev.len(),
        });
        per_iteration.extend(proj.accuracies.iter().enumerate().map(|(i, &acc)| AccuracyRow {
            layer,
            iteration: i,
            dev_accuracy: acc,
        }));
        projectors.insert(layer, proj);
    }
    write_via_path(&a.out, |p| write_projectors(p, &projectors))?;
    if let Some(p) = &a.report {
        write_csv(
            p,
            &summary,
            &[
                "layer",
                "directions",
                "first_accuracy",
                "last_accuracy",
                "residual_accuracy",
                "majority_rate",
                "n_train",
                "n_dev",
            ],
        )?;
    }
    if let Some(p) = &a.accuracies {
        write_csv(p, &per_iteration, &["layer", "iteration", "dev_accuracy"])?;
    }
    Ok(())
}

/// Labels and translations restricted to `ids`.
fn restrict(labels: &LabelSet, translations: &TranslationSet, ids: &BTreeSet<String>) -> (LabelSet, TranslationSet) {
    let mut l = LabelSet::default();
    for x in labels.iter().filter(|x| ids.contains(&x.sentence_id)) {
        l.insert(x.clone());
    }
    let t = translations
        .iter()
        .filter(|(k, _)| ids.contains(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    (l, t)
}

/// The intervention set: sentences of `subset` under the pre-intervention labels.
struct Baseline {
    corpus: CorpusSet,
    lexicon: LiteralLexicon,
    ids: BTreeSet<String>,
    labels: LabelSet,
    translations: TranslationSet,
}

fn baseline(corpus: &Path, lexicon: &Path, translations: &Path, subset: Subset) -> Result<Baseline> {
    let corpus = read_corpus(corpus)?;
    let lexicon = load_lexicon(lexicon)?;
    let translations = load_translations(translations)?;
    let all = label_corpus(&corpus, &translations, &lexicon)?;
    let ids: BTreeSet<String> = corpus
        .iter()
        .filter(|s| all.get(&s.id).is_some() && subset.contains(s, Some(&all)))
        .map(|s| s.id.clone())
        .collect();
    let (labels, translations) = restrict(&all, &translations, &ids);
    Ok(Baseline {
        corpus,
        lexicon,
        ids,
        labels,
        translations,
    })
}

fn post_labels(b: &Baseline, path: &Path) -> Result<(LabelSet, TranslationSet)> {
    let post = load_translations(path).with_context(|| format!("reading {}", path.display()))?;
    let (_, post) = restrict(&LabelSet::default(), &post, &b.ids);
    let labels = label_corpus(&b.corpus, &post, &b.lexicon)?;
    Ok((labels, post))
}

pub fn inlp_eval(a: &InlpEvalArgs) -> Result<()> {
    let subset: Subset = parse_flag("subset", &a.subset)?;
    if subset != Subset::FigPar && subset != Subset::LitPar {
        return usage("--subset must be a paraphrase subset (fig-par or lit-par)");
    }
    let b = baseline(&a.corpus, &a.lexicon, &a.translations, subset)?;
    let (post, post_translations) = post_labels(&b, &a.post)?;
    let report = amnesic_success(
        &InterventionOutcome {
            pre_labels: &b.labels,
            post_labels: &post,
            pre_translations: &b.translations,
            post_translations: &post_translations,
        },
        &b.corpus,
    )?;
    write_json(&a.out, &report)?;
    if let Some(out) = &a.attn_out {
        let (Some(normal), Some(projected)) = (&a.dump, &a.projected) else {
            return usage("--attn-out needs --dump and --projected");
        };
        let rows = inlp_attention_delta(
            &b.corpus,
            Some(&b.labels),
            subset,
            &read_dumps(normal)?,
            &read_dumps(projected)?,
            ProfileOptions::default(),
        )?;
        write_csv(out, &rows, &["analysis", "layer", "normal", "projected", "delta", "n"])?;
    }
    Ok(())
}

struct DirectoryRunner<'a> {
    baseline: &'a Baseline,
    dir: PathBuf,
}

impl InterventionRunner for DirectoryRunner<'_> {
    fn run(&mut self, layers: &BTreeSet<usize>) -> idiolens_core::Result<(LabelSet, TranslationSet)> {
        let name = idiolens_core::probe::amnesic::layer_set_name(layers);
        let path = self.dir.join(&name).join("translations.jsonl");
        post_labels(self.baseline, &path).map_err(|e| match e.downcast::<Error>() {
            Ok(core) => core,
            Err(other) => Error::MissingInput(format!("{name}: {other:#}")),
        })
    }
}

fn parse_layer_set(name: &str) -> Option<BTreeSet<usize>> {
    name.split('-').map(|p| p.parse().ok()).collect()
}

#[derive(Serialize)]
struct SweepOut {
    language: String,
    layers: String,
    success: f64,
    bleu: Option<f64>,
    flipped: usize,
    total: usize,
}

pub fn inlp_sweep(a: &InlpSweepArgs, seed: u64) -> Result<()> {
    let mut b = baseline(&a.corpus, &a.lexicon, &a.translations, Subset::FigPar)?;
    if let Some(r) = a.rotation {
        if r >= a.folds {
            return usage(format!("--rotation {r} needs fewer than --folds {}", a.folds));
        }
        let fig_labelled = b
            .corpus
            .iter()
            .filter(|s| s.gold_label == GoldLabel::Figurative)
            .map(|s| s.id.clone());
        let fold_of = sentence_folds(&b.corpus, fig_labelled, a.folds, seed)?;
        let test = rotation(r, a.folds).test;
        b.ids.retain(|id| fold_of.get(id) == Some(&test));
        let (l, t) = restrict(&b.labels, &b.translations, &b.ids);
        b.labels = l;
        b.translations = t;
    }
    let mut subsets: Vec<BTreeSet<usize>> = Vec::new();
    let entries = std::fs::read_dir(&a.sweep_dir).map_err(|e| Error::io(&a.sweep_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&a.sweep_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        match parse_layer_set(&name) {
            Some(set) if entry.path().is_dir() => subsets.push(set),
            _ => log::warn!("ignoring `{name}` in the sweep directory"),
        }
    }
    subsets.sort_by(|x, y| (x.len(), x).cmp(&(y.len(), y)));
    subsets.insert(0, BTreeSet::new());
    let mut runner = DirectoryRunner {
        baseline: &b,
        dir: a.sweep_dir.clone(),
    };
    let rows = layer_selection_sweep(&mut runner, &subsets, &b.labels, &b.translations, &b.corpus)?;
    let rows: Vec<SweepOut> = rows
        .into_iter()
        .map(|r| SweepOut {
            language: a.language.clone(),
            layers: r.layers,
            success: r.success,
            bleu: r.bleu,
            flipped: r.flipped,
            total: r.total,
        })
        .collect();
    write_csv(
        &a.out,
        &rows,
        &["language", "layers", "success", "bleu", "flipped", "total"],
    )
}
