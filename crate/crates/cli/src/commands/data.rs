use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use anyhow::{Context, Result};
use idiolens_core::corpus::magpie::{convert_magpie, read_keyword_table, ConvertOptions};
use idiolens_core::corpus::{length_stats, GoldLabel, Subset};
use idiolens_core::dumpio::align::MAX_UNALIGNED_FRACTION;
use idiolens_core::dumpio::{aligned_target_token, load_alignments, DumpStore};
use idiolens_core::labeler::{
    agreement_matrix, casefold_word, crosstab_with_reference, label_corpus, label_distribution, load_lexicon,
    load_translations, read_genetic_similarity, GeneticSimilarity, Label2, LabelSet,
};
use idiolens_core::Error;
use serde::Serialize;

use super::{filtered, read_corpus, read_labels};
use crate::args::{AgreementArgs, ConvertArgs, CrosstabArgs, DistributionArgs, LabelArgs, LengthsArgs, ReportArgs};
use crate::output::{write_csv, write_json, write_with};
use crate::usage;

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufReader::new(f))
}

pub fn convert(a: &ConvertArgs) -> Result<()> {
    let keywords = read_keyword_table(open(&a.keywords)?).context("reading keyword table")?;
    let mut nouns = HashSet::new();
    if let Some(p) = &a.nouns {
        for line in open(p)?.lines() {
            let w = casefold_word(line.map_err(|e| Error::io(p, e))?.trim());
            if !w.is_empty() {
                nouns.insert(w);
            }
        }
    }
    let opts = ConvertOptions {
        keywords,
        nouns,
        min_confidence: a.min_confidence,
    };
    let (corpus, report) = convert_magpie(open(&a.magpie)?, &opts).context("converting MAGPIE")?;
    log::info!("kept {} sentences", report.kept);
    for (reason, n) in &report.skipped {
        log::info!("skipped {n}: {reason}");
    }
    write_with(&a.out, |w| Ok(corpus.write_jsonl(w)?))
}

pub fn label(a: &LabelArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let translations = load_translations(&a.translations)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let labels = label_corpus(&corpus, &translations, &lexicon)?;
    let missing = corpus.len().saturating_sub(labels.len());
    if missing > 0 {
        log::warn!("{missing} sentences have no translation");
    }
    write_with(&a.out, |w| Ok(labels.write_jsonl(w)?))
}

pub fn distribution(a: &DistributionArgs) -> Result<()> {
    let labels = read_labels(Some(&a.labels))?.expect("path given");
    let corpus = filtered(read_corpus(&a.corpus)?, &a.filter.filter, Some(&labels))?;
    let mut kept = LabelSet::default();
    for l in labels.iter().filter(|l| corpus.contains(&l.sentence_id)) {
        kept.insert(l.clone());
    }
    let rows = label_distribution(&kept, &corpus)?;
    write_csv(
        &a.out,
        &rows,
        &["gold_label", "n", "paraphrase_pct", "word_for_word_pct", "copy_pct"],
    )
}

#[derive(Serialize)]
struct AgreementSummary {
    languages: Vec<String>,
    pearson_r: Option<f64>,
}

pub fn agreement(a: &AgreementArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let mut by_lang = BTreeMap::new();
    for spec in &a.labels {
        let Some((lang, path)) = spec.split_once('=') else {
            return usage(format!("--labels expects lang=path, got `{spec}`"));
        };
        let labels = read_labels(Some(&path.into()))?.expect("path given");
        if by_lang.insert(lang.to_string(), labels).is_some() {
            return usage(format!("language `{lang}` given twice"));
        }
    }
    let sim = match &a.genetic {
        Some(p) => read_genetic_similarity(open(p)?)?,
        None => GeneticSimilarity::default(),
    };
    let report = agreement_matrix(&by_lang, &corpus, &sim)?;
    write_csv(
        &a.out,
        &report.entries,
        &["target", "prediction", "macro_f1", "n", "genetic_similarity"],
    )?;
    if let Some(p) = &a.summary {
        write_json(
            p,
            &AgreementSummary {
                languages: by_lang.keys().cloned().collect(),
                pearson_r: report.pearson_r,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CrosstabRow {
    reference: Label2,
    model: Label2,
    n: usize,
    row_pct: f64,
    reference_share_pct: f64,
    bleu: Option<f64>,
}

pub fn crosstab(a: &CrosstabArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let model = load_translations(&a.translations)?;
    let reference = load_translations(&a.reference)?;
    let both: Vec<String> = model.keys().filter(|k| reference.contains_key(*k)).cloned().collect();
    if both.len() < model.len().max(reference.len()) {
        log::warn!(
            "{} sentences lack a model or reference translation",
            model.len().max(reference.len()) - both.len()
        );
    }
    let keep = |set: &idiolens_core::TranslationSet| {
        set.iter()
            .filter(|(k, _)| both.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<idiolens_core::TranslationSet>()
    };
    let (model, reference) = (keep(&model), keep(&reference));
    let model_labels = label_corpus(&corpus, &model, &lexicon)?;
    let reference_labels = label_corpus(&corpus, &reference, &lexicon)?;
    let table = crosstab_with_reference(&model_labels, &reference_labels, &model, &reference)?;
    let share: BTreeMap<Label2, f64> = table.reference_share.iter().copied().collect();
    let rows: Vec<CrosstabRow> = table
        .cells
        .iter()
        .map(|c| CrosstabRow {
            reference: c.reference,
            model: c.model,
            n: c.n,
            row_pct: c.row_pct,
            reference_share_pct: share[&c.reference],
            bleu: c.bleu,
        })
        .collect();
    write_csv(
        &a.out,
        &rows,
        &["reference", "model", "n", "row_pct", "reference_share_pct", "bleu"],
    )
}

#[derive(Serialize)]
struct LengthRow {
    category: String,
    n: usize,
    avg_pie_tokens: f64,
    avg_span_distance: f64,
    avg_relative_position: f64,
    avg_context_length: f64,
}

pub fn lengths(a: &LengthsArgs) -> Result<()> {
    let labels = read_labels(a.labels.as_ref())?;
    let corpus = filtered(read_corpus(&a.corpus)?, &a.filter.filter, labels.as_ref())?;
    let mut cats = vec![Subset::All, Subset::Fig, Subset::Lit];
    if labels.is_some() {
        cats.extend([Subset::FigPar, Subset::FigWfw, Subset::LitPar, Subset::LitWfw]);
    }
    let mut rows = Vec::new();
    for c in cats {
        match length_stats(&corpus, c, labels.as_ref()) {
            Ok(s) => rows.push(LengthRow {
                category: c.to_string(),
                n: s.n,
                avg_pie_tokens: s.avg_pie_tokens,
                avg_span_distance: s.avg_span_distance,
                avg_relative_position: s.avg_relative_position,
                avg_context_length: s.avg_context_length,
            }),
            Err(Error::EmptySet(msg)) => log::warn!("{msg}; omitted"),
            Err(e) => return Err(e.into()),
        }
    }
    write_csv(
        &a.out,
        &rows,
        &[
            "category",
            "n",
            "avg_pie_tokens",
            "avg_span_distance",
            "avg_relative_position",
            "avg_context_length",
        ],
    )
}

#[derive(Serialize)]
struct AlignmentSummary {
    lines: usize,
    keywords: usize,
    unaligned_keywords: usize,
    unaligned_fraction: f64,
    above_threshold: bool,
}

#[derive(Serialize)]
struct DumpSummary {
    dumps: usize,
    sentences_without_dump: usize,
    layers: Option<usize>,
    heads: Option<usize>,
    hidden_dim: Option<usize>,
    row_sum_warnings: usize,
}

#[derive(Serialize)]
struct Report {
    sentences: usize,
    figurative: usize,
    literal: usize,
    idioms: usize,
    identical_match: usize,
    translations: Option<usize>,
    label_distribution: Option<Vec<idiolens_core::labeler::DistributionRow>>,
    alignments: Option<AlignmentSummary>,
    dumps: Option<DumpSummary>,
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let count = |g: GoldLabel| corpus.iter().filter(|s| s.gold_label == g).count();
    let labels = read_labels(a.labels.as_ref())?;
    let translations = a.translations.as_ref().map(load_translations).transpose()?;
    let alignments = match &a.alignments {
        Some(p) => {
            let set = load_alignments(p)?;
            set.validate(&corpus, translations.as_ref())?;
            let mut keywords = 0;
            let mut unaligned = 0;
            for (i, s) in corpus.iter().enumerate() {
                let pairs = set.line(i).expect("line count validated");
                for &k in &s.keyword_indices {
                    keywords += 1;
                    if aligned_target_token(pairs, k).is_none() {
                        unaligned += 1;
                    }
                }
            }
            let fraction = if keywords > 0 {
                unaligned as f64 / keywords as f64
            } else {
                0.0
            };
            if fraction > MAX_UNALIGNED_FRACTION {
                log::warn!(
                    "{:.1}% of keywords have no alignment (threshold {:.0}%)",
                    100.0 * fraction,
                    100.0 * MAX_UNALIGNED_FRACTION
                );
            }
            Some(AlignmentSummary {
                lines: set.len(),
                keywords,
                unaligned_keywords: unaligned,
                unaligned_fraction: fraction,
                above_threshold: fraction > MAX_UNALIGNED_FRACTION,
            })
        }
        None => None,
    };
    let dumps = match &a.dump {
        Some(dir) => {
            let all = DumpStore::open(dir)?.load_all()?;
            let first = all.values().next();
            Some(DumpSummary {
                dumps: all.len(),
                sentences_without_dump: corpus.iter().filter(|s| !all.contains_key(&s.id)).count(),
                layers: first.map(|d| d.num_layers()),
                heads: first.map(|d| d.num_heads()),
                hidden_dim: first.map(|d| d.hidden_dim()),
                row_sum_warnings: all.values().map(|d| d.validate().len()).sum(),
            })
        }
        None => None,
    };
    let report = Report {
        sentences: corpus.len(),
        figurative: count(GoldLabel::Figurative),
        literal: count(GoldLabel::Literal),
        idioms: idiolens_core::corpus::idiom_counts(&corpus).len(),
        identical_match: corpus.iter().filter(|s| s.identical_match).count(),
        translations: translations.as_ref().map(|t| t.len()),
        label_distribution: labels.as_ref().map(|l| label_distribution(l, &corpus)).transpose()?,
        alignments,
        dumps,
    };
    write_json(&a.out, &report)
}
