mod attn;
mod cca;
mod data;
mod probe;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use idiolens_core::corpus::{filter_subset, load_corpus, CorpusSet, SubsetFilter};
use idiolens_core::dumpio::{ActivationDump, DumpStore};
use idiolens_core::labeler::{load_labels, LabelSet};

use crate::args::{Command, DumpArgs};
use crate::usage;

pub fn dispatch(cmd: &Command, seed: u64) -> Result<()> {
    match cmd {
        Command::Convert(a) => data::convert(a),
        Command::Label(a) => data::label(a),
        Command::Distribution(a) => data::distribution(a),
        Command::Agreement(a) => data::agreement(a),
        Command::Crosstab(a) => data::crosstab(a),
        Command::Lengths(a) => data::lengths(a),
        Command::Report(a) => data::report(a),
        Command::Attn(a) => attn::run(a, false),
        Command::Xattn(a) => attn::run(a, true),
        Command::CcaFit(a) => cca::fit(a, seed),
        Command::CcaLayers(a) => cca::layers(a),
        Command::CcaMask(a) => cca::mask(a),
        Command::Probe(a) => probe::probe(a, seed),
        Command::InlpTrain(a) => probe::inlp_train(a, seed),
        Command::InlpEval(a) => probe::inlp_eval(a),
        Command::InlpSweep(a) => probe::inlp_sweep(a, seed),
    }
}

/// Parse a flag value with the library's own parser, reporting failures as
/// usage errors.
fn parse_flag<T>(flag: &str, value: &str) -> Result<T>
where
    T: FromStr<Err = idiolens_core::Error>,
{
    value.parse().or_else(|e| usage(format!("--{flag}: {e}")))
}

fn read_corpus(path: &Path) -> Result<CorpusSet> {
    load_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn read_labels(path: Option<&PathBuf>) -> Result<Option<LabelSet>> {
    path.map(|p| load_labels(p).with_context(|| format!("reading labels {}", p.display())))
        .transpose()
}

fn read_dumps(dir: &Path) -> Result<BTreeMap<String, ActivationDump>> {
    let store = DumpStore::open(dir).with_context(|| format!("opening dump directory {}", dir.display()))?;
    let dumps = store
        .load_all()
        .with_context(|| format!("reading dumps in {}", dir.display()))?;
    for d in dumps.values() {
        for w in d.validate() {
            log::warn!("{w}");
        }
    }
    Ok(dumps)
}

fn filtered(corpus: CorpusSet, filter: &str, labels: Option<&LabelSet>) -> Result<CorpusSet> {
    let f: SubsetFilter = parse_flag("filter", filter)?;
    if f == SubsetFilter::All {
        return Ok(corpus);
    }
    Ok(filter_subset(&corpus, f, labels)?)
}

/// Corpus (filtered), labels and dumps named by the shared dump flags.
struct DumpInputs {
    corpus: CorpusSet,
    labels: Option<LabelSet>,
    dumps: BTreeMap<String, ActivationDump>,
}

fn dump_inputs(a: &DumpArgs) -> Result<DumpInputs> {
    let corpus_path = a.corpus.clone().unwrap_or_else(|| a.dump.join("corpus.jsonl"));
    let labels = read_labels(a.labels.as_ref())?;
    let corpus = filtered(read_corpus(&corpus_path)?, &a.filter.filter, labels.as_ref())?;
    Ok(DumpInputs {
        corpus,
        labels,
        dumps: read_dumps(&a.dump)?,
    })
}
