use anyhow::{Context, Result};
use idiolens_core::attnstats::{
    collect_profile, difference_rows, summarize, Analysis, Heads, ProfileInputs, ProfileOptions, StatRow,
};
use idiolens_core::corpus::Subset;
use idiolens_core::dumpio::{load_alignments, AlignmentSet};

use super::{dump_inputs, parse_flag, read_corpus};
use crate::args::AttnArgs;
use crate::output::write_csv;
use crate::usage;

pub const DIFFERENCE: &str = "fig-par-minus-lit-wfw";

const HEADER: [&str; 11] = [
    "language",
    "analysis",
    "subset",
    "layer",
    "mean",
    "q1",
    "median",
    "q3",
    "lo_whisker",
    "hi_whisker",
    "n",
];

pub fn run(a: &AttnArgs, cross: bool) -> Result<()> {
    let analysis: Analysis = parse_flag("analysis", &a.analysis)?;
    if analysis.is_cross() != cross {
        let (cmd, other) = if cross { ("xattn", "attn") } else { ("attn", "xattn") };
        return usage(format!("{cmd} does not compute {analysis}; use {other}"));
    }
    let inputs = dump_inputs(&a.input)?;

    // alignment lines follow the unfiltered corpus; re-index them
    let alignments = match (&a.alignments, cross) {
        (Some(path), _) => {
            let corpus_path = a
                .input
                .corpus
                .clone()
                .unwrap_or_else(|| a.input.dump.join("corpus.jsonl"));
            let full = read_corpus(&corpus_path)?;
            let set = load_alignments(path).with_context(|| format!("reading alignments {}", path.display()))?;
            set.validate(&full, None)?;
            let lines = inputs
                .corpus
                .iter()
                .map(|s| set.for_sentence(&full, &s.id).cloned().unwrap_or_default())
                .collect();
            Some(AlignmentSet::from_lines(lines))
        }
        (None, true) => return usage("xattn needs --alignments"),
        (None, false) => None,
    };

    let options = ProfileOptions {
        heads: a.head.map_or(Heads::Mean, Heads::Single),
        ctx2pie_all_words: a.all_context_words,
    };
    let profile_inputs = ProfileInputs {
        corpus: &inputs.corpus,
        dumps: &inputs.dumps,
        labels: inputs.labels.as_ref(),
        alignments: alignments.as_ref(),
        options,
    };
    let rows: Vec<StatRow> = if a.subset == DIFFERENCE {
        let par = collect_profile(&profile_inputs, analysis, Subset::FigPar)?;
        let wfw = collect_profile(&profile_inputs, analysis, Subset::LitWfw)?;
        difference_rows(&par, &wfw, &a.language)?
    } else {
        let subset: Subset = parse_flag("subset", &a.subset)?;
        let profile = collect_profile(&profile_inputs, analysis, subset)?;
        if profile.skipped > 0 {
            log::info!("{analysis}/{subset}: {} sentences skipped", profile.skipped);
        }
        summarize(&profile, &a.language)
    };
    write_csv(&a.out, &rows, &HEADER)
}
