use anyhow::{Context, Result};
use idiolens_core::corpus::Subset;
use idiolens_core::repr::{
    fit_layer_bank, fit_mask_bank, layer_similarity, mask_influence, read_bank, select_tokens, write_bank,
    SimilarityInputs, TokenClass, DEFAULT_MIN_TOKENS,
};

use super::{dump_inputs, parse_flag, read_dumps};
use crate::args::{CcaFitArgs, CcaLayersArgs, CcaMaskArgs};
use crate::output::{write_csv, write_via_path};

pub fn fit(a: &CcaFitArgs, seed: u64) -> Result<()> {
    let class: TokenClass = parse_flag("class", &a.class)?;
    let inputs = dump_inputs(&a.input)?;
    let bank = match &a.masked {
        Some(dir) => {
            let masked = read_dumps(dir)?;
            fit_mask_bank(
                &inputs.corpus,
                &inputs.dumps,
                &masked,
                class,
                Some(a.pool_size),
                seed,
                a.ridge,
            )?
        }
        None => {
            let pool = select_tokens(&inputs.corpus, &inputs.dumps, class, Some(a.pool_size), seed);
            log::info!("fitting on {} {class} tokens", pool.len());
            fit_layer_bank(&inputs.dumps, &pool, a.ridge)?
        }
    };
    write_via_path(&a.out, |p| write_bank(p, &bank))
}

pub fn layers(a: &CcaLayersArgs) -> Result<()> {
    let class: TokenClass = parse_flag("class", &a.class)?;
    let subset: Subset = parse_flag("subset", &a.subset)?;
    let inputs = dump_inputs(&a.input)?;
    let bank = read_bank(&a.bank).with_context(|| format!("reading projections {}", a.bank.display()))?;
    let sim = SimilarityInputs {
        corpus: &inputs.corpus,
        labels: inputs.labels.as_ref(),
        min_tokens: a.min_tokens,
    };
    let rows = layer_similarity(&sim, &inputs.dumps, &bank, subset, class)?;
    write_csv(
        &a.out,
        &rows,
        &["layer_pair", "subset", "token_class", "similarity", "n"],
    )
}

pub fn mask(a: &CcaMaskArgs) -> Result<()> {
    let class: TokenClass = parse_flag("class", &a.class)?;
    let subset: Subset = parse_flag("subset", &a.subset)?;
    let inputs = dump_inputs(&a.input)?;
    let masked = read_dumps(&a.masked)?;
    let bank = read_bank(&a.bank).with_context(|| format!("reading projections {}", a.bank.display()))?;
    let sim = SimilarityInputs {
        corpus: &inputs.corpus,
        labels: inputs.labels.as_ref(),
        min_tokens: DEFAULT_MIN_TOKENS,
    };
    let rows = mask_influence(&sim, &inputs.dumps, &masked, &bank, subset, class)?;
    write_csv(&a.out, &rows, &["layer", "subset", "token_class", "similarity", "n"])
}
