//! Canonical correlation analysis between hidden-state sets.
//!
//! Matrices hold one sample per column (`d x N`). Projections can be fitted
//! once on a held-out pool and reused on other data, or refitted per subset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::corpus::{CorpusSet, PieSentence, Subset};
use crate::dumpio::{read_records_from, write_records_to, ActdRecord, ActivationDump, Tensor, Variant};
use crate::error::{Error, Result};
use crate::labeler::LabelSet;

pub const DEFAULT_RIDGE: f64 = 1e-5;
pub const DEFAULT_POOL_SIZE: usize = 60_000;
pub const DEFAULT_MIN_TOKENS: usize = 20;
pub const PROJECTION_KIND: &str = "cca_projection";

#[derive(Debug, Clone, PartialEq)]
pub struct CcaProjection {
    /// `r x d_A`
    pub w: DMatrix<f64>,
    /// `r x d_B`
    pub v: DMatrix<f64>,
    pub mean_a: DVector<f64>,
    pub mean_b: DVector<f64>,
    /// Canonical correlations, non-increasing, in `[0, 1]`.
    pub rho: Vec<f64>,
    pub ridge: f64,
}

fn check_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} contains non-finite values")))
    }
}

fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

fn centered(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

fn inv_sqrt(s: DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = max * 1e-12;
    if max <= 0.0 || eig.eigenvalues.iter().any(|&l| l <= floor) {
        return Err(Error::Conditioning(format!("{name} covariance is singular")));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fit CCA between `a` (`d_A x N`) and `b` (`d_B x N`). `ridge` is relative:
/// `ridge * trace / d` is added to the diagonal of each covariance.
pub fn fit_cca(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<CcaProjection> {
    let (da, db, n) = (a.nrows(), b.nrows(), a.ncols());
    if b.ncols() != n {
        return Err(Error::Input(format!("{n} samples in A but {} in B", b.ncols())));
    }
    if da == 0 || db == 0 {
        return Err(Error::Input("empty feature dimension".into()));
    }
    check_finite(a, "A")?;
    check_finite(b, "B")?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Input(format!("ridge must be non-negative, got {ridge}")));
    }
    if n <= da.max(db) {
        return Err(Error::Conditioning(format!("{n} samples for dimensions {da} and {db}")));
    }
    let mean_a = row_means(a);
    let mean_b = row_means(b);
    let ac = centered(a, &mean_a);
    let bc = centered(b, &mean_b);
    let scale = 1.0 / (n - 1) as f64;
    let regularize = |mut s: DMatrix<f64>| {
        let reg = ridge * s.trace() / s.nrows() as f64;
        for i in 0..s.nrows() {
            s[(i, i)] += reg;
        }
        s
    };
    let saa = regularize(&ac * ac.transpose() * scale);
    let sbb = regularize(&bc * bc.transpose() * scale);
    let sab = &ac * bc.transpose() * scale;

    let wa = inv_sqrt(saa, "A")?;
    let wb = inv_sqrt(sbb, "B")?;
    let m = &wa * sab * &wb;
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
    let r = da.min(db);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut w = DMatrix::zeros(r, da);
    let mut v = DMatrix::zeros(r, db);
    let mut rho = Vec::with_capacity(r);
    let wa_t = wa.transpose();
    for (row, &i) in order.iter().enumerate() {
        w.set_row(row, &(u.column(i).transpose() * &wa_t));
        v.set_row(row, &(vt.row(i) * &wb));
        rho.push(svd.singular_values[i].clamp(0.0, 1.0));
    }
    if w.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite canonical directions".into()));
    }
    Ok(CcaProjection {
        w,
        v,
        mean_a,
        mean_b,
        rho,
        ridge,
    })
}

fn pearson_rows(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // variance at rounding level counts as zero
    let tiny = 1e-20 * n;
    if sxx <= tiny || syy <= tiny {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

impl CcaProjection {
    pub fn dims(&self) -> (usize, usize) {
        (self.w.ncols(), self.v.ncols())
    }

    pub fn mean_rho(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }

    /// Mean Pearson correlation of paired projected coordinates.
    pub fn similarity(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
        let (da, db) = self.dims();
        if a.nrows() != da || b.nrows() != db {
            return Err(Error::Input(format!(
                "projection expects dimensions {da}/{db}, got {}/{}",
                a.nrows(),
                b.nrows()
            )));
        }
        if a.ncols() != b.ncols() {
            return Err(Error::Input(format!(
                "{} samples in A but {} in B",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.ncols() < 2 {
            return Err(Error::UndefinedCorrelation(format!("{} paired samples", a.ncols())));
        }
        check_finite(a, "A")?;
        check_finite(b, "B")?;
        let pa = &self.w * centered(a, &self.mean_a);
        let pb = &self.v * centered(b, &self.mean_b);
        let r = pa.nrows();
        let total: f64 = (0..r)
            .map(|i| {
                let x: Vec<f64> = pa.row(i).iter().copied().collect();
                let y: Vec<f64> = pb.row(i).iter().copied().collect();
                pearson_rows(&x, &y)
            })
            .sum();
        Ok(total / r as f64)
    }

    pub fn to_record(&self, key: &str) -> ActdRecord {
        let (da, db) = self.dims();
        let r = self.rho.len();
        let mut meta = serde_json::Map::new();
        meta.insert("kind".into(), PROJECTION_KIND.into());
        meta.insert("key".into(), key.into());
        meta.insert("ridge".into(), self.ridge.into());
        let roles: serde_json::Map<String, Value> = [
            ("W", "map A onto canonical directions"),
            ("V", "map B onto canonical directions"),
            ("mean_A", "centering vector for A"),
            ("mean_B", "centering vector for B"),
            ("rho", "canonical correlations"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::from(v)))
        .collect();
        meta.insert("roles".into(), Value::Object(roles));
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        ActdRecord::new(meta)
            .with_tensor("W", Tensor::f64(vec![r, da], row_major(&self.w)).expect("shape"))
            .with_tensor("V", Tensor::f64(vec![r, db], row_major(&self.v)).expect("shape"))
            .with_tensor(
                "mean_A",
                Tensor::f64(vec![da], self.mean_a.as_slice().to_vec()).expect("shape"),
            )
            .with_tensor(
                "mean_B",
                Tensor::f64(vec![db], self.mean_b.as_slice().to_vec()).expect("shape"),
            )
            .with_tensor("rho", Tensor::f64(vec![r], self.rho.clone()).expect("shape"))
    }

    /// Returns the projection and its key.
    pub fn from_record(rec: &ActdRecord) -> Result<(String, Self)> {
        if rec.kind() != Some(PROJECTION_KIND) {
            return Err(Error::Metadata(format!(
                "expected a CCA projection, found kind {:?}",
                rec.kind()
            )));
        }
        let key = rec
            .meta
            .get("key")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let ridge = rec.meta.get("ridge").and_then(Value::as_f64).unwrap_or(DEFAULT_RIDGE);
        let get = |name: &str| {
            rec.tensor(name)
                .ok_or_else(|| Error::Metadata(format!("projection `{key}` lacks tensor {name}")))
        };
        let matrix = |t: &Tensor| -> Result<DMatrix<f64>> {
            match t.dims() {
                [r, c] => Ok(DMatrix::from_row_slice(*r, *c, &t.to_f64_vec())),
                d => Err(Error::Metadata(format!("expected a matrix, got dims {d:?}"))),
            }
        };
        let w = matrix(get("W")?)?;
        let v = matrix(get("V")?)?;
        let mean_a = DVector::from_vec(get("mean_A")?.to_f64_vec());
        let mean_b = DVector::from_vec(get("mean_B")?.to_f64_vec());
        let rho = get("rho")?.to_f64_vec();
        if w.nrows() != rho.len() || v.nrows() != rho.len() || mean_a.len() != w.ncols() || mean_b.len() != v.ncols() {
            return Err(Error::Metadata(format!("projection `{key}` has inconsistent shapes")));
        }
        Ok((
            key,
            CcaProjection {
                w,
                v,
                mean_a,
                mean_b,
                rho,
                ridge,
            },
        ))
    }
}

/// Similarity of `a` and `b` under a projection fitted on other data.
pub fn cca_similarity(proj: &CcaProjection, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    proj.similarity(a, b)
}

/// Fit on `a`, `b` and evaluate on the same data: the per-subset baseline.
pub fn refit_similarity(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<f64> {
    fit_cca(a, b, ridge)?.similarity(a, b)
}

/// Projections keyed by layer index: for layer similarity the key `l` maps
/// layer `l` to `l + 1`; for masking it compares normal and masked layer `l`.
pub type ProjectionBank = BTreeMap<usize, CcaProjection>;

pub fn write_bank(path: &Path, bank: &ProjectionBank) -> Result<()> {
    let records: Vec<ActdRecord> = bank.iter().map(|(l, p)| p.to_record(&l.to_string())).collect();
    write_records_to(path, &records)
}

pub fn read_bank(path: &Path) -> Result<ProjectionBank> {
    let mut bank = ProjectionBank::new();
    for rec in read_records_from(path)? {
        let (key, p) = CcaProjection::from_record(&rec)?;
        let layer: usize = key
            .parse()
            .map_err(|_| Error::Metadata(format!("projection key `{key}` is not a layer index")))?;
        if bank.insert(layer, p).is_some() {
            return Err(Error::DuplicateId(key));
        }
    }
    Ok(bank)
}

/// Which subtokens of a sentence enter an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenClass {
    /// Subtokens of the PIE's keywords.
    PieNoun,
    /// Subtokens of every PIE word.
    Pie,
    /// Subtokens of the annotated context nouns.
    ContextNoun,
    /// Subtokens of every word outside the PIE.
    NonPie,
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenClass::PieNoun => "pie-noun",
            TokenClass::Pie => "pie",
            TokenClass::ContextNoun => "context-noun",
            TokenClass::NonPie => "non-pie",
        })
    }
}

impl FromStr for TokenClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pie-noun" => TokenClass::PieNoun,
            "pie" => TokenClass::Pie,
            "context-noun" => TokenClass::ContextNoun,
            "non-pie" => TokenClass::NonPie,
            other => return Err(Error::Input(format!("unknown token class `{other}`"))),
        })
    }
}

/// Source subtoken indices of `class` in a sentence.
pub fn token_indices(dump: &ActivationDump, sentence: &PieSentence, class: TokenClass) -> Vec<usize> {
    let keep = |w: usize| match class {
        TokenClass::PieNoun => sentence.keyword_indices.contains(&w),
        TokenClass::Pie => sentence.is_pie(w),
        TokenClass::ContextNoun => sentence.context_noun_indices.contains(&w),
        TokenClass::NonPie => !sentence.is_pie(w),
    };
    dump.src_word_of
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_some_and(keep))
        .map(|(i, _)| i)
        .collect()
}

fn columns(vectors: &[&[f32]]) -> DMatrix<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    DMatrix::from_fn(d, vectors.len(), |r, c| vectors[c][r] as f64)
}

/// A sampled token: sentence id and subtoken index.
pub type TokenRef = (String, usize);

/// Tokens of `class` over all sentences with a dump, in corpus order,
/// subsampled to at most `max_tokens` with `seed`.
pub fn select_tokens(
    corpus: &CorpusSet,
    dumps: &BTreeMap<String, ActivationDump>,
    class: TokenClass,
    max_tokens: Option<usize>,
    seed: u64,
) -> Vec<TokenRef> {
    let mut out: Vec<TokenRef> = corpus
        .iter()
        .filter_map(|s| dumps.get(&s.id).map(|d| (s, d)))
        .flat_map(|(s, d)| token_indices(d, s, class).into_iter().map(move |t| (s.id.clone(), t)))
        .collect();
    if let Some(max) = max_tokens {
        if out.len() > max {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, out.len(), max).into_vec();
            keep.sort_unstable();
            out = keep.into_iter().map(|i| out[i].clone()).collect();
        }
    }
    out
}

fn gather(dumps: &BTreeMap<String, ActivationDump>, tokens: &[TokenRef], layer: usize) -> Result<DMatrix<f64>> {
    let vectors = tokens
        .iter()
        .map(|(id, t)| {
            let d = dumps
                .get(id)
                .ok_or_else(|| Error::Consistency(format!("no dump for sentence `{id}`")))?;
            if layer > d.num_layers() {
                return Err(Error::Input(format!("layer {layer} out of range for `{id}`")));
            }
            Ok(d.hidden(layer, *t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(columns(&vectors))
}

fn num_layers(dumps: &BTreeMap<String, ActivationDump>) -> Result<usize> {
    let mut it = dumps.values().map(ActivationDump::num_layers);
    let first = it.next().ok_or_else(|| Error::EmptySet("no activation dumps".into()))?;
    if it.any(|l| l != first) {
        return Err(Error::Consistency("dumps disagree on the number of layers".into()));
    }
    Ok(first)
}

/// Fit one projection per adjacent layer pair on a pool of token vectors.
pub fn fit_layer_bank(
    dumps: &BTreeMap<String, ActivationDump>,
    pool: &[TokenRef],
    ridge: f64,
) -> Result<ProjectionBank> {
    let layers = num_layers(dumps)?;
    let mut bank = ProjectionBank::new();
    for l in 0..layers {
        let a = gather(dumps, pool, l)?;
        let b = gather(dumps, pool, l + 1)?;
        bank.insert(l, fit_cca(&a, &b, ridge)?);
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRow {
    pub layer_pair: String,
    pub subset: String,
    pub token_class: TokenClass,
    pub similarity: f64,
    pub n: usize,
}

pub struct SimilarityInputs<'a> {
    pub corpus: &'a CorpusSet,
    pub labels: Option<&'a LabelSet>,
    pub min_tokens: usize,
}

fn subset_corpus(inputs: &SimilarityInputs<'_>, subset: Subset) -> Result<CorpusSet> {
    inputs.corpus.select(subset, inputs.labels)
}

/// Similarity of layer `l` and `l + 1` for every projection in `bank`.
pub fn layer_similarity(
    inputs: &SimilarityInputs<'_>,
    dumps: &BTreeMap<String, ActivationDump>,
    bank: &ProjectionBank,
    subset: Subset,
    class: TokenClass,
) -> Result<Vec<SimilarityRow>> {
    let corpus = subset_corpus(inputs, subset)?;
    let tokens = select_tokens(&corpus, dumps, class, None, 0);
    if tokens.len() < inputs.min_tokens.max(2) {
        log::warn!(
            "{subset}/{class}: {} tokens, fewer than {}; omitted",
            tokens.len(),
            inputs.min_tokens
        );
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for (&l, proj) in bank {
        let a = gather(dumps, &tokens, l)?;
        let b = gather(dumps, &tokens, l + 1)?;
        rows.push(SimilarityRow {
            layer_pair: format!("{}-{}", l, l + 1),
            subset: subset.to_string(),
            token_class: class,
            similarity: proj.similarity(&a, &b)?,
            n: tokens.len(),
        });
    }
    Ok(rows)
}

fn check_mask_pair(
    normal: &BTreeMap<String, ActivationDump>,
    masked: &BTreeMap<String, ActivationDump>,
) -> Result<Option<usize>> {
    let mut mask_layer = None;
    for (i, (id, m)) in masked.iter().enumerate() {
        let Variant::Masked { layer, .. } = m.variant else {
            return Err(Error::Consistency(format!(
                "dump `{id}` in the masked set is {:?}",
                m.variant
            )));
        };
        if i == 0 {
            mask_layer = layer;
        } else if layer != mask_layer {
            return Err(Error::Consistency(format!(
                "dump `{id}` masks layer {layer:?}, others {mask_layer:?}"
            )));
        }
        let n = normal
            .get(id)
            .ok_or_else(|| Error::Consistency(format!("no normal dump for `{id}`")))?;
        if n.variant != Variant::Normal {
            return Err(Error::Consistency(format!(
                "dump `{id}` in the normal set is {:?}",
                n.variant
            )));
        }
        if n.src_word_of != m.src_word_of || n.num_layers() != m.num_layers() || n.hidden_dim() != m.hidden_dim() {
            return Err(Error::Consistency(format!(
                "normal and masked dumps of `{id}` differ in shape"
            )));
        }
    }
    Ok(mask_layer)
}

/// Affected tokens: tokens of `class` in sentences with a masked dump,
/// excluding each sentence's masked token.
fn affected_tokens(corpus: &CorpusSet, masked: &BTreeMap<String, ActivationDump>, class: TokenClass) -> Vec<TokenRef> {
    corpus
        .iter()
        .filter_map(|s| masked.get(&s.id).map(|d| (s, d)))
        .flat_map(|(s, d)| {
            let Variant::Masked { token, .. } = d.variant else {
                unreachable!("checked")
            };
            token_indices(d, s, class)
                .into_iter()
                .filter(move |&t| t != token)
                .map(move |t| (s.id.clone(), t))
        })
        .collect()
}

/// Fit one normal-vs-masked projection per layer output (keys `0..L` compare
/// hidden states after layer `l + 1`, i.e. index `l + 1` in the dump).
pub fn fit_mask_bank(
    corpus: &CorpusSet,
    normal: &BTreeMap<String, ActivationDump>,
    masked: &BTreeMap<String, ActivationDump>,
    class: TokenClass,
    max_tokens: Option<usize>,
    seed: u64,
    ridge: f64,
) -> Result<ProjectionBank> {
    check_mask_pair(normal, masked)?;
    let mut tokens = affected_tokens(corpus, masked, class);
    if let Some(max) = max_tokens {
        if tokens.len() > max {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, tokens.len(), max).into_vec();
            keep.sort_unstable();
            tokens = keep.into_iter().map(|i| tokens[i].clone()).collect();
        }
    }
    let layers = num_layers(masked)?;
    let mut bank = ProjectionBank::new();
    for l in 0..layers {
        let a = gather(normal, &tokens, l + 1)?;
        let b = gather(masked, &tokens, l + 1)?;
        bank.insert(l, fit_cca(&a, &b, ridge)?);
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskInfluenceRow {
    pub layer: usize,
    pub subset: String,
    pub token_class: TokenClass,
    pub similarity: f64,
    pub n: usize,
}

/// Similarity between normal and masked hidden states of the affected tokens
/// after every layer; lower similarity means larger influence of the mask.
pub fn mask_influence(
    inputs: &SimilarityInputs<'_>,
    normal: &BTreeMap<String, ActivationDump>,
    masked: &BTreeMap<String, ActivationDump>,
    bank: &ProjectionBank,
    subset: Subset,
    class: TokenClass,
) -> Result<Vec<MaskInfluenceRow>> {
    check_mask_pair(normal, masked)?;
    let corpus = subset_corpus(inputs, subset)?;
    let tokens = affected_tokens(&corpus, masked, class);
    if tokens.is_empty() {
        return Err(Error::EmptySet(format!("no affected {class} tokens in {subset}")));
    }
    let mut rows = Vec::new();
    for (&l, proj) in bank {
        let a = gather(normal, &tokens, l + 1)?;
        let b = gather(masked, &tokens, l + 1)?;
        rows.push(MaskInfluenceRow {
            layer: l,
            subset: subset.to_string(),
            token_class: class,
            similarity: proj.similarity(&a, &b)?,
            n: tokens.len(),
        });
    }
    Ok(rows)
}
