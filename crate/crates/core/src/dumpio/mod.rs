//! Activation dumps: per-sentence attention and hidden states in the ACTD
//! container, plus word alignments.
//!
//! Word-level attention follows one convention throughout: attention into a
//! word is the sum over its subtoken key columns, attention from a word is the
//! mean over its subtoken query rows.

pub mod align;
pub mod container;
pub mod store;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use align::{aligned_target_token, load_alignments, read_alignments, AlignmentSet};
pub use container::{
    read_record, read_records_from, write_record, write_records_to, ActdRecord, RecordReader, Tensor, TensorData,
};
pub use store::{DumpStore, ManifestEntry};

use crate::error::{Error, Result};

/// Softmax rows must sum to one within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Variant {
    Normal,
    /// Other tokens could not attend to source subtoken `token` at `layer`.
    Masked {
        token: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        layer: Option<usize>,
    },
    /// Hidden states were projected with the named projector.
    Projected {
        projector: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub sentence_id: String,
    pub source_subtokens: Vec<String>,
    pub target_subtokens: Vec<String>,
    /// Word index of every source subtoken; `None` for special tokens such as `</s>`.
    pub src_word_of: Vec<Option<usize>>,
    pub tgt_word_of: Vec<Option<usize>>,
    pub eos_index: usize,
    /// `[L][H][S][S]`
    pub enc_self_attn: Tensor,
    /// `[L][H][T][S]`
    pub cross_attn: Option<Tensor>,
    /// `[L+1][S][D]`, index 0 holds the embeddings.
    pub enc_hidden: Tensor,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationWarning {
    pub sentence_id: String,
    pub tensor: &'static str,
    pub layer: usize,
    pub head: usize,
    pub row: usize,
    pub row_sum: f64,
}

impl std::fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} layer {} head {} row {} sums to {:.6}",
            self.sentence_id, self.tensor, self.layer, self.head, self.row, self.row_sum
        )
    }
}

#[derive(Serialize, Deserialize)]
struct DumpMeta {
    sentence_id: String,
    source_subtokens: Vec<String>,
    target_subtokens: Vec<String>,
    src_word_of: Vec<Option<usize>>,
    tgt_word_of: Vec<Option<usize>>,
    eos_index: usize,
    variant: Variant,
}

pub const DUMP_KIND: &str = "activation_dump";

impl ActivationDump {
    pub fn num_layers(&self) -> usize {
        self.enc_self_attn.dims()[0]
    }

    pub fn num_heads(&self) -> usize {
        self.enc_self_attn.dims()[1]
    }

    pub fn src_len(&self) -> usize {
        self.enc_self_attn.dims()[2]
    }

    pub fn tgt_len(&self) -> usize {
        self.cross_attn.as_ref().map_or(0, |t| t.dims()[2])
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_hidden.dims()[2]
    }

    fn f32s(t: &Tensor) -> &[f32] {
        t.as_f32().expect("dump tensors are f32")
    }

    pub fn self_attn_row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let (h, s) = (self.num_heads(), self.src_len());
        let start = ((layer * h + head) * s + query) * s;
        &Self::f32s(&self.enc_self_attn)[start..start + s]
    }

    pub fn cross_attn_row(&self, layer: usize, head: usize, target: usize) -> Option<&[f32]> {
        let t = self.cross_attn.as_ref()?;
        let (h, tl, s) = (t.dims()[1], t.dims()[2], t.dims()[3]);
        let start = ((layer * h + head) * tl + target) * s;
        Some(&Self::f32s(t)[start..start + s])
    }

    /// Hidden state of source subtoken `token` after `layer` (0 = embeddings).
    pub fn hidden(&self, layer: usize, token: usize) -> &[f32] {
        let (s, d) = (self.src_len(), self.hidden_dim());
        let start = (layer * s + token) * d;
        &Self::f32s(&self.enc_hidden)[start..start + d]
    }

    pub fn src_subtokens_of(&self, word: usize) -> Vec<usize> {
        subtokens_of(&self.src_word_of, word)
    }

    pub fn tgt_subtokens_of(&self, word: usize) -> Vec<usize> {
        subtokens_of(&self.tgt_word_of, word)
    }

    pub fn num_src_words(&self) -> usize {
        self.src_word_of.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Structural checks; errors on inconsistent shapes or maps.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |m: String| Error::Metadata(format!("dump `{}`: {m}", self.sentence_id));
        let a = self.enc_self_attn.dims();
        if a.len() != 4 || a[2] != a[3] {
            return Err(bad(format!("enc_self_attn must be [L][H][S][S], got {a:?}")));
        }
        let (l, h, s) = (a[0], a[1], a[2]);
        if self.enc_self_attn.as_f32().is_none() || self.enc_hidden.as_f32().is_none() {
            return Err(bad("dump tensors must be f32".into()));
        }
        if self.source_subtokens.len() != s || self.src_word_of.len() != s {
            return Err(bad(format!(
                "{} source subtokens / {} map entries for S = {s}",
                self.source_subtokens.len(),
                self.src_word_of.len()
            )));
        }
        if self.eos_index >= s {
            return Err(bad(format!("eos_index {} out of range", self.eos_index)));
        }
        let hd = self.enc_hidden.dims();
        if hd.len() != 3 || hd[0] != l + 1 || hd[1] != s {
            return Err(bad(format!("enc_hidden must be [{}][{s}][D], got {hd:?}", l + 1)));
        }
        if let Some(c) = &self.cross_attn {
            let cd = c.dims();
            if c.as_f32().is_none() || cd.len() != 4 || cd[0] != l || cd[1] != h || cd[3] != s {
                return Err(bad(format!("cross_attn must be [{l}][{h}][T][{s}], got {cd:?}")));
            }
            if self.target_subtokens.len() != cd[2] || self.tgt_word_of.len() != cd[2] {
                return Err(bad("target subtokens do not match cross_attn".into()));
            }
        }
        check_word_map(&self.src_word_of).map_err(|m| bad(format!("source map: {m}")))?;
        check_word_map(&self.tgt_word_of).map_err(|m| bad(format!("target map: {m}")))?;
        Ok(())
    }

    /// Attention rows that do not sum to one within [`ROW_SUM_TOLERANCE`].
    pub fn validate(&self) -> Vec<ValidationWarning> {
        let mut out = Vec::new();
        let mut scan = |name: &'static str, t: &Tensor| {
            let d = t.dims();
            let data = Self::f32s(t);
            for (r, row) in data.chunks_exact(d[3]).enumerate() {
                let sum: f64 = row.iter().map(|&x| x as f64).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    let rows_per_head = d[2];
                    out.push(ValidationWarning {
                        sentence_id: self.sentence_id.clone(),
                        tensor: name,
                        layer: r / (rows_per_head * d[1]),
                        head: (r / rows_per_head) % d[1],
                        row: r % rows_per_head,
                        row_sum: sum,
                    });
                }
            }
        };
        scan("enc_self_attn", &self.enc_self_attn);
        if let Some(c) = &self.cross_attn {
            scan("cross_attn", c);
        }
        out
    }

    pub fn to_record(&self) -> ActdRecord {
        let meta = DumpMeta {
            sentence_id: self.sentence_id.clone(),
            source_subtokens: self.source_subtokens.clone(),
            target_subtokens: self.target_subtokens.clone(),
            src_word_of: self.src_word_of.clone(),
            tgt_word_of: self.tgt_word_of.clone(),
            eos_index: self.eos_index,
            variant: self.variant.clone(),
        };
        let Value::Object(mut map) = serde_json::to_value(meta).expect("metadata serializes") else {
            unreachable!("struct serializes to an object")
        };
        map.insert("kind".into(), DUMP_KIND.into());
        let mut rec = ActdRecord::new(map).with_tensor("enc_self_attn", self.enc_self_attn.clone());
        if let Some(c) = &self.cross_attn {
            rec = rec.with_tensor("cross_attn", c.clone());
        }
        rec.with_tensor("enc_hidden", self.enc_hidden.clone())
    }

    pub fn from_record(rec: ActdRecord) -> Result<Self> {
        if rec.kind() != Some(DUMP_KIND) {
            return Err(Error::Metadata(format!(
                "expected an activation dump record, found kind {:?}",
                rec.kind()
            )));
        }
        let meta: DumpMeta =
            serde_json::from_value(Value::Object(rec.meta.clone())).map_err(|e| Error::Metadata(e.to_string()))?;
        let take = |name: &str| rec.tensor(name).cloned();
        let dump = ActivationDump {
            enc_self_attn: take("enc_self_attn").ok_or_else(|| Error::Metadata("missing enc_self_attn".into()))?,
            cross_attn: take("cross_attn"),
            enc_hidden: take("enc_hidden").ok_or_else(|| Error::Metadata("missing enc_hidden".into()))?,
            sentence_id: meta.sentence_id,
            source_subtokens: meta.source_subtokens,
            target_subtokens: meta.target_subtokens,
            src_word_of: meta.src_word_of,
            tgt_word_of: meta.tgt_word_of,
            eos_index: meta.eos_index,
            variant: meta.variant,
        };
        dump.check_structure()?;
        Ok(dump)
    }
}

fn subtokens_of(map: &[Option<usize>], word: usize) -> Vec<usize> {
    map.iter()
        .enumerate()
        .filter(|(_, w)| **w == Some(word))
        .map(|(i, _)| i)
        .collect()
}

/// Monotone non-decreasing and surjective onto `0..=max`.
fn check_word_map(map: &[Option<usize>]) -> std::result::Result<(), String> {
    let words: Vec<usize> = map.iter().flatten().copied().collect();
    let mut expect = 0usize;
    for (i, &w) in words.iter().enumerate() {
        if i > 0 && w < words[i - 1] {
            return Err(format!("word indices decrease ({} after {})", w, words[i - 1]));
        }
        if w > expect {
            return Err(format!("word {expect} has no subtoken"));
        }
        if w == expect {
            expect += 1;
        }
    }
    Ok(())
}

/// Head-averaged attention mass from a group of query rows onto a group of key
/// columns: mean over heads, mean over queries, sum over keys.
pub fn attention_mass<'a>(
    rows: impl Fn(usize, usize) -> &'a [f32],
    heads: usize,
    queries: &[usize],
    keys: &[usize],
) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let mut total = 0.0f64;
    for h in 0..heads {
        for &q in queries {
            let row = rows(h, q);
            total += keys.iter().map(|&k| row[k] as f64).sum::<f64>();
        }
    }
    total / (heads * queries.len()) as f64
}
