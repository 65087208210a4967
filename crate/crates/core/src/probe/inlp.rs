//! Iterative nullspace projection: repeatedly train a linear probe and remove
//! its direction from the representation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::logreg::{train_probe, ProbeConfig};
use crate::dumpio::{read_records_from, write_records_to, ActdRecord, Tensor};
use crate::error::{Error, Result};

pub const PROJECTOR_KIND: &str = "nullspace_projector";
/// Directions whose residual after orthogonalization falls below this are dropped.
pub const MIN_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InlpConfig {
    pub iterations: usize,
    pub probe: ProbeConfig,
    /// Share of samples held out for the per-iteration accuracy.
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig {
            iterations: 50,
            probe: ProbeConfig::default(),
            dev_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceProjector {
    /// `D x D`, equal to `I - Q^T Q`.
    pub p: DMatrix<f64>,
    /// `k x D` with orthonormal rows.
    pub directions: DMatrix<f64>,
    /// Raw probe weight vectors, one per accepted direction.
    pub probe_weights: Vec<Vec<f64>>,
    /// Held-out accuracy of the probe trained at each iteration.
    pub accuracies: Vec<f64>,
    /// Held-out accuracy of a fresh probe on the fully projected data.
    pub residual_accuracy: Option<f64>,
    /// Held-out rate of the most frequent training class.
    pub majority_rate: Option<f64>,
}

impl NullspaceProjector {
    pub fn identity(dim: usize) -> Self {
        NullspaceProjector {
            p: DMatrix::identity(dim, dim),
            directions: DMatrix::zeros(0, dim),
            probe_weights: Vec::new(),
            accuracies: Vec::new(),
            residual_accuracy: None,
            majority_rate: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn rank_removed(&self) -> usize {
        self.directions.nrows()
    }

    /// Add `w` to the removed subspace; returns false when `w` is (numerically)
    /// already inside it.
    pub fn push_direction(&mut self, w: &[f64]) -> Result<bool> {
        let d = self.dim();
        if w.len() != d {
            return Err(Error::Input(format!(
                "direction of length {} for dimension {d}",
                w.len()
            )));
        }
        let mut v = DVector::from_column_slice(w);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Ok(false);
        }
        v /= norm;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for q in self.directions.row_iter() {
                let c = q.transpose().dot(&v);
                v -= q.transpose() * c;
            }
        }
        let residual = v.norm();
        if residual < MIN_RESIDUAL {
            return Ok(false);
        }
        v /= residual;
        let k = self.directions.nrows();
        let mut dirs = self.directions.clone().insert_row(k, 0.0);
        dirs.set_row(k, &v.transpose());
        self.directions = dirs;
        self.probe_weights.push(w.to_vec());
        self.p = DMatrix::identity(d, d) - self.directions.transpose() * &self.directions;
        Ok(true)
    }

    /// `P * H` for column vectors `H` (`D x M`).
    pub fn apply(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.dim() {
            return Err(Error::Input(format!(
                "projector of dimension {} applied to vectors of length {}",
                self.dim(),
                h.nrows()
            )));
        }
        Ok(&self.p * h)
    }

    /// Project sample rows (`N x D`).
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Input(format!(
                "projector of dimension {} applied to rows of length {}",
                self.dim(),
                x.ncols()
            )));
        }
        // P is symmetric
        Ok(x * &self.p)
    }

    pub fn to_record(&self, layer: usize) -> ActdRecord {
        let d = self.dim();
        let k = self.rank_removed();
        let mut meta = serde_json::Map::new();
        meta.insert("kind".into(), PROJECTOR_KIND.into());
        meta.insert("layer".into(), layer.into());
        meta.insert("k".into(), k.into());
        meta.insert("accuracies".into(), Value::from(self.accuracies.clone()));
        if let Some(r) = self.residual_accuracy {
            meta.insert("residual_accuracy".into(), r.into());
        }
        if let Some(m) = self.majority_rate {
            meta.insert("majority_rate".into(), m.into());
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        let weights: Vec<f64> = self.probe_weights.iter().flatten().copied().collect();
        ActdRecord::new(meta)
            .with_tensor("P", Tensor::f64(vec![d, d], row_major(&self.p)).expect("shape"))
            .with_tensor(
                "directions",
                Tensor::f64(vec![k, d], row_major(&self.directions)).expect("shape"),
            )
            .with_tensor("probe_weights", Tensor::f64(vec![k, d], weights).expect("shape"))
    }

    /// Returns the layer and the projector.
    pub fn from_record(rec: &ActdRecord) -> Result<(usize, Self)> {
        if rec.kind() != Some(PROJECTOR_KIND) {
            return Err(Error::Metadata(format!(
                "expected a nullspace projector, found kind {:?}",
                rec.kind()
            )));
        }
        let layer = rec
            .meta
            .get("layer")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Metadata("projector without layer".into()))? as usize;
        let get = |name: &str| {
            rec.tensor(name)
                .ok_or_else(|| Error::Metadata(format!("projector for layer {layer} lacks {name}")))
        };
        let matrix = |t: &Tensor| -> Result<DMatrix<f64>> {
            match t.dims() {
                [r, c] => Ok(DMatrix::from_row_slice(*r, *c, &t.to_f64_vec())),
                d => Err(Error::Metadata(format!("expected a matrix, got dims {d:?}"))),
            }
        };
        let p = matrix(get("P")?)?;
        let directions = matrix(get("directions")?)?;
        let d = p.nrows();
        if p.ncols() != d || directions.ncols() != d {
            return Err(Error::Metadata(format!(
                "projector for layer {layer} has inconsistent shapes"
            )));
        }
        let probe_weights = match rec.tensor("probe_weights") {
            Some(t) => t.to_f64_vec().chunks(d.max(1)).map(<[f64]>::to_vec).collect(),
            None => Vec::new(),
        };
        let floats = |key: &str| rec.meta.get(key).and_then(Value::as_f64);
        let accuracies = rec
            .meta
            .get("accuracies")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        Ok((
            layer,
            NullspaceProjector {
                p,
                directions,
                probe_weights,
                accuracies,
                residual_accuracy: floats("residual_accuracy"),
                majority_rate: floats("majority_rate"),
            },
        ))
    }
}

pub fn apply_projection(proj: &NullspaceProjector, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    proj.apply(h)
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows.iter())
}

/// Seeded split of `0..n` into (train, dev) keeping both classes in train.
pub fn train_dev_split(y: &[bool], dev_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&dev_fraction) {
        return Err(Error::Input(format!("dev fraction {dev_fraction} outside [0, 1)")));
    }
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = ((y.len() as f64) * dev_fraction).round() as usize;
    let n_dev = n_dev.min(y.len().saturating_sub(2));
    let (dev, train) = idx.split_at(n_dev);
    let (mut train, mut dev) = (train.to_vec(), dev.to_vec());
    train.sort_unstable();
    dev.sort_unstable();
    Ok((train, dev))
}

/// Train with a seeded held-out split of `x`/`y`.
pub fn inlp_train(x: &DMatrix<f64>, y: &[bool], config: &InlpConfig) -> Result<NullspaceProjector> {
    if y.len() != x.nrows() {
        return Err(Error::Input(format!("{} samples but {} labels", x.nrows(), y.len())));
    }
    let (train, dev) = train_dev_split(y, config.dev_fraction, config.seed)?;
    let pick = |rows: &[usize]| -> Vec<bool> { rows.iter().map(|&i| y[i]).collect() };
    inlp_train_with_dev(
        &select_rows(x, &train),
        &pick(&train),
        &select_rows(x, &dev),
        &pick(&dev),
        config,
    )
}

/// Train on `x`/`y`, measuring accuracies on a separate dev set (which may be empty).
pub fn inlp_train_with_dev(
    x: &DMatrix<f64>,
    y: &[bool],
    x_dev: &DMatrix<f64>,
    y_dev: &[bool],
    config: &InlpConfig,
) -> Result<NullspaceProjector> {
    let d = x.ncols();
    if x_dev.nrows() > 0 && x_dev.ncols() != d {
        return Err(Error::Input(format!(
            "dev rows of length {} for dimension {d}",
            x_dev.ncols()
        )));
    }
    if x_dev.nrows() != y_dev.len() {
        return Err(Error::Input("dev samples and labels differ in length".into()));
    }
    let mut proj = NullspaceProjector::identity(d);
    let accuracy = |p: &super::Probe, xs: &DMatrix<f64>, ys: &[bool]| {
        if ys.is_empty() {
            f64::NAN
        } else {
            p.accuracy(xs, ys)
        }
    };
    for i in 0..config.iterations {
        let xp = proj.apply_rows(x)?;
        let probe = train_probe(
            &xp,
            y,
            &ProbeConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.probe
            },
        )?;
        let dev_p = if x_dev.nrows() > 0 {
            proj.apply_rows(x_dev)?
        } else {
            x_dev.clone()
        };
        proj.accuracies.push(accuracy(&probe, &dev_p, y_dev));
        if !proj.push_direction(&probe.weights)? {
            log::info!("INLP stopped after {i} directions: probe direction already removed");
            break;
        }
    }
    let final_x = proj.apply_rows(x)?;
    let residual = train_probe(&final_x, y, &config.probe)?;
    if !y_dev.is_empty() {
        let dev_p = proj.apply_rows(x_dev)?;
        proj.residual_accuracy = Some(residual.accuracy(&dev_p, y_dev));
        let positives = y.iter().filter(|&&b| b).count();
        let majority = positives * 2 >= y.len();
        proj.majority_rate = Some(y_dev.iter().filter(|&&b| b == majority).count() as f64 / y_dev.len() as f64);
    }
    Ok(proj)
}

pub fn write_projectors(path: &Path, projectors: &BTreeMap<usize, NullspaceProjector>) -> Result<()> {
    let records: Vec<ActdRecord> = projectors.iter().map(|(l, p)| p.to_record(*l)).collect();
    write_records_to(path, &records)
}

pub fn read_projectors(path: &Path) -> Result<BTreeMap<usize, NullspaceProjector>> {
    let mut out = BTreeMap::new();
    for rec in read_records_from(path)? {
        let (layer, p) = NullspaceProjector::from_record(&rec)?;
        if out.insert(layer, p).is_some() {
            return Err(Error::DuplicateId(format!("projector for layer {layer}")));
        }
    }
    Ok(out)
}
