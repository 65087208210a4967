//! The ACTD tensor container.
//!
//! Each record is self-contained, and records may be concatenated in one file:
//!
//! ```text
//! "ACTD"            4 bytes magic
//! version           u16 LE (currently 1)
//! meta_len          u32 LE
//! meta              meta_len bytes of UTF-8 JSON; `tensors` lists tensor names in order
//! per tensor:
//!   dtype           u8 (0 = f32 LE, 1 = f64 LE)
//!   ndim            u8
//!   dims            ndim x u32 LE
//!   payload         row-major, prod(dims) x element size
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ACTD";
pub const VERSION: u16 = 1;
/// Upper bound on a single tensor payload.
pub const MAX_TENSOR_BYTES: u64 = 1 << 36;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::DimensionOverflow(dims.iter().map(|&d| d as u32).collect()))?;
        let len = match &data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        };
        if numel != len {
            return Err(Error::Input(format!(
                "tensor of shape {dims:?} needs {numel} elements, got {len}"
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::F64(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::F64(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    /// Element as f64 regardless of storage type.
    pub fn at(&self, flat: usize) -> f64 {
        match &self.data {
            TensorData::F32(v) => v[flat] as f64,
            TensorData::F64(v) => v[flat],
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    fn dtype_code(&self) -> u8 {
        match self.data {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
        }
    }
}

/// One container record: JSON metadata plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ActdRecord {
    pub meta: serde_json::Map<String, Value>,
    pub tensors: Vec<(String, Tensor)>,
}

impl ActdRecord {
    pub fn new(meta: serde_json::Map<String, Value>) -> Self {
        ActdRecord {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn with_tensor(mut self, name: impl Into<String>, t: Tensor) -> Self {
        self.tensors.push((name.into(), t));
        self
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn kind(&self) -> Option<&str> {
        self.meta.get("kind").and_then(Value::as_str)
    }
}

pub fn write_record(mut w: impl Write, rec: &ActdRecord) -> std::io::Result<u64> {
    let mut meta = rec.meta.clone();
    meta.insert(
        "tensors".into(),
        Value::Array(rec.tensors.iter().map(|(n, _)| Value::String(n.clone())).collect()),
    );
    let meta_bytes = serde_json::to_vec(&Value::Object(meta))?;
    let mut written = 0u64;
    let mut put = |w: &mut dyn Write, b: &[u8]| -> std::io::Result<()> {
        written += b.len() as u64;
        w.write_all(b)
    };
    put(&mut w, &MAGIC)?;
    put(&mut w, &VERSION.to_le_bytes())?;
    put(&mut w, &(meta_bytes.len() as u32).to_le_bytes())?;
    put(&mut w, &meta_bytes)?;
    for (_, t) in &rec.tensors {
        put(&mut w, &[t.dtype_code(), t.dims.len() as u8])?;
        for &d in &t.dims {
            put(&mut w, &(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(t.numel() * 8);
        match &t.data {
            TensorData::F32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
        }
        put(&mut w, &payload)?;
    }
    Ok(written)
}

fn take_exact(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(n.min(1 << 20));
    r.take(n as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Metadata(format!("read failure: {e}")))?;
    if buf.len() < n {
        return Err(Error::Truncated {
            needed: n,
            available: buf.len(),
        });
    }
    Ok(buf)
}

/// Read the next record; `Ok(None)` on a clean end of stream.
pub fn read_record(r: &mut impl Read) -> Result<Option<ActdRecord>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r
            .read(&mut magic[got..])
            .map_err(|e| Error::Metadata(format!("read failure: {e}")))?;
        if n == 0 {
            break;
        }
        got += n;
    }
    match got {
        0 => return Ok(None),
        4 => {}
        _ => {
            return Err(Error::Truncated {
                needed: 4,
                available: got,
            })
        }
    }
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let v = take_exact(r, 2)?;
    let version = u16::from_le_bytes([v[0], v[1]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let l = take_exact(r, 4)?;
    let meta_len = u32::from_le_bytes([l[0], l[1], l[2], l[3]]) as usize;
    let meta_bytes = take_exact(r, meta_len)?;
    let meta: Value = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Metadata(e.to_string()))?;
    let Value::Object(mut meta) = meta else {
        return Err(Error::Metadata("metadata is not a JSON object".into()));
    };
    let names: Vec<String> = match meta.remove("tensors") {
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(Error::Metadata(format!("tensor name {other} is not a string"))),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Metadata("`tensors` is not an array".into())),
        None => Vec::new(),
    };
    let mut tensors = Vec::with_capacity(names.len());
    for name in names {
        let h = take_exact(r, 2)?;
        let (dtype, ndim) = (h[0], h[1] as usize);
        let elem = match dtype {
            0 => 4u64,
            1 => 8u64,
            other => return Err(Error::UnsupportedDtype(other)),
        };
        let raw = take_exact(r, 4 * ndim)?;
        let dims32: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let bytes = dims32
            .iter()
            .try_fold(elem, |a, &d| a.checked_mul(d as u64))
            .filter(|&b| b <= MAX_TENSOR_BYTES)
            .ok_or_else(|| Error::DimensionOverflow(dims32.clone()))?;
        let payload = take_exact(r, bytes as usize)?;
        let dims: Vec<usize> = dims32.iter().map(|&d| d as usize).collect();
        let t = match dtype {
            0 => Tensor::f32(
                dims,
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )?,
            _ => Tensor::f64(
                dims,
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            )?,
        };
        tensors.push((name, t));
    }
    Ok(Some(ActdRecord { meta, tensors }))
}

/// Write records back to back into a file.
pub fn write_records_to<'a>(path: &Path, records: impl IntoIterator<Item = &'a ActdRecord>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for rec in records {
        write_record(&mut w, rec).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_from(path: &Path) -> Result<Vec<ActdRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    RecordReader::new(std::io::BufReader::new(f)).collect()
}

/// Iterator over all records of a stream.
pub struct RecordReader<R> {
    inner: R,
    done: bool,
}

impl<R: Read> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        RecordReader { inner, done: false }
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<ActdRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match read_record(&mut self.inner) {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ActdRecord {
        let mut meta = serde_json::Map::new();
        meta.insert("kind".into(), "test".into());
        ActdRecord::new(meta)
            .with_tensor(
                "a",
                Tensor::f32(vec![2, 3], vec![0.5, -1.0, 2.0, f32::MIN_POSITIVE, 0.0, -0.0]).unwrap(),
            )
            .with_tensor("b", Tensor::f64(vec![2], vec![1e-300, std::f64::consts::PI]).unwrap())
    }

    #[test]
    fn round_trip_two_records() {
        let mut buf = Vec::new();
        let n = write_record(&mut buf, &sample()).unwrap();
        assert_eq!(n as usize, buf.len());
        write_record(&mut buf, &sample()).unwrap();
        let recs: Vec<_> = RecordReader::new(&buf[..]).collect::<Result<_>>().unwrap();
        assert_eq!(recs, vec![sample(), sample()]);
    }

    #[test]
    fn bad_magic() {
        let mut buf = Vec::new();
        write_record(&mut buf, &sample()).unwrap();
        buf[0] = b'X';
        let e = read_record(&mut &buf[..]).unwrap_err();
        assert!(matches!(e, Error::BadMagic(_)));
        assert_eq!(e.container_code(), Some(1));
    }

    #[test]
    fn truncated_payload() {
        // header claims a [3] f32 tensor but carries only two elements
        let mut meta = serde_json::Map::new();
        meta.insert("tensors".into(), serde_json::json!(["t"]));
        let meta = serde_json::to_vec(&meta).unwrap();
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&[0, 1]);
        buf.extend_from_slice(&3u32.to_le_bytes());
        buf.extend_from_slice(&1.0f32.to_le_bytes());
        buf.extend_from_slice(&2.0f32.to_le_bytes());
        let e = read_record(&mut &buf[..]).unwrap_err();
        assert!(
            matches!(
                e,
                Error::Truncated {
                    needed: 12,
                    available: 8
                }
            ),
            "{e:?}"
        );
        assert_eq!(e.container_code(), Some(5));
    }

    #[test]
    fn dimension_overflow() {
        let mut meta = serde_json::Map::new();
        meta.insert("tensors".into(), serde_json::json!(["t"]));
        let meta = serde_json::to_vec(&meta).unwrap();
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&[0, 3]);
        for _ in 0..3 {
            buf.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let e = read_record(&mut &buf[..]).unwrap_err();
        assert!(matches!(e, Error::DimensionOverflow(_)));
        assert_eq!(e.container_code(), Some(4));
    }

    #[test]
    fn empty_stream_is_clean_end() {
        assert!(read_record(&mut &[][..]).unwrap().is_none());
        assert!(matches!(
            read_record(&mut &b"AC"[..]),
            Err(Error::Truncated {
                needed: 4,
                available: 2
            })
        ));
    }
}
