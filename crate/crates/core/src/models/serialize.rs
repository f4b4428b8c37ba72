//! Versioned binary container:
//!
//! ```text
//! magic "RLABMDL\0" | version u32 | kind u8 (0 linear, 1 convnet)
//! n_meta u32 | (key, value) strings as u32 length + utf-8 bytes
//! n_tensors u32 | per tensor: rank u32, dims u32..., f64 data
//! ```
//! All integers and floats little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Classifier, ConvNet, ConvParams, LinearLogistic};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"RLABMDL\0";
pub const MODEL_VERSION: u32 = 1;

/// Free-form metadata stored alongside the weights (loss tag, smoothing,
/// config digest, recipe name, ...).
pub type ModelMeta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearLogistic),
    Conv(ConvNet),
}

impl Model {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            Model::Linear(m) => m,
            Model::Conv(m) => m,
        }
    }

    /// The model evaluated in single precision where that is supported.
    pub fn fast_classifier(&self) -> Box<dyn Classifier + Send + Sync> {
        match self {
            Model::Linear(m) => Box::new(m.clone()),
            Model::Conv(m) => Box::new(m.cast::<f32>()),
        }
    }

    pub fn kind(&self) -> &'static str {
        self.classifier().kind()
    }

    pub fn as_linear(&self) -> Result<&LinearLogistic> {
        match self {
            Model::Linear(m) => Ok(m),
            Model::Conv(_) => Err(Error::Incompatible("expected a linear model".into())),
        }
    }

    pub fn as_conv(&self) -> Result<&ConvNet> {
        match self {
            Model::Conv(m) => Ok(m),
            Model::Linear(_) => Err(Error::Incompatible("expected a convnet".into())),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.rank() as u32);
    for &d in t.shape() {
        put_u32(out, d as u32);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model(model: &Model, meta: &ModelMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    let tensors: Vec<Tensor> = match model {
        Model::Linear(m) => {
            out.push(0);
            vec![m.w().clone(), Tensor::from_vec(vec![m.b()]).expect("scalar")]
        }
        Model::Conv(m) => {
            out.push(1);
            m.params().tensors().iter().map(|t| (*t).clone()).collect()
        }
    };
    put_u32(&mut out, meta.len() as u32);
    for (k, v) in meta {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    put_u32(&mut out, tensors.len() as u32);
    for t in &tensors {
        put_tensor(&mut out, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.name.to_string(),
            offset: self.pos,
            message: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("metadata is not utf-8"))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(self.err(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = self.take(len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data)
    }
}

pub fn decode_model(bytes: &[u8], name: &str) -> Result<(Model, ModelMeta)> {
    let mut r = Reader { bytes, pos: 0, name };
    if r.take(8)? != MODEL_MAGIC {
        r.pos = 0;
        return Err(r.err("not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(r.err(format!("unsupported model version {version}")));
    }
    let kind = r.take(1)?[0];
    let n_meta = r.u32()?;
    let mut meta = ModelMeta::new();
    for _ in 0..n_meta {
        let k = r.string()?;
        let v = r.string()?;
        meta.insert(k, v);
    }
    let n = r.u32()? as usize;
    let tensors = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes"));
    }
    let model = match (kind, tensors.len()) {
        (0, 2) => Model::Linear(LinearLogistic::new(tensors[0].clone(), tensors[1].data()[0])?),
        (1, 4) => {
            let mut it = tensors.into_iter();
            let mut next = || it.next().expect("four tensors");
            let conv = [next(), next(), next()];
            Model::Conv(ConvNet::from_params(ConvParams { conv, dense: next() })?)
        }
        (k, t) => return Err(r.err(format!("model kind {k} with {t} tensors"))),
    };
    Ok((model, meta))
}

pub fn save_model(model: &Model, meta: &ModelMeta, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(Model, ModelMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}
