//! Binary checkpoint format.
//!
//! ```text
//! "TCKP"
//! u32 version
//! u32 tensor count
//! per tensor: u32 name length, UTF-8 name, u32 rank, rank × u32 dims, f64 data
//! ```
//!
//! All integers and floats are little-endian. Besides the parameter tensors a
//! checkpoint carries `meta.trained` (three 0/1 flags for text, image, voxel)
//! and `meta.pooling` (0 mean, 1 max).

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::mlp::MlpHead;
use super::model::TrimodalModel;
use super::text::TextEncoder;
use super::views::{Pooling, ViewEncoder};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::Modality;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("checkpoint field exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    push_u32(&mut out, tensors.len())?;
    for t in tensors {
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::dim(
                format!("tensor {}", t.name),
                t.dims.iter().product(),
                t.data.len(),
            ));
        }
        push_u32(&mut out, t.name.len())?;
        out.extend_from_slice(t.name.as_bytes());
        push_u32(&mut out, t.dims.len())?;
        for &d in &t.dims {
            push_u32(&mut out, d)?;
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let err = |msg: String| Error::format("checkpoint", msg);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| err(format!("truncated at byte {pos}")))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;

    if take(4)? != CHECKPOINT_MAGIC {
        return Err(err("bad magic bytes".into()));
    }
    let version = u32_at(take(4)?);
    if version != CHECKPOINT_VERSION as usize {
        return Err(err(format!("unsupported version {version}")));
    }
    let count = u32_at(take(4)?);
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = u32_at(take(4)?);
        let name = std::str::from_utf8(take(name_len)?)
            .map_err(|_| err("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = u32_at(take(4)?);
        if rank > MAX_RANK {
            return Err(err(format!("tensor {name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32_at(take(4)?));
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8).map(|_| n))
            .ok_or_else(|| err(format!("tensor {name} is too large")))?;
        let raw = take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if pos != bytes.len() {
        return Err(err(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(tensors)
}

pub fn model_to_tensors(model: &TrimodalModel) -> Vec<NamedTensor> {
    let mut out: Vec<NamedTensor> = model
        .named_tensors()
        .into_iter()
        .map(|(name, dims, data)| NamedTensor {
            name,
            dims,
            data: data.to_vec(),
        })
        .collect();
    out.push(NamedTensor {
        name: "meta.trained".into(),
        dims: vec![3],
        data: Modality::ALL
            .iter()
            .map(|m| if model.trained.contains(m) { 1.0 } else { 0.0 })
            .collect(),
    });
    out.push(NamedTensor {
        name: "meta.pooling".into(),
        dims: vec![1],
        data: vec![f64::from(model.image.pooling.code())],
    });
    out
}

pub fn model_from_tensors(tensors: Vec<NamedTensor>) -> Result<TrimodalModel> {
    let err = |msg: String| Error::format("checkpoint", msg);
    let mut map: HashMap<String, NamedTensor> = HashMap::new();
    for t in tensors {
        if map.contains_key(&t.name) {
            return Err(err(format!("duplicate tensor {}", t.name)));
        }
        map.insert(t.name.clone(), t);
    }
    let mut take = |name: &str, rank: usize| -> Result<NamedTensor> {
        let t = map.remove(name).ok_or_else(|| err(format!("missing tensor {name}")))?;
        if t.dims.len() != rank {
            return Err(err(format!("tensor {name} has rank {}, expected {rank}", t.dims.len())));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("tensor {name} has non-finite values")));
        }
        Ok(t)
    };
    let matrix = |t: NamedTensor| Matrix::from_vec(t.dims[0], t.dims[1], t.data);
    let mut head = |prefix: &str| -> Result<MlpHead> {
        let w1 = matrix(take(&format!("{prefix}.w1"), 2)?)?;
        let b1 = take(&format!("{prefix}.b1"), 1)?.data;
        let w2 = matrix(take(&format!("{prefix}.w2"), 2)?)?;
        let b2 = take(&format!("{prefix}.b2"), 1)?.data;
        MlpHead::from_parts(w1, b1, w2, b2)
    };
    let text_head = head("text.head")?;
    let image_head = head("image.head")?;
    let voxel_head = head("voxel.head")?;
    let words = matrix(take("text.word_embeddings", 2)?)?;
    let trained_flags = take("meta.trained", 1)?.data;
    if trained_flags.len() != 3 || trained_flags.iter().any(|&f| f != 0.0 && f != 1.0) {
        return Err(err("meta.trained must hold three 0/1 flags".into()));
    }
    let pooling_code = take("meta.pooling", 1)?.data;
    let pooling = match pooling_code.as_slice() {
        [c] if *c == 0.0 || *c == 1.0 => Pooling::from_code(*c as u32).unwrap(),
        _ => return Err(err("meta.pooling must be 0 or 1".into())),
    };
    if let Some(extra) = map.keys().min() {
        return Err(err(format!("unexpected tensor {extra}")));
    }
    let trained: BTreeSet<Modality> = Modality::ALL
        .iter()
        .zip(&trained_flags)
        .filter(|(_, &f)| f == 1.0)
        .map(|(m, _)| *m)
        .collect();
    let model = TrimodalModel {
        text: TextEncoder::new(words, text_head)?,
        image: ViewEncoder::new(image_head, pooling),
        voxel: voxel_head,
        trained,
    };
    model.validate()?;
    Ok(model)
}

pub fn encode_checkpoint(model: &TrimodalModel) -> Result<Vec<u8>> {
    encode_tensors(&model_to_tensors(model))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrimodalModel> {
    model_from_tensors(decode_tensors(bytes)?)
}

pub fn save_checkpoint(model: &TrimodalModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrimodalModel> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path)?).map_err(|e| match e {
        Error::Format { format, msg } => Error::Format {
            format,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}
