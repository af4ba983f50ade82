//! The shared embedding space and the similarity primitives used everywhere else.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Voxel,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Image, Modality::Voxel];

    /// Code used by the binary feature cache.
    pub fn code(self) -> u32 {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
            Modality::Voxel => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Modality::Text),
            1 => Some(Modality::Image),
            2 => Some(Modality::Voxel),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Voxel => "voxel",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            "voxel" => Ok(Modality::Voxel),
            other => Err(Error::invalid(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingSpace {
    dim: usize,
    modalities: BTreeSet<Modality>,
}

impl EmbeddingSpace {
    pub fn new(dim: usize, modalities: impl IntoIterator<Item = Modality>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            modalities: modalities.into_iter().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modalities(&self) -> &BTreeSet<Modality> {
        &self.modalities
    }

    /// Wraps `values` as an embedding of this space, checking length and finiteness.
    pub fn embed(&self, values: Vec<f64>, modality: Modality, object_id: impl Into<String>) -> Result<Embedding> {
        if !self.modalities.contains(&modality) {
            return Err(Error::invalid(format!("modality {modality} is not part of this space")));
        }
        if values.len() != self.dim {
            return Err(Error::dim("embedding", self.dim, values.len()));
        }
        Embedding::new(values, modality, object_id)
    }
}

/// One modality's encoding of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    modality: Modality,
    object_id: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, modality: Modality, object_id: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding component {i} is not finite")));
        }
        Ok(Self {
            values,
            modality,
            object_id: object_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn object_id(&self) -> &str {
        &self.object_id
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `a·b / (‖a‖‖b‖)`. Zero-norm inputs are an error, never a silent zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine_similarity", a.len(), b.len()));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine_similarity operand".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm("l2_normalize operand".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}
