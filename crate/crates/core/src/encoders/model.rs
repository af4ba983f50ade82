use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpHead};
use super::text::{TextEncoder, TextGrads};
use super::views::{Pooling, ViewEncoder};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;
use crate::space::Modality;

/// Sizes needed to build a [`TrimodalModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab_size: usize,
    /// Word embedding width (e_t).
    pub word_dim: usize,
    pub hidden_dim: usize,
    /// Shared embedding dimension (d).
    pub embed_dim: usize,
    pub view_dim: usize,
    pub voxel_dim: usize,
    pub pooling: Pooling,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("word_dim", self.word_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("view_dim", self.view_dim),
            ("voxel_dim", self.voxel_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::invalid(format!("model {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Text, image and voxel encoders into one shared space. The only learnable state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimodalModel {
    pub text: TextEncoder,
    pub image: ViewEncoder,
    pub voxel: MlpHead,
    /// Modalities whose encoders have been trained (an untrained encoder is random).
    pub trained: BTreeSet<Modality>,
}

/// Accumulated gradients for every parameter of a [`TrimodalModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub text: TextGrads,
    pub image: MlpGrads,
    pub voxel: MlpGrads,
}

/// Word embeddings `N(0, 1)`; head weights `U(±1/√fan_in)`; biases zero.
pub fn init_parameters(shape: &ModelShape, rng: &mut Rng) -> Result<TrimodalModel> {
    shape.validate()?;
    let words = Matrix::from_vec(
        shape.vocab_size,
        shape.word_dim,
        (0..shape.vocab_size * shape.word_dim).map(|_| rng.normal()).collect(),
    )?;
    let text_head = MlpHead::init(shape.word_dim, shape.hidden_dim, shape.embed_dim, rng);
    let image_head = MlpHead::init(shape.view_dim, shape.hidden_dim, shape.embed_dim, rng);
    let voxel_head = MlpHead::init(shape.voxel_dim, shape.hidden_dim, shape.embed_dim, rng);
    Ok(TrimodalModel {
        text: TextEncoder::new(words, text_head)?,
        image: ViewEncoder::new(image_head, shape.pooling),
        voxel: voxel_head,
        trained: BTreeSet::new(),
    })
}

impl TrimodalModel {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            vocab_size: self.text.vocab_size(),
            word_dim: self.text.word_dim(),
            hidden_dim: self.text.head.hidden_dim(),
            embed_dim: self.text.head.output_dim(),
            view_dim: self.image.head.input_dim(),
            voxel_dim: self.voxel.input_dim(),
            pooling: self.image.pooling,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.text.head.output_dim()
    }

    /// Checks that all three encoders land in the same space.
    pub fn validate(&self) -> Result<()> {
        let d = self.embed_dim();
        for (name, head) in [("image", &self.image.head), ("voxel", &self.voxel)] {
            if head.output_dim() != d {
                return Err(Error::dim(format!("{name} head output"), d, head.output_dim()));
            }
        }
        if !self.text.head.is_finite() || !self.image.head.is_finite() || !self.voxel.is_finite() {
            return Err(Error::invalid("model parameters must be finite"));
        }
        if !self.text.word_embeddings.is_finite() {
            return Err(Error::invalid("word embeddings must be finite"));
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> GradientTape {
        GradientTape {
            text: self.text.zero_grads(),
            image: self.image.head.zero_grads(),
            voxel: self.voxel.zero_grads(),
        }
    }

    /// Every parameter tensor with its checkpoint name and shape, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let we = &self.text.word_embeddings;
        let mut out = vec![(
            "text.word_embeddings".to_string(),
            vec![we.rows(), we.cols()],
            we.as_slice(),
        )];
        for (prefix, head) in [
            ("text.head", &self.text.head),
            ("image.head", &self.image.head),
            ("voxel.head", &self.voxel),
        ] {
            for (name, shape, data) in head.tensors() {
                out.push((format!("{prefix}.{name}"), shape, data));
            }
        }
        out
    }

    /// Mutable parameter tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.text.word_embeddings.as_mut_slice()];
        out.extend(self.text.head.tensors_mut());
        out.extend(self.image.head.tensors_mut());
        out.extend(self.voxel.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }
}

impl GradientTape {
    /// Tensors in the same order as [`TrimodalModel::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.text.word_embeddings.as_slice()];
        out.extend(self.text.head.tensors());
        out.extend(self.image.tensors());
        out.extend(self.voxel.tensors());
        out
    }

    pub fn zero(&mut self) {
        self.text.zero();
        self.image.zero();
        self.voxel.zero();
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
