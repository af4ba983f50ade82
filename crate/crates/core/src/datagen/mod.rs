//! Dataset ingestion, tokenization, featurizers and the synthetic trimodal generator.

mod featurize;
mod io;
mod synthetic;
mod vocab;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use featurize::{bin_index, featurize_view, featurize_voxel, Image, VoxelGrid, VOXEL_CHANNELS};
pub use io::{
    format_captions, load_captions, load_dataset_dir, parse_captions, write_dataset_dir, CaptionEntry, FeatureCache,
    CAPTIONS_FILE, FEATURE_CACHE_MAGIC, IMAGE_CACHE_FILE, VOCAB_FILE, VOXEL_CACHE_FILE,
};
pub use synthetic::{
    apportion, generate_synthetic_dataset, generate_synthetic_with_attributes, CategorySpec, ObjectAttributes,
    PartSpec, SyntheticSpec, COLOR_NAMES, SIZE_NAMES,
};
pub use vocab::{tokenize, Vocabulary, PAD_ID, PAD_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// One object: identity, split, tokenized captions and raw per-modality features.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub object_id: String,
    pub category: String,
    pub split: Split,
    /// Token ids, each padded to the dataset's caption length.
    pub captions: Vec<Vec<u32>>,
    pub voxel_features: Vec<f64>,
    /// One feature vector per rendered view.
    pub view_features: Vec<Vec<f64>>,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: &str| Error::invalid(format!("record {}: {msg}", self.object_id));
        if self.captions.is_empty() {
            return Err(ctx("has no captions"));
        }
        if self.view_features.is_empty() {
            return Err(ctx("has no views"));
        }
        let d = self.view_features[0].len();
        if self.view_features.iter().any(|v| v.len() != d) {
            return Err(ctx("views differ in dimensionality"));
        }
        Ok(())
    }

    pub fn views_per_object(&self) -> usize {
        self.view_features.len()
    }
}

/// Records plus the vocabulary their captions were tokenized against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub records: Vec<DatasetRecord>,
    pub max_caption_len: usize,
}

impl Dataset {
    pub fn new(vocab: Vocabulary, records: Vec<DatasetRecord>, max_caption_len: usize) -> Result<Self> {
        let ds = Self {
            vocab,
            records,
            max_caption_len,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let first = self.records.first();
        for r in &self.records {
            r.validate()?;
            if !ids.insert(r.object_id.as_str()) {
                return Err(Error::invalid(format!("duplicate object id {}", r.object_id)));
            }
            if let Some(f) = first {
                if r.voxel_features.len() != f.voxel_features.len()
                    || r.view_features[0].len() != f.view_features[0].len()
                    || r.view_features.len() != f.view_features.len()
                {
                    return Err(Error::invalid(format!(
                        "record {}: feature shape differs from record {}",
                        r.object_id, f.object_id
                    )));
                }
            }
            for c in &r.captions {
                if c.len() != self.max_caption_len {
                    return Err(Error::dim(
                        format!("caption length of {}", r.object_id),
                        self.max_caption_len,
                        c.len(),
                    ));
                }
                if c.iter().any(|&t| t as usize >= self.vocab.len()) {
                    return Err(Error::invalid(format!(
                        "record {}: token id outside vocabulary",
                        r.object_id
                    )));
                }
                if c.iter().all(|&t| t == PAD_ID) {
                    return Err(Error::invalid(format!(
                        "record {}: caption is all padding",
                        r.object_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&DatasetRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn voxel_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.voxel_features.len())
    }

    pub fn view_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.view_features[0].len())
    }

    pub fn views_per_object(&self) -> usize {
        self.records.first().map_or(0, DatasetRecord::views_per_object)
    }
}
