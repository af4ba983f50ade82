//! Shape indexes over trained encoders and cosine-similarity text queries.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::DatasetRecord;
use crate::encoders::TrimodalModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::{l2_normalize, Modality};

/// Which shape representation a text query is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "I")]
    Image,
    #[serde(rename = "V")]
    Voxel,
    #[serde(rename = "I+V")]
    Fused,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Image, Strategy::Voxel, Strategy::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Image => "I",
            Strategy::Voxel => "V",
            Strategy::Fused => "I+V",
        }
    }

    /// Shape modalities whose encoders the strategy reads.
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            Strategy::Image => &[Modality::Image],
            Strategy::Voxel => &[Modality::Voxel],
            Strategy::Fused => &[Modality::Image, Modality::Voxel],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "image" => Ok(Strategy::Image),
            "v" | "voxel" => Ok(Strategy::Voxel),
            "i+v" | "iv" | "fused" => Ok(Strategy::Fused),
            _ => Err(Error::Config(format!("unknown retrieval strategy {s:?}"))),
        }
    }
}

/// Elementwise sum of an image and a voxel embedding.
pub fn fuse_embeddings(image: &[f64], voxel: &[f64]) -> Result<Vec<f64>> {
    if image.len() != voxel.len() {
        return Err(Error::dim("fused embedding", image.len(), voxel.len()));
    }
    Ok(image.iter().zip(voxel).map(|(a, b)| a + b).collect())
}

/// Shape embeddings for one candidate pool. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeIndex {
    ids: Vec<String>,
    image: Option<Matrix>,
    voxel: Option<Matrix>,
    fused: Option<Matrix>,
    /// Unit-norm copies used for scoring, keyed by strategy.
    unit: HashMap<Strategy, Matrix>,
}

fn unit_rows(m: &Matrix, ids: &[String], what: &str) -> Result<Matrix> {
    let mut out = m.clone();
    for (i, id) in ids.iter().enumerate() {
        let u = l2_normalize(m.row(i)).map_err(|_| Error::ZeroNorm(format!("{what} embedding of {id}")))?;
        out.row_mut(i).copy_from_slice(&u);
    }
    Ok(out)
}

impl ShapeIndex {
    /// Builds an index from precomputed embeddings. The fused matrix is derived
    /// when both modalities are present; `prenormalize` sums unit vectors instead
    /// of raw embeddings.
    pub fn from_embeddings(
        ids: Vec<String>,
        image: Option<Matrix>,
        voxel: Option<Matrix>,
        prenormalize: bool,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("shape index is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate object id {dup}")));
        }
        for (name, m) in [("image", &image), ("voxel", &voxel)] {
            if let Some(m) = m {
                if m.rows() != ids.len() {
                    return Err(Error::dim(format!("{name} embedding rows"), ids.len(), m.rows()));
                }
            }
        }
        let fused = match (&image, &voxel) {
            (Some(i), Some(v)) => {
                if i.cols() != v.cols() {
                    return Err(Error::dim("fused embedding", i.cols(), v.cols()));
                }
                let mut f = Matrix::zeros(i.rows(), i.cols());
                for r in 0..i.rows() {
                    let row = if prenormalize {
                        let a = l2_normalize(i.row(r))
                            .map_err(|_| Error::ZeroNorm(format!("image embedding of {}", ids[r])))?;
                        let b = l2_normalize(v.row(r))
                            .map_err(|_| Error::ZeroNorm(format!("voxel embedding of {}", ids[r])))?;
                        fuse_embeddings(&a, &b)?
                    } else {
                        fuse_embeddings(i.row(r), v.row(r))?
                    };
                    f.row_mut(r).copy_from_slice(&row);
                }
                Some(f)
            }
            _ => None,
        };
        let mut unit = HashMap::new();
        for (s, m) in [
            (Strategy::Image, &image),
            (Strategy::Voxel, &voxel),
            (Strategy::Fused, &fused),
        ] {
            if let Some(m) = m {
                unit.insert(s, unit_rows(m, &ids, s.as_str())?);
            }
        }
        Ok(Self {
            ids,
            image,
            voxel,
            fused,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn image(&self) -> Option<&Matrix> {
        self.image.as_ref()
    }

    pub fn voxel(&self) -> Option<&Matrix> {
        self.voxel.as_ref()
    }

    pub fn fused(&self) -> Option<&Matrix> {
        self.fused.as_ref()
    }

    pub fn supports(&self, strategy: Strategy) -> bool {
        self.unit.contains_key(&strategy)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Cosine similarity of `text` against every candidate, in index order.
    pub fn scores(&self, text: &[f64], strategy: Strategy) -> Result<Vec<f64>> {
        let m = self
            .unit
            .get(&strategy)
            .ok_or_else(|| Error::invalid(format!("index has no embeddings for strategy {strategy}")))?;
        if text.len() != m.cols() {
            return Err(Error::dim("query embedding", m.cols(), text.len()));
        }
        let q = l2_normalize(text).map_err(|_| Error::ZeroNorm("query embedding".into()))?;
        Ok(m.matvec(&q))
    }

    /// Top-`k` candidates by descending cosine, ascending id on exact ties.
    /// `gt_rank` is computed over the full pool when `gt_id` is given.
    pub fn query(
        &self,
        query_id: &str,
        text: &[f64],
        strategy: Strategy,
        k: usize,
        gt_id: Option<&str>,
    ) -> Result<RankedResult> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let scores = self.scores(text, strategy)?;
        let better = |a: usize, b: usize| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, |&a, &b| better(a, b));
            order.truncate(k);
        }
        order.sort_unstable_by(|&a, &b| better(a, b));
        let gt_rank = match gt_id {
            Some(gt) => {
                let g = self
                    .position(gt)
                    .ok_or_else(|| Error::invalid(format!("ground truth {gt} not in index")))?;
                Some(1 + (0..self.len()).filter(|&c| better(c, g).is_lt()).count())
            }
            None => None,
        };
        Ok(RankedResult {
            query_id: query_id.to_string(),
            strategy,
            topk: order
                .into_iter()
                .map(|i| ScoredId {
                    id: self.ids[i].clone(),
                    score: scores[i],
                })
                .collect(),
            gt_rank,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query_id: String,
    pub strategy: Strategy,
    pub topk: Vec<ScoredId>,
    /// 1-based rank of the ground truth among all candidates.
    pub gt_rank: Option<usize>,
}

/// Embeds every record's shape modalities needed by `strategies`.
pub fn build_index(
    records: &[&DatasetRecord],
    model: &TrimodalModel,
    strategies: &[Strategy],
    prenormalize: bool,
) -> Result<ShapeIndex> {
    let need_image = strategies.iter().any(|s| s.modalities().contains(&Modality::Image));
    let need_voxel = strategies.iter().any(|s| s.modalities().contains(&Modality::Voxel));
    let d = model.embed_dim();
    let mut image = need_image.then(|| Matrix::zeros(records.len(), d));
    let mut voxel = need_voxel.then(|| Matrix::zeros(records.len(), d));
    for (r, rec) in records.iter().enumerate() {
        if let Some(m) = image.as_mut() {
            if rec.view_features.is_empty() {
                return Err(Error::invalid(format!(
                    "object {} has no image features",
                    rec.object_id
                )));
            }
            let (y, _) = model
                .image
                .encode(&rec.view_features)
                .map_err(|e| Error::invalid(format!("object {}: {e}", rec.object_id)))?;
            m.row_mut(r).copy_from_slice(&y);
        }
        if let Some(m) = voxel.as_mut() {
            if rec.voxel_features.is_empty() {
                return Err(Error::invalid(format!(
                    "object {} has no voxel features",
                    rec.object_id
                )));
            }
            let (y, _) = model
                .voxel
                .forward(&rec.voxel_features)
                .map_err(|e| Error::invalid(format!("object {}: {e}", rec.object_id)))?;
            m.row_mut(r).copy_from_slice(&y);
        }
    }
    let ids = records.iter().map(|r| r.object_id.clone()).collect();
    let index = ShapeIndex::from_embeddings(ids, image, voxel, prenormalize)?;
    if let Some(s) = strategies.iter().find(|s| !index.supports(**s)) {
        return Err(Error::invalid(format!("index cannot serve strategy {s}")));
    }
    Ok(index)
}

/// A caption query with its ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct TextQuery {
    pub query_id: String,
    pub gt_id: String,
    pub embedding: Vec<f64>,
}

/// One query per caption, ids `"{object_id}#{caption_index}"`.
pub fn embed_captions(records: &[&DatasetRecord], model: &TrimodalModel, pad_id: u32) -> Result<Vec<TextQuery>> {
    let mut out = Vec::new();
    for rec in records {
        for (c, tokens) in rec.captions.iter().enumerate() {
            let (embedding, _) = model
                .text
                .encode(tokens, pad_id)
                .map_err(|e| Error::invalid(format!("object {} caption {c}: {e}", rec.object_id)))?;
            out.push(TextQuery {
                query_id: format!("{}#{c}", rec.object_id),
                gt_id: rec.object_id.clone(),
                embedding,
            });
        }
    }
    Ok(out)
}

/// Ranks every query against the index.
/// Below this many queries the split is ranked on the calling thread.
const PARALLEL_MIN_QUERIES: usize = 512;

/// Ranks every query against the index. Large splits are ranked on scoped
/// worker threads over contiguous chunks; output order and values do not
/// depend on the thread count.
pub fn evaluate_split(
    index: &ShapeIndex,
    queries: &[TextQuery],
    strategy: Strategy,
    k: usize,
) -> Result<Vec<RankedResult>> {
    let run = |chunk: &[TextQuery]| -> Result<Vec<RankedResult>> {
        chunk
            .iter()
            .map(|q| index.query(&q.query_id, &q.embedding, strategy, k, Some(&q.gt_id)))
            .collect()
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    if threads < 2 || queries.len() < PARALLEL_MIN_QUERIES {
        return run(queries);
    }
    let chunk = queries.len().div_ceil(threads);
    let parts: Vec<Result<Vec<RankedResult>>> = std::thread::scope(|s| {
        let handles: Vec<_> = queries.chunks(chunk).map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ranking worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(queries.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

pub fn gt_ranks(results: &[RankedResult]) -> Result<Vec<usize>> {
    results
        .iter()
        .map(|r| {
            r.gt_rank
                .ok_or_else(|| Error::invalid(format!("query {} has no ground truth", r.query_id)))
        })
        .collect()
}

/// One JSON object per line.
pub fn write_results_jsonl(results: &[RankedResult], mut out: impl Write) -> Result<()> {
    for r in results {
        let line = serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
