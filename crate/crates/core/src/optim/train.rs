use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adam::{scaled_lr, AdamState};
use super::batching::{make_batches, BatchItem};
use crate::datagen::{Dataset, DatasetRecord, Split};
use crate::encoders::{init_parameters, GradientTape, ModelShape, Pooling, TrimodalModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::{
    bimodal_loss, trimodal_loss, trimodal_triplet_loss, triplet_semihard_loss, ContrastiveConfig, LossOutput,
    TripletConfig,
};
use crate::metrics::RankingSummary;
use crate::retrieval::{build_index, embed_captions, evaluate_split, gt_ranks, Strategy};
use crate::rng::rng_stream;
use crate::space::Modality;

/// Which modality pairs are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "bimodal-it")]
    BimodalIT,
    #[serde(rename = "bimodal-vt")]
    BimodalVT,
    #[serde(rename = "trimodal")]
    Trimodal,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::BimodalIT => "bimodal-it",
            TrainMode::BimodalVT => "bimodal-vt",
            TrainMode::Trimodal => "trimodal",
        }
    }

    pub fn modalities(self) -> BTreeSet<Modality> {
        match self {
            TrainMode::BimodalIT => [Modality::Text, Modality::Image].into(),
            TrainMode::BimodalVT => [Modality::Text, Modality::Voxel].into(),
            TrainMode::Trimodal => Modality::ALL.into(),
        }
    }

    /// Retrieval strategy used for validation.
    pub fn val_strategy(self) -> Strategy {
        match self {
            TrainMode::BimodalIT => Strategy::Image,
            TrainMode::BimodalVT => Strategy::Voxel,
            TrainMode::Trimodal => Strategy::Fused,
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimodal-it" => Ok(TrainMode::BimodalIT),
            "bimodal-vt" => Ok(TrainMode::BimodalVT),
            "trimodal" => Ok(TrainMode::Trimodal),
            _ => Err(Error::Config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ntxent,
    Triplet,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ntxent" => Ok(LossKind::Ntxent),
            "triplet" => Ok(LossKind::Triplet),
            _ => Err(Error::Config(format!("unknown loss {s:?}"))),
        }
    }
}

/// Validation metric used to pick the returned checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Mrr,
    Rr1,
    Rr5,
    Ndcg5,
}

/// Encoder sizes; vocabulary and feature widths come from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub pooling: Pooling,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            word_dim: 256,
            hidden_dim: 128,
            embed_dim: 512,
            pooling: Pooling::Mean,
        }
    }
}

impl Architecture {
    pub fn shape_for(&self, dataset: &Dataset) -> ModelShape {
        ModelShape {
            vocab_size: dataset.vocab.len(),
            word_dim: self.word_dim,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            view_dim: dataset.view_dim(),
            voxel_dim: dataset.voxel_dim(),
            pooling: self.pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub mode: TrainMode,
    pub loss: LossKind,
    pub contrastive: ContrastiveConfig,
    pub triplet: TripletConfig,
    pub batch_size: usize,
    /// Learning rate at `base_batch`; scaled linearly to `batch_size`.
    pub base_lr: f64,
    pub base_batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub selection: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            mode: TrainMode::Trimodal,
            loss: LossKind::Ntxent,
            contrastive: ContrastiveConfig::default(),
            triplet: TripletConfig::default(),
            batch_size: 128,
            base_lr: 0.00035,
            base_batch: 128,
            epochs: 20,
            seed: 0,
            selection: SelectionMetric::Mrr,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.contrastive.validate()?;
        self.triplet.validate()?;
        let min_batch = match self.loss {
            LossKind::Ntxent => 1,
            LossKind::Triplet => 2,
        };
        if self.batch_size < min_batch {
            return Err(Error::Config(format!("batch_size must be at least {min_batch}")));
        }
        if self.base_batch == 0 || !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config("base_lr and base_batch must be positive".into()));
        }
        let a = &self.architecture;
        if a.word_dim == 0 || a.hidden_dim == 0 || a.embed_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self) -> f64 {
        scaled_lr(self.base_lr, self.base_batch, self.batch_size)
    }
}

/// Validation scores after one epoch (epoch 0 is the initialization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rr1: f64,
    pub val_rr5: f64,
    pub val_ndcg5: f64,
    pub val_mrr: f64,
}

impl EpochRecord {
    fn metric(&self, m: SelectionMetric) -> f64 {
        match m {
            SelectionMetric::Mrr => self.val_mrr,
            SelectionMetric::Rr1 => self.val_rr1,
            SelectionMetric::Rr5 => self.val_rr5,
            SelectionMetric::Ndcg5 => self.val_ndcg5,
        }
    }
}

pub fn write_history_jsonl(history: &[EpochRecord], mut out: impl Write) -> Result<()> {
    for r in history {
        writeln!(
            out,
            "{}",
            serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: TrimodalModel,
    pub best_epoch: usize,
    /// Validation of the initialization; its `train_loss` is NaN.
    pub initial: EpochRecord,
    /// One record per trained epoch.
    pub history: Vec<EpochRecord>,
    pub effective_lr: f64,
}

/// Retrieval summary of `model` on the given records, every caption a query.
pub fn evaluate_records(
    model: &TrimodalModel,
    records: &[&DatasetRecord],
    pad_id: u32,
    strategy: Strategy,
) -> Result<RankingSummary> {
    let index = build_index(records, model, &[strategy], false)?;
    let queries = embed_captions(records, model, pad_id)?;
    let results = evaluate_split(&index, &queries, strategy, 1)?;
    RankingSummary::from_ranks(&gt_ranks(&results)?, &[1, 5])
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Matrix> {
    Matrix::from_rows(&rows)
}

/// Forward pass, loss and backward pass for one batch; gradients are added to `tape`.
pub fn batch_loss_and_grads(
    model: &TrimodalModel,
    records: &[&DatasetRecord],
    batch: &[BatchItem],
    cfg: &TrainConfig,
    pad_id: u32,
    tape: &mut GradientTape,
) -> Result<f64> {
    let mods = cfg.mode.modalities();
    let mut text = Vec::with_capacity(batch.len());
    let mut text_caches = Vec::with_capacity(batch.len());
    let mut image = Vec::new();
    let mut image_caches = Vec::new();
    let mut voxel = Vec::new();
    let mut voxel_caches = Vec::new();
    for item in batch {
        let rec = records[item.record];
        let (y, c) = model.text.encode(&rec.captions[item.caption], pad_id)?;
        text.push(y);
        text_caches.push(c);
        if mods.contains(&Modality::Image) {
            let (y, c) = model.image.encode(&rec.view_features)?;
            image.push(y);
            image_caches.push(c);
        }
        if mods.contains(&Modality::Voxel) {
            let (y, c) = model.voxel.forward(&rec.voxel_features)?;
            voxel.push(y);
            voxel_caches.push(c);
        }
    }
    let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|v| v.is_finite());
    if !(finite(&text) && finite(&image) && finite(&voxel)) {
        return Ok(f64::NAN);
    }
    let t = rows_to_matrix(text)?;
    // gradient order: [voxel, image, text] for trimodal; [shape, text] otherwise
    let (out, gv, gi, gt): (LossOutput, Option<usize>, Option<usize>, usize) = match (cfg.mode, cfg.loss) {
        (TrainMode::Trimodal, loss) => {
            let v = rows_to_matrix(voxel)?;
            let i = rows_to_matrix(image)?;
            let out = match loss {
                LossKind::Ntxent => trimodal_loss(&v, &i, &t, &cfg.contrastive)?,
                LossKind::Triplet => trimodal_triplet_loss(&v, &i, &t, &cfg.triplet)?,
            };
            (out, Some(0), Some(1), 2)
        }
        (mode, loss) => {
            let shape = rows_to_matrix(if mode == TrainMode::BimodalIT { image } else { voxel })?;
            let out = match loss {
                LossKind::Ntxent => bimodal_loss(&shape, &t, &cfg.contrastive)?,
                LossKind::Triplet => {
                    let mut o = triplet_semihard_loss(&t, &shape, &cfg.triplet)?;
                    o.grads.swap(0, 1);
                    o
                }
            };
            if mode == TrainMode::BimodalIT {
                (out, None, Some(0), 1)
            } else {
                (out, Some(0), None, 1)
            }
        }
    };
    if !out.value.is_finite() {
        return Ok(out.value);
    }
    for (r, c) in text_caches.iter().enumerate() {
        model.text.backward(c, out.grads[gt].row(r), &mut tape.text)?;
    }
    if let Some(g) = gi {
        for (r, c) in image_caches.iter().enumerate() {
            model.image.backward(c, out.grads[g].row(r), &mut tape.image)?;
        }
    }
    if let Some(g) = gv {
        for (r, c) in voxel_caches.iter().enumerate() {
            model.voxel.backward(c, out.grads[g].row(r), &mut tape.voxel)?;
        }
    }
    Ok(out.value)
}

/// Trains from a seeded initialization and returns the checkpoint with the
/// best validation score (the initialization included; ties keep the earlier epoch).
/// `on_epoch` sees each history record as soon as it is produced.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training needs nonempty train and val splits"));
    }
    let pad = dataset.vocab.pad_id();
    let strategy = cfg.mode.val_strategy();
    let shape = cfg.architecture.shape_for(dataset);
    let mut model = init_parameters(&shape, &mut rng_stream(cfg.seed, "init"))?;
    model.trained = cfg.mode.modalities();

    let score = |model: &TrimodalModel, epoch: usize, train_loss: f64| -> Result<EpochRecord> {
        let s = evaluate_records(model, &val_set, pad, strategy)?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_rr1: s.rr(1).expect("k=1 requested"),
            val_rr5: s.rr(5).expect("k=5 requested"),
            val_ndcg5: s.ndcg(5).expect("k=5 requested"),
            val_mrr: s.mrr,
        })
    };

    let initial = score(&model, 0, f64::NAN)?;
    let mut best = (model.clone(), 0usize, initial.metric(cfg.selection));
    let lr = cfg.effective_lr();
    let sizes: Vec<usize> = model.tensors_mut().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&sizes, lr);
    let mut tape = model.zero_grads();
    let counts: Vec<usize> = train_set.iter().map(|r| r.captions.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(
            &counts,
            cfg.batch_size,
            &mut rng_stream(cfg.seed, &format!("batches/{epoch}")),
        )?;
        let mut total = 0.0;
        for batch in &batches {
            step += 1;
            tape.zero();
            // collapsed or overflowing embeddings mean the run has diverged
            let loss = match batch_loss_and_grads(&model, &train_set, batch, cfg, pad, &mut tape) {
                Err(Error::ZeroNorm(_)) => f64::NAN,
                other => other?,
            };
            if !loss.is_finite() || !tape.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            total += loss;
            adam.step(&mut model.tensors_mut(), &tape.tensors())?;
            if model.tensors_mut().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, step, loss });
            }
        }
        let record = score(&model, epoch, total / batches.len() as f64)?;
        on_epoch(&record);
        if record.metric(cfg.selection) > best.2 {
            best = (model.clone(), epoch, record.metric(cfg.selection));
        }
        history.push(record);
    }

    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        initial,
        history,
        effective_lr: lr,
    })
}
