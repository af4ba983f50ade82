use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::datagen::{generate_synthetic_dataset, load_dataset_dir, write_dataset_dir, Dataset, DatasetRecord};
use crate::encoders::{load_checkpoint, save_checkpoint, TrimodalModel};
use crate::error::{Error, Result};
use crate::metrics::{
    compare_clouds, format_csv, format_table, load_obj, parse_csv, rescale_to_units, sample_mesh_points, PointCloud,
    RankingSummary, ReportRow, ShapeMetrics, Stat,
};
use crate::optim::{train, write_history_jsonl, TrainOutcome};
use crate::retrieval::{
    build_index, embed_captions, evaluate_split, gt_ranks, write_results_jsonl, RankedResult, Strategy,
};
use crate::rng::rng_stream;

pub const CHECKPOINT_FILE: &str = "checkpoint.tckp";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TABLE: &str = "report.txt";
pub const SUMMARY_CSV: &str = "summary.csv";

/// Generates the synthetic dataset into the data directory.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let spec = &cfg.data.synthetic;
    let (records, vocab) = generate_synthetic_dataset(spec, cfg.seed)?;
    let dataset = Dataset::new(vocab, records, spec.max_caption_len)?;
    let dir = cfg.data_dir();
    write_dataset_dir(&dir, &dataset)?;
    Ok(dir)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = cfg.data_dir();
    load_dataset_dir(&dir, cfg.data.synthetic.max_caption_len).map_err(|e| match e {
        Error::Io(io) => Error::invalid(format!(
            "cannot read dataset in {}: {io} (run gen-data first or set data.dir)",
            dir.display()
        )),
        other => other,
    })
}

/// Trains, then writes the best checkpoint and the per-epoch history.
/// Progress lines go to `log`.
pub fn cmd_train(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let tc = cfg.train_config();
    writeln!(
        log,
        "effective lr {} (base {} at batch {}, batch {})",
        tc.effective_lr(),
        tc.base_lr,
        tc.base_batch,
        tc.batch_size
    )?;
    let mut io_err = None;
    let outcome = train(&dataset, &tc, |r| {
        if let Err(e) = writeln!(
            log,
            "epoch {:>3}  loss {:.4}  val RR@1 {:.2}  RR@5 {:.2}  NDCG@5 {:.2}  MRR {:.2}",
            r.epoch, r.train_loss, r.val_rr1, r.val_rr5, r.val_ndcg5, r.val_mrr
        ) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    fs::create_dir_all(&cfg.output_dir)?;
    save_checkpoint(&outcome.best, cfg.output_dir.join(CHECKPOINT_FILE))?;
    let mut hist = Vec::new();
    write_history_jsonl(&outcome.history, &mut hist)?;
    fs::write(cfg.output_dir.join(HISTORY_FILE), hist)?;
    writeln!(
        log,
        "best epoch {} -> {}",
        outcome.best_epoch,
        cfg.output_dir.join(CHECKPOINT_FILE).display()
    )?;
    Ok(outcome)
}

fn check_trained(model: &TrimodalModel, strategy: Strategy, path: &Path) -> Result<()> {
    for m in strategy.modalities() {
        if !model.trained.contains(m) {
            return Err(Error::Config(format!(
                "strategy {strategy} needs the {m} encoder, which {} did not train",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Sampled, rescaled surface clouds keyed by object id.
struct MeshClouds<'a> {
    dir: &'a Path,
    cfg: &'a ExperimentConfig,
    cache: HashMap<String, PointCloud>,
}

impl MeshClouds<'_> {
    fn get(&mut self, id: &str) -> Result<&PointCloud> {
        if !self.cache.contains_key(id) {
            let mesh = load_obj(self.dir.join(format!("{id}.obj")))?;
            let mut rng = rng_stream(self.cfg.seed, &format!("mesh-sampling/{id}"));
            let cloud = sample_mesh_points(&mesh, self.cfg.eval.metrics.n_samples, &mut rng)
                .and_then(|c| rescale_to_units(&c))
                .map_err(|e| Error::invalid(format!("mesh {id}: {e}")))?;
            self.cache.insert(id.to_string(), cloud);
        }
        Ok(&self.cache[id])
    }
}

/// Geometry metrics between each query's ground truth and its top-1 result, averaged.
fn geometry_columns(results: &[RankedResult], clouds: &mut MeshClouds<'_>) -> Result<[f64; 5]> {
    let taus = [0.1, 0.3, 0.5];
    let mut sums = [0.0; 5];
    let mut pair_cache: HashMap<(String, String), ShapeMetrics> = HashMap::new();
    for r in results {
        let gt = r.query_id.split('#').next().unwrap_or(&r.query_id).to_string();
        let top = r.topk[0].id.clone();
        let key = (gt.clone(), top.clone());
        if !pair_cache.contains_key(&key) {
            let a = clouds.get(&gt)?.clone();
            let b = clouds.get(&top)?;
            pair_cache.insert(key.clone(), compare_clouds(&a, b, &taus)?);
        }
        let m = &pair_cache[&key];
        for (s, (_, v)) in sums.iter_mut().zip(&m.f1) {
            *s += v;
        }
        sums[3] += m.chamfer;
        sums[4] += m.normal_consistency.unwrap_or(f64::NAN);
    }
    Ok(sums.map(|s| s / results.len() as f64))
}

/// Per-checkpoint metric values for one strategy, in report-column order.
fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    model: &TrimodalModel,
    records: &[&DatasetRecord],
    pad: u32,
    strategy: Strategy,
    clouds: Option<&mut MeshClouds<'_>>,
) -> Result<(Vec<Option<f64>>, Vec<RankedResult>)> {
    let index = build_index(records, model, &[strategy], cfg.eval.prenormalize)?;
    let queries = embed_captions(records, model, pad)?;
    let k = cfg.eval.metrics.k.iter().copied().max().unwrap_or(1).max(1);
    let results = evaluate_split(&index, &queries, strategy, k)?;
    let mut ks = cfg.eval.metrics.k.clone();
    ks.extend([1, 5]);
    let s = RankingSummary::from_ranks(&gt_ranks(&results)?, &ks)?;
    let mut values = vec![s.rr(1), s.rr(5), s.ndcg(5), Some(s.mrr)];
    match clouds {
        Some(c) => values.extend(geometry_columns(&results, c)?.map(Some)),
        None => values.extend([None; 5]),
    }
    Ok((values, results))
}

/// Evaluates one or more checkpoints on the configured split. Several
/// checkpoints (one per seed) are reported as mean ± standard error.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoints: &[PathBuf]) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one checkpoint".into()));
    }
    let dataset = load_dataset(cfg)?;
    let models = checkpoints
        .iter()
        .map(|p| load_checkpoint(p).map(|m| (p, m)))
        .collect::<Result<Vec<_>>>()?;
    for (path, m) in &models {
        for &s in &cfg.eval.strategies {
            check_trained(m, s, path)?;
        }
    }
    let records = dataset.split(cfg.eval.split);
    if records.is_empty() {
        return Err(Error::invalid(format!("split {} is empty", cfg.eval.split)));
    }
    let pad = dataset.vocab.pad_id();
    let mut clouds = cfg.eval.mesh_dir.as_deref().map(|dir| MeshClouds {
        dir,
        cfg,
        cache: HashMap::new(),
    });

    let mut rows = Vec::new();
    let mut dumps: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for &strategy in &cfg.eval.strategies {
        let mut per_ckpt = Vec::new();
        for (i, (_, model)) in models.iter().enumerate() {
            let (values, results) = evaluate_checkpoint(cfg, model, &records, pad, strategy, clouds.as_mut())?;
            let mut buf = Vec::new();
            write_results_jsonl(&results, &mut buf)?;
            let slug = strategy.as_str().replace('+', "");
            dumps.insert(format!("retrieval-{i}-{slug}.jsonl"), buf);
            per_ckpt.push(values);
        }
        let mut values = [None; 9];
        for (c, slot) in values.iter_mut().enumerate() {
            let samples: Option<Vec<f64>> = per_ckpt.iter().map(|v| v[c]).collect();
            if let Some(s) = samples {
                *slot = Some(Stat::from_samples(&s)?);
            }
        }
        rows.push(ReportRow {
            model: cfg.model_name(),
            strategy: strategy.to_string(),
            values,
        });
    }

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(REPORT_CSV), format_csv(&rows)?)?;
    fs::write(cfg.output_dir.join(REPORT_TABLE), format_table(&rows))?;
    for (name, bytes) in dumps {
        fs::write(cfg.output_dir.join(name), bytes)?;
    }
    Ok(rows)
}

/// Ranks the configured split's objects for one free-text caption.
pub fn cmd_retrieve(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    caption: &[String],
    strategy: Strategy,
    k: usize,
) -> Result<RankedResult> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let dataset = load_dataset(cfg)?;
    let model = load_checkpoint(checkpoint)?;
    check_trained(&model, strategy, checkpoint)?;
    let words: Vec<String> = caption
        .iter()
        .flat_map(|c| c.split_whitespace())
        .map(str::to_lowercase)
        .collect();
    let unknown = dataset.vocab.unknown(&words);
    let tokens = dataset
        .vocab
        .tokenize(&words, cfg.data.synthetic.max_caption_len)
        .map_err(|_| Error::Config(format!("no known words in caption; unknown: {}", unknown.join(" "))))?;
    let records = dataset.split(cfg.eval.split);
    if records.is_empty() {
        return Err(Error::invalid(format!("split {} is empty", cfg.eval.split)));
    }
    let index = build_index(&records, &model, &[strategy], cfg.eval.prenormalize)?;
    let (emb, _) = model.text.encode(&tokens, dataset.vocab.pad_id())?;
    index.query(&words.join(" "), &emb, strategy, k, None)
}

/// Plain-text form of a retrieval result.
pub fn format_ranked(r: &RankedResult) -> String {
    let mut out = String::new();
    for (i, s) in r.topk.iter().enumerate() {
        out.push_str(&format!("{:>3}  {}  {:.6}\n", i + 1, s.id, s.score));
    }
    out
}

/// Samples both meshes with the same stream, rescales each to its own
/// bounding box, and compares them.
pub fn cmd_shape_metrics(cfg: &ExperimentConfig, gt: &Path, ret: &Path) -> Result<ShapeMetrics> {
    cfg.validate()?;
    let sample = |path: &Path| -> Result<PointCloud> {
        let mesh = load_obj(path)?;
        let mut rng = rng_stream(cfg.seed, "mesh-sampling");
        let cloud = sample_mesh_points(&mesh, cfg.eval.metrics.n_samples, &mut rng)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        rescale_to_units(&cloud).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    };
    let a = sample(gt)?;
    let b = sample(ret)?;
    compare_clouds(&a, &b, &cfg.eval.metrics.tau_geo)
}

pub fn format_shape_metrics(m: &ShapeMetrics) -> String {
    let mut parts: Vec<String> = m.f1.iter().map(|(t, v)| format!("F1^{t}={v:.4}")).collect();
    parts.push(format!("CD={:.6}", m.chamfer));
    if let Some(nc) = m.normal_consistency {
        parts.push(format!("NC={nc:.6}"));
    }
    parts.join(" ")
}

/// Merges eval reports. Rows sharing (model, strategy) across files are
/// aggregated into mean ± standard error; the merged table is returned and
/// written to `<output_dir>/summary.csv`.
pub fn cmd_report(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input csv".into()));
    }
    let mut groups: Vec<((String, String), Vec<ReportRow>)> = Vec::new();
    for path in inputs {
        let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        for row in parse_csv(&text, &path.display().to_string())? {
            let key = (row.model.clone(), row.strategy.clone());
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, rows)) => rows.push(row),
                None => groups.push((key, vec![row])),
            }
        }
    }
    let mut merged = Vec::new();
    for ((model, strategy), rows) in groups {
        let mut values = [None; 9];
        for (c, slot) in values.iter_mut().enumerate() {
            if rows.len() == 1 {
                *slot = rows[0].values[c];
                continue;
            }
            let samples: Option<Vec<f64>> = rows.iter().map(|r| r.values[c].map(|s| s.mean)).collect();
            if let Some(s) = samples {
                *slot = Some(Stat::from_samples(&s)?);
            }
        }
        merged.push(ReportRow {
            model,
            strategy,
            values,
        });
    }
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(SUMMARY_CSV), format_csv(&merged)?)?;
    Ok(merged)
}
