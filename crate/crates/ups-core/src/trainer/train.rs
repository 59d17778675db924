//! Two-stage training protocol, multi-family batch mixing, checkpointing,
//! and few-shot adaptation.
//!
//! Batch-level work is sharded with rayon; per-sample gradient maps are
//! reduced in sample-index order so results are bit-identical regardless
//! of worker count.

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::{median_sigma, nrmse_node, reference_features};
use super::{Bandwidth, Error, Result, TrainConfig};
use crate::gradkit::{GradMap, NodeId, Tape, Tensor};
use crate::pdegen::TrajectorySet;
use crate::unirep::{make_pairs, FamilyBundle, NormStats, PairIdx};
use crate::upsnet::{format_metadata, is_complex_param, Model, ModelConfig, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    FewShot,
}

impl Stage {
    fn tag(&self) -> u64 {
        match self {
            Stage::Stage1 => 0x5147,
            Stage::Stage2 => 0x5247,
            Stage::FewShot => 0x4657,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::FewShot => "fewshot",
        }
    }
}

/// One family's training split, test split (same normalization stats),
/// formatted metadata, and teacher-forcing pairs.
pub struct FamilyTrainSet {
    pub bundle: FamilyBundle,
    pub test_bundle: FamilyBundle,
    pub metadata: String,
    pub pairs: Vec<PairIdx>,
    pub mask: Arc<Tensor>,
}

impl FamilyTrainSet {
    pub fn new(train: TrajectorySet, test: TrajectorySet) -> Result<Self> {
        let metadata = format_metadata(train.family.name(), &train.coefficients);
        let pairs = make_pairs(train.num_traj, train.t_steps)?;
        let bundle = FamilyBundle::from_train_set(train)?;
        let test_bundle = FamilyBundle::with_stats(test, bundle.stats.clone())?;
        let mask = Arc::new(bundle.mask_tensor());
        Ok(Self {
            bundle,
            test_bundle,
            metadata,
            pairs,
            mask,
        })
    }

    pub fn family_name(&self) -> &'static str {
        self.bundle.family().name()
    }
}

pub struct TrainData {
    pub families: Vec<FamilyTrainSet>,
}

impl TrainData {
    pub fn norm_stats(&self) -> NormStats {
        let mut stats = NormStats::default();
        for f in &self.families {
            stats.insert(f.family_name(), &f.bundle.stats, &f.bundle.mask);
        }
        stats
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRow {
    pub stage: String,
    pub epoch: usize,
    pub loss_align: f64,
    pub loss_task: f64,
    /// (family, one-step test nRMSE), in family order.
    pub test_nrmse: Vec<(String, f64)>,
}

#[derive(Default)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    /// Samples drawn per family across all batches, for protocol audits.
    pub batch_family_counts: BTreeMap<String, u64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

struct SampleSpec<'a> {
    family_idx: usize,
    set: &'a FamilyTrainSet,
    pair: PairIdx,
}

struct SampleGraph {
    tape: Tape,
    task: Option<NodeId>,
    pooled: NodeId,
    family_idx: usize,
    task_value: f64,
    pooled_value: Tensor,
}

fn forward_sample(model: &Model, spec: &SampleSpec) -> Result<SampleGraph> {
    let input = spec.set.bundle.input_frame(spec.pair.traj, spec.pair.t);
    let target = spec.set.bundle.target_frame(spec.pair.traj, spec.pair.t + 1);
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &input, &spec.set.metadata)?;
    let task = nrmse_node(&mut tape, out.prediction, &target, &spec.set.mask)?;
    let task_value = task.map(|id| tape.value(id).item()).unwrap_or(0.0);
    let pooled_value = tape.value(out.pooled_mix).clone();
    Ok(SampleGraph {
        tape,
        task,
        pooled: out.pooled_mix,
        family_idx: spec.family_idx,
        task_value,
        pooled_value,
    })
}

/// Per-sample task-loss weights realizing the double mean: samples are
/// first averaged within each family present in the batch, then across
/// families.
fn task_weights(samples: &[SampleGraph]) -> Vec<f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in samples {
        if s.task.is_some() {
            *counts.entry(s.family_idx).or_insert(0) += 1;
        }
    }
    let n_families = counts.len().max(1);
    samples
        .iter()
        .map(|s| {
            if s.task.is_none() {
                0.0
            } else {
                1.0 / (n_families as f64 * counts[&s.family_idx] as f64)
            }
        })
        .collect()
}

fn merge_grads(acc: &mut GradMap, g: GradMap) {
    for (name, grad) in g {
        match acc.entry(name) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(grad);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let dst = o.get_mut().data_mut();
                for (d, s) in dst.iter_mut().zip(grad.data()) {
                    *d += s;
                }
            }
        }
    }
}

struct StepOut {
    align: f64,
    task: f64,
    grads: GradMap,
}

/// One optimization step over a batch; alignment is included when a
/// reference corpus is supplied.
fn run_step(
    model: &Model,
    batch: &[SampleSpec],
    corpus: Option<&[String]>,
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<StepOut> {
    let samples: Vec<SampleGraph> = batch
        .par_iter()
        .map(|spec| forward_sample(model, spec))
        .collect::<Result<Vec<_>>>()?;
    let weights = task_weights(&samples);
    let task_value: f64 = samples
        .iter()
        .zip(&weights)
        .map(|(s, w)| s.task_value * w)
        .sum();
    if !task_value.is_finite() {
        return Err(Error::Numerical(format!(
            "task loss became non-finite ({task_value})"
        )));
    }

    // Alignment term: MMD^2 between the batch's pooled h_mix rows and
    // reference text features under the current embedding table. The
    // reference side is treated as a constant target distribution.
    let mut align_value = 0.0;
    let mut pooled_grads: Option<Tensor> = None;
    if let Some(corpus) = corpus {
        let e = model.cfg.e;
        let mut a_data = Vec::with_capacity(samples.len() * e);
        for s in &samples {
            a_data.extend_from_slice(s.pooled_value.data());
        }
        let a = Tensor::new(vec![samples.len(), e], a_data)?;
        let lines = subsample_corpus(corpus, cfg.reference_subsample, step_seed);
        let refs = reference_features(
            &lines.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            &model.params["meta.embedding"],
            model.cfg.max_meta_len,
        );
        let sigma = match cfg.mmd_bandwidth {
            Bandwidth::Median => median_sigma(&a, &refs),
            Bandwidth::Fixed(s) => s.max(1e-6),
        };
        let mut mtape = Tape::new();
        let an = mtape.param("batch", Arc::new(a));
        let bn = mtape.constant(refs);
        let mmd = mtape.mmd_gaussian(an, bn, sigma)?;
        align_value = mtape.value(mmd).item();
        if !align_value.is_finite() {
            return Err(Error::Numerical("alignment loss became non-finite".into()));
        }
        let g = mtape.backward(mmd)?;
        pooled_grads = Some(g["batch"].clone());
    }

    let e = model.cfg.e;
    let grad_maps: Vec<GradMap> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut seeds: Vec<(NodeId, Tensor)> = Vec::with_capacity(2);
            if let Some(task) = s.task {
                seeds.push((task, Tensor::scalar(cfg.task_weight * weights[i])));
            }
            if let Some(pg) = &pooled_grads {
                let row =
                    Tensor::new(vec![1, e], pg.data()[i * e..(i + 1) * e].to_vec())?;
                let scaled = row.map(|v| v * cfg.align_weight);
                seeds.push((s.pooled, scaled));
            }
            if seeds.is_empty() {
                return Ok(GradMap::new());
            }
            s.tape.backward_seeded(&seeds)
        })
        .collect::<crate::gradkit::Result<Vec<_>>>()?;
    let mut grads = GradMap::new();
    for g in grad_maps {
        merge_grads(&mut grads, g);
    }
    Ok(StepOut {
        align: align_value,
        task: task_value,
        grads,
    })
}

fn subsample_corpus(corpus: &[String], count: usize, seed: u64) -> Vec<String> {
    if count == 0 || count >= corpus.len() {
        return corpus.to_vec();
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(count);
    idx.sort_unstable();
    idx.into_iter().map(|i| corpus[i].clone()).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &mut Model,
    data: &TrainData,
    corpus: Option<&[String]>,
    cfg: &TrainConfig,
    stage: Stage,
    trainable: &BTreeSet<String>,
    hyper: &AdamHyper,
    adam: &mut AdamState,
    epoch_range: std::ops::Range<usize>,
    report: &mut TrainReport,
    mut epoch_hook: impl FnMut(usize, &Model, &AdamState) -> Result<()>,
) -> Result<()> {
    let pool: Vec<(usize, PairIdx)> = data
        .families
        .iter()
        .enumerate()
        .flat_map(|(fi, f)| f.pairs.iter().map(move |p| (fi, *p)))
        .collect();
    if pool.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    for epoch in epoch_range {
        let mut order = pool.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ stage.tag() ^ (epoch as u64)));
        order.shuffle(&mut rng);

        let mut align_sum = 0.0;
        let mut task_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SampleSpec> = chunk
                .iter()
                .map(|&(fi, pair)| SampleSpec {
                    family_idx: fi,
                    set: &data.families[fi],
                    pair,
                })
                .collect();
            for spec in &batch {
                *report
                    .batch_family_counts
                    .entry(spec.set.family_name().to_string())
                    .or_insert(0) += 1;
            }
            let step_seed = splitmix64(cfg.seed ^ stage.tag() ^ adam.step.wrapping_add(1));
            let out = run_step(model, &batch, corpus, cfg, step_seed)?;
            adam_step(&mut model.params, adam, &out.grads, trainable, hyper)?;
            align_sum += out.align;
            task_sum += out.task;
            steps += 1;
        }

        let mut test_rows = Vec::with_capacity(data.families.len());
        for f in &data.families {
            let nrmse = crate::eval::eval_one_step_nrmse(
                model,
                &f.test_bundle,
                &f.metadata,
                cfg.eval_pairs_per_family,
            )?;
            test_rows.push((f.family_name().to_string(), nrmse));
        }
        let row = EpochRow {
            stage: stage.name().to_string(),
            epoch,
            loss_align: align_sum / steps as f64,
            loss_task: task_sum / steps as f64,
            test_nrmse: test_rows,
        };
        log::info!(
            "{} epoch {epoch}: align {:.5} task {:.5} test {:?}",
            stage.name(),
            row.loss_align,
            row.loss_task,
            row.test_nrmse
        );
        report.rows.push(row);
        epoch_hook(epoch, model, adam)?;
    }
    Ok(())
}

/// Stage 1: pretrain the embedding network (FNO stack, lift/projection,
/// metadata embedding, post-embedding norm) plus predictor against the
/// combined alignment + task objective; the transformer body stays frozen.
pub fn stage1_train(
    model: &mut Model,
    data: &TrainData,
    corpus: &[String],
    cfg: &TrainConfig,
    report: &mut TrainReport,
) -> Result<AdamState> {
    cfg.validate()?;
    let trainable: BTreeSet<String> = model.stage1_trainable().into_iter().collect();
    let hyper = AdamHyper::new(cfg.lr, cfg.weight_decay, cfg.grad_clip);
    let mut adam = AdamState::new();
    run_epochs(
        model,
        data,
        Some(corpus),
        cfg,
        Stage::Stage1,
        &trainable,
        &hyper,
        &mut adam,
        0..cfg.stage1_epochs,
        report,
        |_, _, _| Ok(()),
    )?;
    Ok(adam)
}

/// Stage 2: fine-tune the entire model with the task loss over the
/// shuffled multi-family pair pool.
pub fn stage2_train(
    model: &mut Model,
    data: &TrainData,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    start_epoch: usize,
    report: &mut TrainReport,
    epoch_hook: impl FnMut(usize, &Model, &AdamState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    let trainable: BTreeSet<String> = model.params.keys().cloned().collect();
    let hyper = AdamHyper::new(cfg.lr, cfg.weight_decay, cfg.grad_clip);
    run_epochs(
        model,
        data,
        None,
        cfg,
        Stage::Stage2,
        &trainable,
        &hyper,
        adam,
        start_epoch..cfg.stage2_epochs,
        report,
        epoch_hook,
    )
}

/// Fine-tune a copy of the model on `k` trajectories of an unseen family
/// at the reduced few-shot learning rate. `k = 0` returns the model
/// unchanged (pure zero-shot).
pub fn fewshot_adapt(
    model: &Model,
    heldout: &FamilyTrainSet,
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Model> {
    let available = heldout.bundle.set.num_traj;
    if k > available {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {available} available trajectories"
        )));
    }
    let mut adapted = Model::from_parts(model.cfg.clone(), model.params.clone())?;
    if k == 0 {
        return Ok(adapted);
    }
    // Deterministic trajectory subset.
    let mut idx: Vec<usize> = (0..available).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x4657));
    idx.shuffle(&mut rng);
    idx.truncate(k);
    idx.sort_unstable();
    let t_steps = heldout.bundle.set.t_steps;
    let pairs: Vec<PairIdx> = idx
        .iter()
        .flat_map(|&traj| (0..t_steps - 1).map(move |t| PairIdx { traj, t }))
        .collect();

    let subset = FamilyTrainSet {
        bundle: heldout.bundle.clone(),
        test_bundle: heldout.test_bundle.clone(),
        metadata: heldout.metadata.clone(),
        pairs,
        mask: heldout.mask.clone(),
    };
    let data = TrainData {
        families: vec![subset],
    };
    let fs_cfg = TrainConfig {
        lr: cfg.fewshot_lr,
        seed,
        ..cfg.clone()
    };
    let trainable: BTreeSet<String> = adapted.params.keys().cloned().collect();
    let hyper = AdamHyper::new(fs_cfg.fewshot_lr, fs_cfg.weight_decay, fs_cfg.grad_clip);
    let mut adam = AdamState::new();
    let mut report = TrainReport::default();
    run_epochs(
        &mut adapted,
        &data,
        None,
        &fs_cfg,
        Stage::FewShot,
        &trainable,
        &hyper,
        &mut adam,
        0..fs_cfg.fewshot_epochs,
        &mut report,
        |_, _, _| Ok(()),
    )?;
    Ok(adapted)
}

/// Everything needed to resume a run bit-exactly: parameters, Adam
/// moments, step counter, stage bookkeeping, and normalization stats.
pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    pub stage: Stage,
    pub epochs_done: usize,
    pub stats: NormStats,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    model: ModelConfig,
    stage: Stage,
    epochs_done: usize,
    adam_step: u64,
    stats: NormStats,
}

/// Write `<prefix>.upsw` (parameters plus Adam moments) and
/// `<prefix>.json` (config, stage, stats).
pub fn save_checkpoint(
    prefix: &Path,
    model: &Model,
    adam: &AdamState,
    stage: Stage,
    epochs_done: usize,
    stats: &NormStats,
) -> Result<()> {
    let mut entries: Vec<(String, Arc<Tensor>)> = Vec::new();
    for (name, t) in &model.params {
        entries.push((name.clone(), t.clone()));
    }
    for (name, t) in &adam.m {
        entries.push((format!("adam.m.{name}"), Arc::new(t.clone())));
    }
    for (name, t) in &adam.v {
        entries.push((format!("adam.v.{name}"), Arc::new(t.clone())));
    }
    let weights_path = prefix.with_extension("upsw");
    crate::gradkit::write_weights(
        &weights_path,
        entries.iter().map(|(n, t)| {
            let dtype = if is_complex_param(n) {
                crate::gradkit::Dtype::Complex64Pair
            } else {
                crate::gradkit::Dtype::Real64
            };
            (n.as_str(), t.as_ref(), dtype)
        }),
    )?;
    let sidecar = Sidecar {
        model: model.cfg.clone(),
        stage,
        epochs_done,
        adam_step: adam.step,
        stats: stats.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("sidecar serialization: {e}")))?;
    std::fs::write(prefix.with_extension("json"), json)?;
    Ok(())
}

pub fn load_checkpoint(prefix: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(prefix.with_extension("json"))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("sidecar JSON: {e}")))?;
    let entries = crate::gradkit::read_weights(&prefix.with_extension("upsw"))?;
    let mut params = ParamStore::new();
    let mut adam = AdamState::new();
    adam.step = sidecar.adam_step;
    for (name, t, _) in entries {
        if let Some(rest) = name.strip_prefix("adam.m.") {
            adam.m.insert(rest.to_string(), t);
        } else if let Some(rest) = name.strip_prefix("adam.v.") {
            adam.v.insert(rest.to_string(), t);
        } else {
            params.insert(name, Arc::new(t));
        }
    }
    let model = Model::from_parts(sidecar.model, params)?;
    Ok(Checkpoint {
        model,
        adam,
        stage: sidecar.stage,
        epochs_done: sidecar.epochs_done,
        stats: sidecar.stats,
    })
}
