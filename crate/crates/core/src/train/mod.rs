//! Optimizer, schedule, training loop, evaluation and sweeps.

mod metrics;
mod optim;
mod sweep;

pub use metrics::{accuracy_metrics, part_iou_metrics, semantic_iou_metrics, shape_iou, Metrics, ShapePrediction};
pub use optim::Adam;
pub use sweep::{ablate, alpha_beta_settings, degree_settings, format_ablation, format_robustness, robustness_sweep, AblationRow};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{argmax, Graph, Mode, Tensor};
use crate::data::{Dataset, PointCloud, Sample, Task};
use crate::error::{Error, Result};
use crate::layers::{ForwardCtx, ModelState};
use crate::models::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Factor applied to the learning rate every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_split: String,
    /// Validation split; `None` picks `val`, then `test`, if present.
    pub val_split: Option<String>,
    /// Part segmentation: argmax only over the shape category's parts.
    pub restrict_parts: bool,
}

impl TrainConfig {
    /// Batch 64 and lr 5e−4 for classification, batch 32 and lr 1e−3 for
    /// segmentation; Adam (0.9, 0.999, 1e−8); halve the rate every 20 epochs.
    pub fn for_task(task: Task) -> Self {
        let (batch_size, lr) = match task {
            Task::Classification => (64, 5e-4),
            Task::PartSeg | Task::SemanticSeg => (32, 1e-3),
        };
        Self {
            task,
            batch_size,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.5,
            decay_every: 20,
            epochs: 100,
            seed: 0,
            train_split: "train".into(),
            val_split: None,
            restrict_parts: true,
        }
    }

    /// `lr · decay^⌊epoch / decay_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = epoch / self.decay_every.max(1);
        self.lr * self.lr_decay.powi(k as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch_size and decay_every must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("lr and eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One epoch's log record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub steps: usize,
    pub val: Option<Metrics>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_oa,val_macc,val_miou";

    pub fn csv_line(&self) -> String {
        let (oa, macc, miou) = self
            .val
            .as_ref()
            .map_or((f64::NAN, f64::NAN, f64::NAN), |m| {
                (m.overall_accuracy, m.mean_class_accuracy, m.mean_iou)
            });
        format!(
            "{},{:e},{:.10},{:.6},{:.6},{:.6}",
            self.epoch, self.lr, self.train_loss, oa, macc, miou
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Epoch whose weights the model holds on return (best validation score,
    /// or the last epoch without a validation split).
    pub best_epoch: usize,
    pub best_score: Option<f64>,
    /// Optimizer state matching the returned weights.
    pub optimizer: Adam,
    pub steps: usize,
}

/// Score used to pick the best epoch: overall accuracy for classification,
/// mean IoU for segmentation.
pub fn selection_score(task: Task, m: &Metrics) -> f64 {
    match task {
        Task::Classification => m.overall_accuracy,
        Task::PartSeg | Task::SemanticSeg => m.mean_iou,
    }
}

fn targets(model: &Model, clouds: &[&PointCloud]) -> Result<Vec<usize>> {
    let missing = |what: &str| Error::Data(format!("training cloud lacks {what}"));
    match model.task() {
        Task::Classification => clouds
            .iter()
            .map(|c| c.shape_label.ok_or_else(|| missing("a shape label")))
            .collect(),
        _ => {
            let mut t = Vec::new();
            for c in clouds {
                t.extend_from_slice(c.point_labels.as_ref().ok_or_else(|| missing("point labels"))?);
            }
            Ok(t)
        }
    }
}

/// One optimizer step on `clouds`; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    clouds: &[&PointCloud],
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let batch = model.batch(clouds)?;
    let t = targets(model, clouds)?;
    let (loss, grads, stats) = {
        let mut g = Graph::new();
        let bound = model.state.bind(&mut g);
        let mut ctx = ForwardCtx::new(Mode::Train, rng);
        let logits = model.forward(&mut g, &bound, &batch, &mut ctx)?;
        let loss = g.log_softmax_cross_entropy(logits, &t)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Ok(value);
        }
        g.backward(loss)?;
        let grads: Vec<Tensor> = bound.vars().iter().map(|&v| g.grad_or_zero(v)).collect();
        (value, grads, ctx.stats)
    };
    opt.update(model.state.params_mut(), &grads, lr)?;
    model.state.commit_stats(&stats);
    Ok(loss)
}

fn pick_val<'a>(ds: &'a Dataset, cfg: &TrainConfig) -> Result<Option<&'a [Sample]>> {
    match &cfg.val_split {
        Some(name) => ds.require_split(name).map(Some),
        None => Ok(ds
            .split("val")
            .filter(|s| !s.is_empty())
            .or_else(|| ds.split("test"))
            .filter(|s| !s.is_empty())),
    }
}

/// Trains `model` on `ds`, validating after every epoch.
///
/// On return the model holds the best-scoring weights. A non-finite loss
/// aborts with [`Error::Numeric`]. A trailing batch of a single cloud is
/// skipped, since batch statistics over one sample are degenerate.
pub fn train(
    model: &mut Model,
    ds: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.task != model.task() {
        return Err(Error::Config(format!(
            "dataset task '{}' does not match model task '{}'",
            ds.task.as_str(),
            model.task().as_str()
        )));
    }
    if ds.dim != model.config.input_dim {
        return Err(Error::Config(format!(
            "model expects {} features per point, dataset has {}",
            model.config.input_dim, ds.dim
        )));
    }
    let train_set = ds.require_split(&cfg.train_split)?;
    if train_set.is_empty() {
        return Err(Error::Data(format!("split '{}' is empty", cfg.train_split)));
    }
    let val_set = pick_val(ds, cfg)?;
    let eval_opts = EvalOptions {
        batch_size: cfg.batch_size,
        restrict_parts: cfg.restrict_parts,
    };

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d20f);
    let mut opt = Adam::new(model.state.param_values(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelState, Adam)> = None;
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut epoch_steps = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() == 1 && order.len() > 1 {
                continue;
            }
            let clouds: Vec<&PointCloud> = chunk.iter().map(|&i| &train_set[i].cloud).collect();
            let loss = train_step(model, &mut opt, &clouds, lr, &mut drop_rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    batch: bi,
                    lr,
                    loss,
                });
            }
            loss_sum += loss;
            epoch_steps += 1;
        }
        steps += epoch_steps;
        let val = match val_set {
            Some(v) => Some(evaluate_samples(model, ds, v, &eval_opts)?),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / epoch_steps.max(1) as f64,
            steps: epoch_steps,
            val,
        };
        log::info!("{}", entry.csv_line());
        on_epoch(&entry);
        if let Some(m) = &entry.val {
            let score = selection_score(model.task(), m);
            if best.as_ref().is_none_or(|(s, ..)| score > *s) {
                best = Some((score, epoch, model.state.clone(), opt.clone()));
            }
        }
        log.push(entry);
    }

    let (best_epoch, best_score, optimizer) = match best {
        Some((score, epoch, state, adam)) => {
            model.state = state;
            (epoch, Some(score), adam)
        }
        None => (cfg.epochs.saturating_sub(1), None, opt),
    };
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_score,
        optimizer,
        steps,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub restrict_parts: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            restrict_parts: true,
        }
    }
}

/// Eval-mode logits per cloud: `[k]` for classification, `[N, m]` for
/// segmentation. Runs of equal-size clouds are batched together.
pub fn predict_logits(model: &Model, clouds: &[&PointCloud], batch_size: usize) -> Result<Vec<Tensor>> {
    let mut chunks: Vec<&[&PointCloud]> = Vec::new();
    let mut start = 0;
    for i in 1..=clouds.len() {
        if i == clouds.len() || i - start == batch_size.max(1) || clouds[i].len() != clouds[start].len() {
            chunks.push(&clouds[start..i]);
            start = i;
        }
    }
    let per_chunk = chunks
        .par_iter()
        .map(|c| {
            let batch = model.batch(c)?;
            let logits = model.logits(&batch)?;
            let per = logits.len() / c.len();
            let shape: Vec<usize> = logits.shape()[1..].to_vec();
            Ok(logits
                .data()
                .chunks(per)
                .map(|d| Tensor::new(shape.clone(), d.to_vec()).expect("shape"))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Per-point labels from `[N, m]` logits, optionally restricted to `parts`.
pub fn point_predictions(logits: &Tensor, parts: Option<&[usize]>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            match parts {
                Some(p) if !p.is_empty() => {
                    let vals: Vec<f64> = p.iter().map(|&j| row[j]).collect();
                    p[argmax(&vals)]
                }
                _ => argmax(row),
            }
        })
        .collect()
}

/// Metrics for `samples` drawn from `ds` (which supplies class names and
/// part categories).
pub fn evaluate_samples(model: &Model, ds: &Dataset, samples: &[Sample], opts: &EvalOptions) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let clouds: Vec<&PointCloud> = samples.iter().map(|s| &s.cloud).collect();
    let logits = predict_logits(model, &clouds, opts.batch_size)?;
    match model.task() {
        Task::Classification => {
            let pred: Vec<usize> = logits.iter().map(|l| argmax(l.data())).collect();
            let gt = clouds
                .iter()
                .map(|c| c.shape_label.ok_or_else(|| Error::Data("cloud lacks a shape label".into())))
                .collect::<Result<Vec<_>>>()?;
            accuracy_metrics(&pred, &gt, model.config.num_classes)
        }
        Task::PartSeg => {
            let mut preds = Vec::with_capacity(clouds.len());
            for (c, l) in clouds.iter().zip(&logits) {
                let cat = c.category.ok_or_else(|| Error::Data("cloud lacks a category".into()))?;
                let parts = ds.categories.get(cat).map(|c| c.parts.as_slice());
                preds.push((cat, point_predictions(l, parts.filter(|_| opts.restrict_parts))));
            }
            let shapes = clouds
                .iter()
                .zip(&preds)
                .map(|(c, (cat, p))| {
                    Ok(ShapePrediction {
                        category: *cat,
                        pred: p,
                        gt: c.point_labels.as_deref().ok_or_else(|| Error::Data("cloud lacks point labels".into()))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            part_iou_metrics(&shapes, &ds.categories, model.config.num_classes)
        }
        Task::SemanticSeg => {
            let mut pred = Vec::new();
            let mut gt = Vec::new();
            for (c, l) in clouds.iter().zip(&logits) {
                pred.extend(point_predictions(l, None));
                gt.extend_from_slice(c.point_labels.as_deref().ok_or_else(|| Error::Data("cloud lacks point labels".into()))?);
            }
            semantic_iou_metrics(&pred, &gt, &ds.class_names)
        }
    }
}

/// Metrics on a named split of `ds`.
pub fn evaluate(model: &Model, ds: &Dataset, split: &str, opts: &EvalOptions) -> Result<Metrics> {
    if ds.dim != model.config.input_dim {
        return Err(Error::Config(format!(
            "model expects {} features per point, dataset has {}",
            model.config.input_dim, ds.dim
        )));
    }
    if ds.task != model.task() {
        return Err(Error::Config(format!(
            "dataset task '{}' does not match model task '{}'",
            ds.task.as_str(),
            model.task().as_str()
        )));
    }
    evaluate_samples(model, ds, ds.require_split(split)?, opts)
}
