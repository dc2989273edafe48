use std::fmt::Write as _;

use super::{evaluate, evaluate_samples, train, EvalOptions, Metrics, TrainConfig};
use crate::data::{Dataset, Sample};
use crate::error::Result;
use crate::jacobi::JacobiParams;
use crate::models::{Model, ModelConfig};

/// Evaluates `samples` after randomly keeping `keep` points of each cloud.
///
/// A keep count at or above a cloud's size leaves it untouched, so the
/// full-size entry equals plain evaluation. Cloud `i` is subsampled with
/// seed `seed ^ i`.
pub fn robustness_sweep(
    model: &Model,
    ds: &Dataset,
    samples: &[Sample],
    keeps: &[usize],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<(usize, Metrics)>> {
    keeps
        .iter()
        .map(|&keep| {
            let reduced = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let cloud = if keep >= s.cloud.len() {
                        s.cloud.clone()
                    } else {
                        s.cloud.drop_points(keep, seed ^ i as u64)?
                    };
                    Ok(Sample {
                        name: s.name.clone(),
                        cloud,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((keep, evaluate_samples(model, ds, &reduced, opts)?))
        })
        .collect()
}

/// Two-column table `points accuracy`.
pub fn format_robustness(curve: &[(usize, Metrics)]) -> String {
    let mut s = String::from("points\toverall_accuracy\n");
    for (k, m) in curve {
        let _ = writeln!(s, "{k}\t{:.6}", m.overall_accuracy);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub degree: usize,
    pub alpha: f64,
    pub beta: f64,
    pub params: usize,
    pub metrics: Metrics,
}

/// Degrees `lo..=hi` at the given `α`, `β`.
pub fn degree_settings(lo: usize, hi: usize, alpha: f64, beta: f64) -> Vec<(usize, f64, f64)> {
    (lo..=hi).map(|n| (n, alpha, beta)).collect()
}

/// Legendre, both Chebyshev kinds, Gegenbauer(1), and the two asymmetric
/// settings `(1, 2)` and `(2, 1)`.
pub fn alpha_beta_settings(degree: usize) -> Vec<(usize, f64, f64)> {
    [(0.0, 0.0), (-0.5, -0.5), (0.5, 0.5), (1.0, 1.0), (1.0, 2.0), (2.0, 1.0)]
        .into_iter()
        .map(|(a, b)| (degree, a, b))
        .collect()
}

/// Trains one model per `(degree, α, β)` setting from the same seed and
/// evaluates it on `eval_split`.
pub fn ablate(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    ds: &Dataset,
    settings: &[(usize, f64, f64)],
    eval_split: &str,
    model_seed: u64,
) -> Result<Vec<AblationRow>> {
    let opts = EvalOptions {
        batch_size: train_cfg.batch_size,
        restrict_parts: train_cfg.restrict_parts,
    };
    settings
        .iter()
        .map(|&(degree, alpha, beta)| {
            let cfg = ModelConfig {
                poly: JacobiParams::new(alpha, beta, degree)?,
                ..base.clone()
            };
            let mut model = Model::build(&cfg, model_seed)?;
            train(&mut model, ds, train_cfg, &mut |_| {})?;
            let metrics = evaluate(&model, ds, eval_split, &opts)?;
            log::info!(
                "ablation n={degree} alpha={alpha} beta={beta}: oa {:.4}",
                metrics.overall_accuracy
            );
            Ok(AblationRow {
                degree,
                alpha,
                beta,
                params: model.param_count(),
                metrics,
            })
        })
        .collect()
}

/// Tab-separated report, one row per setting.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("degree\talpha\tbeta\tparams\toverall_accuracy\tmean_class_accuracy\tmean_iou\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.degree,
            r.alpha,
            r.beta,
            r.params,
            r.metrics.overall_accuracy,
            r.metrics.mean_class_accuracy,
            r.metrics.mean_iou
        );
    }
    s
}
