use crate::error::{contract, Result};

use super::{BackwardFn, Graph, Mode, Tensor, Var};

/// Running statistics and hyper-parameters of one batch-norm layer.
///
/// The trainable scale and shift live with the other parameters; this
/// struct only holds what the optimizer does not touch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
    pub eps: f64,
}

/// Statistics measured on one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance (divides by `count - 1`), used for the running estimate.
    pub var_unbiased: Vec<f64>,
    pub count: usize,
}

impl BatchNormState {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var_unbiased) {
            *r = (m * *r + (1.0 - m) * b).max(0.0);
        }
    }
}

impl Graph {
    /// Batch normalization over every non-channel axis.
    ///
    /// In [`Mode::Train`] the batch mean and (biased) variance normalize the
    /// input and the measured statistics are returned so the caller can fold
    /// them into the running estimate. In [`Mode::Eval`] only the running
    /// statistics are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        state: &BatchNormState,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats>)> {
        let xs = self.value(x);
        let (rows, cols) = (xs.rows(), xs.cols());
        contract!(
            cols == state.channels()
                && self.value(scale).len() == cols
                && self.value(shift).len() == cols,
            "batch norm: input has {cols} channels, state has {}",
            state.channels()
        );
        contract!(rows > 0, "batch norm over an empty batch");
        let eps = state.eps;
        let data = xs.data();

        let (mean, var, stats) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; cols];
                for row in data.chunks(cols) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= rows as f64;
                }
                let mut var = vec![0.0; cols];
                for row in data.chunks(cols) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                let unbiased: Vec<f64> = var
                    .iter()
                    .map(|s| if rows > 1 { s / (rows - 1) as f64 } else { 0.0 })
                    .collect();
                for s in &mut var {
                    *s /= rows as f64;
                }
                let stats = BatchStats {
                    mean: mean.clone(),
                    var_unbiased: unbiased,
                    count: rows,
                };
                (mean, var, Some(stats))
            }
            Mode::Eval => (state.running_mean.clone(), state.running_var.clone(), None),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (gamma, beta) = (self.value(scale).data(), self.value(shift).data());
        let mut out = Vec::with_capacity(data.len());
        for row in data.chunks(cols) {
            for c in 0..cols {
                out.push(gamma[c] * (row[c] - mean[c]) * inv_std[c] + beta[c]);
            }
        }
        let value = Tensor::new(xs.shape().to_vec(), out)?;

        let train = mode == Mode::Train;
        let rule: BackwardFn = Box::new(move |ctx| {
            let (xs, gamma, up) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
            let g = gamma.data();
            let mut sum_up = vec![0.0; cols];
            let mut sum_up_xhat = vec![0.0; cols];
            for (row, urow) in xs.data().chunks(cols).zip(up.data().chunks(cols)) {
                for c in 0..cols {
                    let xhat = (row[c] - mean[c]) * inv_std[c];
                    sum_up[c] += urow[c];
                    sum_up_xhat[c] += urow[c] * xhat;
                }
            }
            let dx = ctx.needs[0].then(|| {
                let n = rows as f64;
                let mut dx = Vec::with_capacity(xs.len());
                for (row, urow) in xs.data().chunks(cols).zip(up.data().chunks(cols)) {
                    for c in 0..cols {
                        let v = if train {
                            let xhat = (row[c] - mean[c]) * inv_std[c];
                            g[c] * inv_std[c] / n
                                * (n * urow[c] - sum_up[c] - xhat * sum_up_xhat[c])
                        } else {
                            g[c] * inv_std[c] * urow[c]
                        };
                        dx.push(v);
                    }
                }
                Tensor::new(xs.shape().to_vec(), dx).expect("shape")
            });
            let dscale = ctx.needs[1]
                .then(|| Tensor::new(gamma.shape().to_vec(), sum_up_xhat).expect("shape"));
            let dshift = ctx.needs[2]
                .then(|| Tensor::new(ctx.inputs[2].shape().to_vec(), sum_up).expect("shape"));
            vec![dx, dscale, dshift]
        });
        Ok((self.custom(&[x, scale, shift], value, rule), stats))
    }
}
