//! Differentiable operations recorded on a [`Graph`].
//!
//! Everything works on matrix views: the last axis is the channel axis and
//! all leading axes are flattened into rows. A batch of `B` clouds with `N`
//! points each is therefore a `(B·N) × C` matrix.

use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::jacobi::JacobiBasis;

use super::linalg::gemm;
use super::{BackwardFn, Graph, Mode, Tensor, Var};

impl Graph {
    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, x: Var) -> Var {
        let value = map(self.value(x), f64::tanh);
        let rule: BackwardFn = Box::new(|ctx| {
            let g = zip_map(ctx.grad, ctx.output, |g, y| g * (1.0 - y * y));
            vec![Some(g)]
        });
        self.custom(&[x], value, rule)
    }

    /// Elementwise `max(x, 0)`; the gradient at exactly zero is zero.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = map(self.value(x), |v| v.max(0.0));
        let rule: BackwardFn = Box::new(|ctx| {
            let g = zip_map(ctx.grad, ctx.inputs[0], |g, x| if x > 0.0 { g } else { 0.0 });
            vec![Some(g)]
        });
        self.custom(&[x], value, rule)
    }

    /// Jacobi-basis contraction of a KAN layer.
    ///
    /// `x` is `rows × d_in` with entries in `[-1, 1]`, `omega` is
    /// `(n+1) × d_in × d_out` and the result is
    /// `out[p, j] = Σ_i Σ_c omega[i, c, j] · f_i(x[p, c])`.
    pub fn basis_contract(&mut self, x: Var, omega: Var, basis: &JacobiBasis) -> Result<Var> {
        let xs = self.value(x);
        let ws = self.value(omega);
        let nb = basis.len();
        contract!(
            xs.rank() == 2,
            "basis_contract input must be a matrix, got {:?}",
            xs.shape()
        );
        let (rows, d_in) = (xs.shape()[0], xs.shape()[1]);
        contract!(
            ws.rank() == 3 && ws.shape()[0] == nb && ws.shape()[1] == d_in,
            "omega shape {:?} does not match ({nb}, {d_in}, _)",
            ws.shape()
        );
        let d_out = ws.shape()[2];
        let k = nb * d_in;
        let phi = expand_basis(xs.data(), rows, d_in, basis, None);
        let mut out = vec![0.0; rows * d_out];
        gemm(rows, k, d_out, &phi, false, ws.data(), false, &mut out, false);
        let value = Tensor::new(vec![rows, d_out], out)?;

        let basis = basis.clone();
        let rule: BackwardFn = Box::new(move |ctx| {
            let (xs, ws, up) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
            let mut slopes = ctx.needs[0].then(|| vec![0.0; rows * k]);
            let phi = expand_basis(xs.data(), rows, d_in, &basis, slopes.as_deref_mut());
            let d_omega = ctx.needs[1].then(|| {
                let mut dw = vec![0.0; k * d_out];
                gemm(k, rows, d_out, &phi, true, up.data(), false, &mut dw, false);
                Tensor::new(ws.shape().to_vec(), dw).expect("omega grad shape")
            });
            let d_x = slopes.map(|slopes| {
                let mut dphi = vec![0.0; rows * k];
                gemm(rows, d_out, k, up.data(), false, ws.data(), true, &mut dphi, false);
                let mut dx = vec![0.0; rows * d_in];
                for p in 0..rows {
                    let drow = &dphi[p * k..(p + 1) * k];
                    let srow = &slopes[p * k..(p + 1) * k];
                    let out = &mut dx[p * d_in..(p + 1) * d_in];
                    for i in 0..nb {
                        for c in 0..d_in {
                            out[c] += drow[i * d_in + c] * srow[i * d_in + c];
                        }
                    }
                }
                Tensor::new(vec![rows, d_in], dx).expect("input grad shape")
            });
            vec![d_x, d_omega]
        });
        Ok(self.custom(&[x, omega], value, rule))
    }

    /// Affine map `x · w + b` with `w` of shape `d_in × d_out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        contract!(
            xs.rank() == 2 && ws.rank() == 2 && xs.shape()[1] == ws.shape()[0],
            "linear: input {:?} incompatible with weight {:?}",
            xs.shape(),
            ws.shape()
        );
        let (rows, d_in, d_out) = (xs.shape()[0], ws.shape()[0], ws.shape()[1]);
        contract!(
            bs.len() == d_out,
            "linear: bias length {} != {}",
            bs.len(),
            d_out
        );
        let mut out = Vec::with_capacity(rows * d_out);
        for _ in 0..rows {
            out.extend_from_slice(bs.data());
        }
        gemm(rows, d_in, d_out, xs.data(), false, ws.data(), false, &mut out, true);
        let value = Tensor::new(vec![rows, d_out], out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let (xs, ws, bs, up) = (ctx.inputs[0], ctx.inputs[1], ctx.inputs[2], ctx.grad);
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![0.0; rows * d_in];
                gemm(rows, d_out, d_in, up.data(), false, ws.data(), true, &mut dx, false);
                Tensor::new(xs.shape().to_vec(), dx).expect("shape")
            });
            let dw = ctx.needs[1].then(|| {
                let mut dw = vec![0.0; d_in * d_out];
                gemm(d_in, rows, d_out, xs.data(), true, up.data(), false, &mut dw, false);
                Tensor::new(ws.shape().to_vec(), dw).expect("shape")
            });
            let db = ctx.needs[2].then(|| {
                let mut db = vec![0.0; d_out];
                for row in up.data().chunks(d_out) {
                    for (a, g) in db.iter_mut().zip(row) {
                        *a += g;
                    }
                }
                Tensor::new(bs.shape().to_vec(), db).expect("shape")
            });
            vec![dx, dw, db]
        });
        Ok(self.custom(&[x, w, b], value, rule))
    }

    /// Per-channel maximum over consecutive groups of `group` rows.
    ///
    /// Returns a `(rows / group) × C` matrix. The backward pass routes each
    /// channel's gradient to the arg-max row only; ties go to the lowest row.
    pub fn max_pool_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let xs = self.value(x);
        let (rows, cols) = (xs.rows(), xs.cols());
        contract!(group > 0 && rows > 0, "max pool over an empty point set");
        contract!(
            rows % group == 0,
            "max pool: {rows} rows not divisible into groups of {group}"
        );
        let groups = rows / group;
        let data = xs.data();
        let mut out = vec![f64::NEG_INFINITY; groups * cols];
        let mut arg = vec![0usize; groups * cols];
        for g in 0..groups {
            let o = &mut out[g * cols..(g + 1) * cols];
            let a = &mut arg[g * cols..(g + 1) * cols];
            for r in g * group..(g + 1) * group {
                let row = &data[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    if row[c] > o[c] || r == g * group {
                        o[c] = row[c];
                        a[c] = r;
                    }
                }
            }
        }
        let in_shape = xs.shape().to_vec();
        let value = Tensor::new(vec![groups, cols], out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let mut dx = Tensor::zeros(&in_shape);
            let d = dx.data_mut();
            for (slot, g) in ctx.grad.data().iter().enumerate() {
                let c = slot % cols;
                d[arg[slot] * cols + c] += g;
            }
            vec![Some(dx)]
        });
        Ok(self.custom(&[x], value, rule))
    }

    /// Per-channel maximum over all rows of an `N × C` matrix, giving `[C]`.
    pub fn max_pool_points(&mut self, x: Var) -> Result<Var> {
        let rows = self.value(x).rows();
        contract!(rows > 0, "max pool over an empty point set");
        let pooled = self.max_pool_groups(x, rows)?;
        let cols = self.value(pooled).cols();
        self.reshape(pooled, vec![cols])
    }

    /// Shape-only view change; gradients pass through unchanged.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let in_shape = self.value(x).shape().to_vec();
        let value = self.value(x).clone().reshape(shape)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let g = ctx.grad.clone().reshape(in_shape.clone()).expect("reshape");
            vec![Some(g)]
        });
        Ok(self.custom(&[x], value, rule))
    }

    /// Concatenates matrices with equal row counts along the channel axis.
    pub fn concat_features(&mut self, parts: &[Var]) -> Result<Var> {
        contract!(!parts.is_empty(), "concat of zero tensors");
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            contract!(
                t.rows() == rows,
                "concat: row count {} != {}",
                t.rows(),
                rows
            );
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![rows, total], out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let up = ctx.grad.data();
            let mut offset = 0;
            let mut grads = Vec::with_capacity(widths.len());
            for (i, &w) in widths.iter().enumerate() {
                if ctx.needs[i] {
                    let mut g = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        g.extend_from_slice(&up[r * total + offset..r * total + offset + w]);
                    }
                    let shape = ctx.inputs[i].shape().to_vec();
                    grads.push(Some(Tensor::new(shape, g).expect("shape")));
                } else {
                    grads.push(None);
                }
                offset += w;
            }
            grads
        });
        Ok(self.custom(parts, value, rule))
    }

    /// Repeats each row of `g` (`B × C`, or `[C]` for one cloud) `n` times,
    /// giving `(B·n) × C`. The backward pass sums over the copies.
    pub fn tile_global(&mut self, g: Var, n: usize) -> Result<Var> {
        let gs = self.value(g);
        let (b, cols) = (gs.rows(), gs.cols());
        let mut out = Vec::with_capacity(b * n * cols);
        for r in 0..b {
            for _ in 0..n {
                out.extend_from_slice(gs.row(r));
            }
        }
        let in_shape = gs.shape().to_vec();
        let value = Tensor::new(vec![b * n, cols], out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let mut dg = Tensor::zeros(&in_shape);
            let d = dg.data_mut();
            for (i, row) in ctx.grad.data().chunks(cols).enumerate() {
                let r = i / n.max(1);
                for (a, v) in d[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                    *a += v;
                }
            }
            vec![Some(dg)]
        });
        Ok(self.custom(&[g], value, rule))
    }

    /// Selects rows by index; the backward pass scatter-adds.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xs = self.value(x);
        let (rows, cols) = (xs.rows(), xs.cols());
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            contract!(i < rows, "gather index {i} out of range for {rows} rows");
            out.extend_from_slice(xs.row(i));
        }
        let in_shape = xs.shape().to_vec();
        let index = index.to_vec();
        let value = Tensor::new(vec![index.len(), cols], out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let mut dx = Tensor::zeros(&in_shape);
            let d = dx.data_mut();
            for (row, &i) in ctx.grad.data().chunks(cols).zip(&index) {
                for (a, v) in d[i * cols..(i + 1) * cols].iter_mut().zip(row) {
                    *a += v;
                }
            }
            vec![Some(dx)]
        });
        Ok(self.custom(&[x], value, rule))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    ///
    /// Logits are any `… × k` array; every row is one labeled entry.
    pub fn log_softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let ls = self.value(logits);
        let (rows, k) = (ls.rows(), ls.cols());
        contract!(
            targets.len() == rows,
            "cross entropy: {} targets for {} rows",
            targets.len(),
            rows
        );
        contract!(rows > 0, "cross entropy over zero entries");
        if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= k) {
            return Err(Error::Data(format!(
                "target {t} at index {i} is outside [0, {k})"
            )));
        }
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            total += log_sum_exp(ls.row(r)) - ls.row(r)[t];
        }
        let value = Tensor::scalar(total / rows as f64);
        let targets = targets.to_vec();
        let rule: BackwardFn = Box::new(move |ctx| {
            let scale = ctx.grad.item() / rows as f64;
            let ls = ctx.inputs[0];
            let mut d = Vec::with_capacity(rows * k);
            for (r, &t) in targets.iter().enumerate() {
                let row = ls.row(r);
                let lse = log_sum_exp(row);
                for (c, &v) in row.iter().enumerate() {
                    let p = (v - lse).exp();
                    d.push(scale * (p - if c == t { 1.0 } else { 0.0 }));
                }
            }
            vec![Some(Tensor::new(ls.shape().to_vec(), d).expect("shape"))]
        });
        Ok(self.custom(&[logits], value, rule))
    }

    /// Inverted dropout: in training each element survives with
    /// probability `1 - rate` and is scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        contract!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let xs = self.value(x);
        let out: Vec<f64> = xs.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(xs.shape().to_vec(), out)?;
        let rule: BackwardFn = Box::new(move |ctx| {
            let g: Vec<f64> = ctx.grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
            vec![Some(Tensor::new(ctx.grad.shape().to_vec(), g).expect("shape"))]
        });
        Ok(self.custom(&[x], value, rule))
    }

    /// Sum of all elements.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let rule: BackwardFn = Box::new(|ctx| {
            vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item()))]
        });
        self.custom(&[x], value, rule)
    }

    /// `Σ x ⊙ weights` for a constant weight array of the same size.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        let xs = self.value(x);
        contract!(
            xs.len() == weights.len(),
            "weighted_sum: {} weights for {} values",
            weights.len(),
            xs.len()
        );
        let total = xs.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let w = weights.clone();
        let rule: BackwardFn = Box::new(move |ctx| {
            let g = ctx.grad.item();
            let d = w.data().iter().map(|v| v * g).collect();
            vec![Some(Tensor::new(ctx.inputs[0].shape().to_vec(), d).expect("shape"))]
        });
        Ok(self.custom(&[x], Tensor::scalar(total), rule))
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Builds the `rows × ((n+1)·d_in)` basis matrix with column `i·d_in + c`
/// holding `f_i(x[p, c])`, optionally alongside the derivative matrix.
fn expand_basis(
    x: &[f64],
    rows: usize,
    d_in: usize,
    basis: &JacobiBasis,
    slopes: Option<&mut [f64]>,
) -> Vec<f64> {
    let nb = basis.len();
    let k = nb * d_in;
    let mut phi = vec![0.0; rows * k];
    let mut vals = vec![0.0; nb];
    let mut ders = vec![0.0; nb];
    match slopes {
        None => {
            for p in 0..rows {
                let dst = &mut phi[p * k..(p + 1) * k];
                for c in 0..d_in {
                    basis.eval_into(x[p * d_in + c], &mut vals);
                    for i in 0..nb {
                        dst[i * d_in + c] = vals[i];
                    }
                }
            }
        }
        Some(slopes) => {
            for p in 0..rows {
                for c in 0..d_in {
                    basis.eval_with_derivative_into(x[p * d_in + c], &mut vals, &mut ders);
                    for i in 0..nb {
                        phi[p * k + i * d_in + c] = vals[i];
                        slopes[p * k + i * d_in + c] = ders[i];
                    }
                }
            }
        }
    }
    phi
}

pub(crate) fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&v| f(v)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}
