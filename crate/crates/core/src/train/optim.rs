use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of steps taken so far.
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// `w ← w − lr · m̂ / (√v̂ + eps)` with `m̂ = m / (1 − β1^t)`, `v̂ = v / (1 − β2^t)`.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((w, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if w.shape() != g.shape() || w.shape() != m.shape() {
                return Err(Error::Contract(format!(
                    "adam: shape mismatch {:?} / {:?} / {:?}",
                    w.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            for (((w, &g), m), v) in w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut w = one(0.0);
        let mut a = Adam::new(&w, 0.9, 0.999, 1e-8);
        a.update(&mut w, &one(1.0), 1e-3).unwrap();
        // −lr · 1 / (1 + eps)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((w[0].data()[0] - expected).abs() < 1e-18);
        assert!((w[0].data()[0] + 0.000_999_999_99).abs() < 1e-15);

        let mut w = one(0.0);
        let mut a = Adam::new(&w, 0.9, 0.999, 1e-8);
        a.update(&mut w, &one(-250.0), 1e-3).unwrap();
        assert!((w[0].data()[0] - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_leaves_fresh_weights_and_decays_moments() {
        let mut w = one(0.5);
        let mut a = Adam::new(&w, 0.9, 0.999, 1e-8);
        a.update(&mut w, &one(0.0), 1e-3).unwrap();
        assert_eq!(w[0].data()[0], 0.5);

        a.update(&mut w, &one(2.0), 1e-3).unwrap();
        let (m, v) = (a.m[0].data()[0], a.v[0].data()[0]);
        a.update(&mut w, &one(0.0), 1e-3).unwrap();
        assert_eq!(a.m[0].data()[0], 0.9 * m);
        assert_eq!(a.v[0].data()[0], 0.999 * v);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut w = one(0.3);
            let mut a = Adam::new(&w, 0.9, 0.999, 1e-8);
            for i in 0..20 {
                let g = w[0].data()[0] * 2.0 - (i as f64).sin();
                a.update(&mut w, &one(g), 1e-2).unwrap();
            }
            w[0].data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
