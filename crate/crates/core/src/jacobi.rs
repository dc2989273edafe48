//! Jacobi polynomial bases evaluated through the three-term recursion.
//!
//! For parameters `(alpha, beta)` the family is
//!
//! ```text
//! f_0(x) = 1
//! f_1(x) = (alpha + beta + 2) / 2 * x + (alpha - beta) / 2
//! f_k(x) = (a_k x + b_k) f_{k-1}(x) + c_k f_{k-2}(x),   k >= 2
//! ```
//!
//! Derivatives are obtained by differentiating the same recursion term by
//! term, so values and slopes share the exact same sequence of coefficient
//! multiplications.

use crate::error::{Error, Result};

/// Validated `(alpha, beta, degree)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiParams {
    alpha: f64,
    beta: f64,
    degree: usize,
}

/// Named members of the Jacobi family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpecialCase {
    Legendre,
    ChebyshevFirst,
    ChebyshevSecond,
    Gegenbauer(f64),
}

impl JacobiParams {
    pub fn new(alpha: f64, beta: f64, degree: usize) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Config(format!(
                "jacobi parameters must be finite (alpha={alpha}, beta={beta})"
            )));
        }
        if alpha <= -1.0 || beta <= -1.0 {
            return Err(Error::Config(format!(
                "jacobi parameters require alpha > -1 and beta > -1 (alpha={alpha}, beta={beta})"
            )));
        }
        let s = alpha + beta;
        for k in 2..=degree {
            let k = k as f64;
            let d1 = 2.0 * k * (k + s);
            let d2 = 2.0 * k + s - 2.0;
            if d1 == 0.0 || d2 == 0.0 {
                return Err(Error::Config(format!(
                    "jacobi recursion denominator vanishes at k={k} (alpha={alpha}, beta={beta})"
                )));
            }
        }
        Ok(Self {
            alpha,
            beta,
            degree,
        })
    }

    pub fn special(case: SpecialCase, degree: usize) -> Result<Self> {
        let (a, b) = match case {
            SpecialCase::Legendre => (0.0, 0.0),
            SpecialCase::ChebyshevFirst => (-0.5, -0.5),
            SpecialCase::ChebyshevSecond => (0.5, 0.5),
            SpecialCase::Gegenbauer(lambda) => (lambda, lambda),
        };
        Self::new(a, b, degree)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `degree + 1`.
    pub fn basis_len(&self) -> usize {
        self.degree + 1
    }

    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(self.alpha, self.beta, degree)
    }

    /// Coefficients `(a_k, b_k, c_k)` of the recursion step producing `f_k`.
    ///
    /// # Panics
    ///
    /// Panics if `k < 2`.
    pub fn recursion_coeffs(&self, k: usize) -> (f64, f64, f64) {
        assert!(k >= 2, "recursion coefficients start at k = 2");
        let (al, be) = (self.alpha, self.beta);
        let k = k as f64;
        let s = al + be;
        let den = 2.0 * k * (k + s);
        let a = (2.0 * k + s - 1.0) * (2.0 * k + s) / den;
        let b = (2.0 * k + s - 1.0) * (al * al - be * be) / (den * (2.0 * k + s - 2.0));
        let c = -2.0 * (k + al - 1.0) * (k + be - 1.0) * (2.0 * k + s)
            / (den * (2.0 * k + s - 2.0));
        (a, b, c)
    }

    /// Evaluate `f_0 .. f_n` at `gamma`.
    pub fn eval_basis(&self, gamma: f64) -> BasisVector {
        let basis = JacobiBasis::new(*self);
        let mut values = vec![0.0; self.basis_len()];
        basis.eval_into(gamma, &mut values);
        BasisVector { values }
    }

    /// Evaluate `d f_k / d gamma` for `k = 0 .. n`.
    pub fn eval_basis_derivative(&self, gamma: f64) -> Vec<f64> {
        let basis = JacobiBasis::new(*self);
        let mut values = vec![0.0; self.basis_len()];
        let mut slopes = vec![0.0; self.basis_len()];
        basis.eval_with_derivative_into(gamma, &mut values, &mut slopes);
        slopes
    }
}

/// Basis values `f_0 .. f_n` at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub values: Vec<f64>,
}

/// Jacobi parameters with the recursion coefficients tabulated once.
///
/// This is the hot-path evaluator used inside KAN layers.
#[derive(Debug, Clone)]
pub struct JacobiBasis {
    params: JacobiParams,
    f1_slope: f64,
    f1_offset: f64,
    // coeffs[k - 2] = (a_k, b_k, c_k)
    coeffs: Vec<(f64, f64, f64)>,
}

impl JacobiBasis {
    pub fn new(params: JacobiParams) -> Self {
        let coeffs = (2..=params.degree())
            .map(|k| params.recursion_coeffs(k))
            .collect();
        Self {
            params,
            f1_slope: 0.5 * (params.alpha + params.beta + 2.0),
            f1_offset: 0.5 * (params.alpha - params.beta),
            coeffs,
        }
    }

    pub fn params(&self) -> &JacobiParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.basis_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `f_0 .. f_n` at `gamma` into `out[..n + 1]`.
    #[inline]
    pub fn eval_into(&self, gamma: f64, out: &mut [f64]) {
        debug_assert!(!(gamma.abs() > 1.0), "basis input {gamma} outside [-1, 1]");
        out[0] = 1.0;
        if self.params.degree == 0 {
            return;
        }
        out[1] = self.f1_slope * gamma + self.f1_offset;
        for (j, &(a, b, c)) in self.coeffs.iter().enumerate() {
            let k = j + 2;
            out[k] = (a * gamma + b) * out[k - 1] + c * out[k - 2];
        }
    }

    /// Writes values and first derivatives at `gamma`.
    #[inline]
    pub fn eval_with_derivative_into(&self, gamma: f64, values: &mut [f64], slopes: &mut [f64]) {
        debug_assert!(!(gamma.abs() > 1.0), "basis input {gamma} outside [-1, 1]");
        values[0] = 1.0;
        slopes[0] = 0.0;
        if self.params.degree == 0 {
            return;
        }
        values[1] = self.f1_slope * gamma + self.f1_offset;
        slopes[1] = self.f1_slope;
        for (j, &(a, b, c)) in self.coeffs.iter().enumerate() {
            let k = j + 2;
            let lin = a * gamma + b;
            values[k] = lin * values[k - 1] + c * values[k - 2];
            slopes[k] = a * values[k - 1] + lin * slopes[k - 1] + c * slopes[k - 2];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn legendre() -> JacobiParams {
        JacobiParams::new(0.0, 0.0, 2).unwrap()
    }

    #[test]
    fn coefficients_at_k2() {
        let (a, b, c) = legendre().recursion_coeffs(2);
        assert_relative_eq!(a, 1.5, epsilon = 1e-15);
        assert_eq!(b, 0.0);
        assert_relative_eq!(c, -0.5, epsilon = 1e-15);

        let cheb = JacobiParams::new(-0.5, -0.5, 2).unwrap();
        let (a, b, c) = cheb.recursion_coeffs(2);
        assert_relative_eq!(a, 1.5, epsilon = 1e-15);
        assert_eq!(b, 0.0);
        assert_relative_eq!(c, -0.375, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_params_have_zero_b() {
        for &ab in &[-0.9, -0.5, 0.0, 0.3, 1.0, 2.5] {
            let p = JacobiParams::new(ab, ab, 9).unwrap();
            for k in 2..=9 {
                assert_eq!(p.recursion_coeffs(k).1, 0.0);
            }
        }
    }

    #[test]
    fn basis_examples() {
        for p in [
            JacobiParams::new(1.0, 2.0, 4).unwrap(),
            JacobiParams::new(-0.5, 0.5, 0).unwrap(),
        ] {
            assert_eq!(p.eval_basis(0.3).values[0], 1.0);
        }
        assert_eq!(legendre().eval_basis(0.5).values[1], 0.5);
        // P2(0.6) = (3 * 0.36 - 1) / 2
        assert_relative_eq!(legendre().eval_basis(0.6).values[2], 0.04, epsilon = 1e-15);
        let cheb = JacobiParams::new(-0.5, -0.5, 2).unwrap();
        assert_relative_eq!(cheb.eval_basis(1.0).values[2], 0.375, epsilon = 1e-15);
    }

    #[test]
    fn first_basis_matches_closed_form() {
        let p = JacobiParams::new(0.25, 1.5, 1).unwrap();
        let g = -0.4;
        let expect = 0.5 * (0.25 + 1.5 + 2.0) * g + 0.5 * (0.25 - 1.5);
        assert_eq!(p.eval_basis(g).values, vec![1.0, expect]);
    }

    #[test]
    fn derivative_examples() {
        let p = JacobiParams::new(0.7, -0.2, 5).unwrap();
        assert_eq!(p.eval_basis_derivative(0.1)[0], 0.0);
        for g in [-0.9, 0.0, 0.45] {
            assert_eq!(legendre().eval_basis_derivative(g)[1], 1.0);
        }
        // P2'(x) = 3x
        assert_relative_eq!(legendre().eval_basis_derivative(0.6)[2], 1.8, epsilon = 1e-14);
    }

    #[test]
    fn special_cases() {
        let l = JacobiParams::special(SpecialCase::Legendre, 3).unwrap();
        assert_eq!((l.alpha(), l.beta()), (0.0, 0.0));
        let c1 = JacobiParams::special(SpecialCase::ChebyshevFirst, 3).unwrap();
        assert_eq!((c1.alpha(), c1.beta()), (-0.5, -0.5));
        let c2 = JacobiParams::special(SpecialCase::ChebyshevSecond, 3).unwrap();
        assert_eq!((c2.alpha(), c2.beta()), (0.5, 0.5));
        let g = JacobiParams::special(SpecialCase::Gegenbauer(1.0), 3).unwrap();
        assert_eq!((g.alpha(), g.beta()), (1.0, 1.0));
        assert!(JacobiParams::special(SpecialCase::Gegenbauer(-1.0), 3).is_err());
        assert!(JacobiParams::special(SpecialCase::Gegenbauer(-2.5), 3).is_err());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(JacobiParams::new(-1.0, 0.0, 2).is_err());
        assert!(JacobiParams::new(0.0, -1.5, 2).is_err());
        assert!(JacobiParams::new(f64::NAN, 0.0, 2).is_err());
        assert!(JacobiParams::new(-0.99, -0.99, 12).is_ok());
    }

    #[test]
    fn degree_zero_is_constant() {
        let p = JacobiParams::new(0.5, 0.5, 0).unwrap();
        assert_eq!(p.eval_basis(-0.7).values, vec![1.0]);
        assert_eq!(p.eval_basis_derivative(-0.7), vec![0.0]);
    }
}
