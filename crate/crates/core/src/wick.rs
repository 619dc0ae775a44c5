//! Polynomials in correlated centered Gaussian variables: exact moments by
//! Isserlis' theorem and Monte Carlo sampling through a Cholesky factor.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Real polynomial in `x_1..x_d`, keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianPolynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl GaussianPolynomial {
    pub fn zero(dim: usize) -> Self {
        GaussianPolynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    /// The monomial `Π x_i^{exponents[i]}` (variables indexed from 0).
    pub fn monomial(exponents: Vec<u32>, c: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, c);
        p
    }

    pub fn variable(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, c: f64) {
        debug_assert_eq!(exponents.len(), self.dim);
        let v = self.terms.entry(exponents.clone()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&exponents);
        }
    }

    /// `x_i · p`.
    pub fn times_variable(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, &c) in &self.terms {
            let mut e = e.clone();
            e[i] += 1;
            out.add_term(e, c);
        }
        out
    }

    /// `∂p/∂x_j`.
    pub fn derivative(&self, j: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, &c) in &self.terms {
            if e[j] > 0 {
                let mut e = e.clone();
                let k = e[j];
                e[j] -= 1;
                out.add_term(e, c * f64::from(k));
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// `E[p(x)]` for `x ~ N(0, cov)`.
    pub fn gaussian_mean(&self, cov: &[Vec<f64>]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let idx: Vec<usize> = e
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
                    .collect();
                c * isserlis(&idx, cov)
            })
            .sum()
    }
}

/// `E[x_{i_1} ⋯ x_{i_n}]` as a sum over perfect pairings.
pub fn isserlis(indices: &[usize], cov: &[Vec<f64>]) -> f64 {
    match indices {
        [] => 1.0,
        [_] => 0.0,
        [first, rest @ ..] => {
            if rest.len() % 2 == 0 {
                return 0.0;
            }
            let mut total = 0.0;
            for k in 0..rest.len() {
                let c = cov[*first][rest[k]];
                if c == 0.0 {
                    continue;
                }
                let mut remaining = rest.to_vec();
                remaining.remove(k);
                total += c * isserlis(&remaining, cov);
            }
            total
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = cov`.
pub fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        if cov[i].len() != d {
            return Err(Error::usage("covariance matrix must be square"));
        }
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = cov[i][i] - s;
                if !(v > 0.0) {
                    return Err(Error::usage("covariance matrix is not positive definite"));
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (cov[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// One draw of `x = L z`, `z` standard normal.
pub fn sample_gaussian<R: Rng + ?Sized>(chol: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..chol.len()).map(|_| rng.sample(StandardNormal)).collect();
    chol.iter()
        .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Right-hand side of the integration-by-parts formula,
/// `Σ_j C_ij E[∂ψ/∂x_j]`, computed exactly.
pub fn wick_rhs(psi: &GaussianPolynomial, cov: &[Vec<f64>], i: usize) -> f64 {
    (0..psi.dim())
        .map(|j| cov[i][j] * psi.derivative(j).gaussian_mean(cov))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cov() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.2], vec![0.0, 0.2, 1.0]]
    }

    fn x1x2x3() -> GaussianPolynomial {
        GaussianPolynomial::monomial(vec![1, 1, 1], 1.0)
    }

    #[test]
    fn isserlis_small_moments() {
        let c = cov();
        assert_eq!(isserlis(&[0, 0], &c), 1.0);
        assert_eq!(isserlis(&[0, 1, 2], &c), 0.0);
        assert_eq!(isserlis(&[0, 0, 0, 0], &c), 3.0);
        // E[x1 x2 x2 x3] = C12 C23 + C12 C23 + C13 C22
        assert!((isserlis(&[0, 1, 1, 2], &c) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn wick_rhs_for_triple_product() {
        let c = cov();
        let psi = x1x2x3();
        let expected = [0.2, 0.2, 0.5];
        for (i, e) in expected.iter().enumerate() {
            let rhs = wick_rhs(&psi, &c, i);
            assert!((rhs - e).abs() < 1e-15, "{i}: {rhs}");
            let lhs = psi.times_variable(i).gaussian_mean(&c);
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_cases() {
        let c = cov();
        let constant = GaussianPolynomial::constant(3, 2.5);
        for i in 0..3 {
            assert_eq!(wick_rhs(&constant, &c, i), 0.0);
            assert_eq!(constant.times_variable(i).gaussian_mean(&c), 0.0);
        }
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let psi = GaussianPolynomial::variable(3, 2);
        assert_eq!(wick_rhs(&psi, &id, 0), 0.0);
        assert_eq!(psi.times_variable(0).gaussian_mean(&id), 0.0);
    }

    #[test]
    fn derivative_and_eval() {
        let mut p = GaussianPolynomial::monomial(vec![2, 1, 0], 3.0);
        p.add_term(vec![0, 0, 0], -1.0);
        assert_eq!(p.eval(&[2.0, 3.0, 5.0]), 35.0);
        assert_eq!(p.derivative(0), GaussianPolynomial::monomial(vec![1, 1, 0], 6.0));
        assert_eq!(p.derivative(2), GaussianPolynomial::zero(3));
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let c = cov();
        let l = cholesky(&c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - c[i][j]).abs() < 1e-15);
            }
        }
        assert!(cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let mut s12 = 0.0;
        for _ in 0..n {
            let x = sample_gaussian(&l, &mut rng);
            s12 += x[0] * x[1];
        }
        assert!((s12 / n as f64 - 0.5).abs() < 4.0 * (1.25f64 / n as f64).sqrt());
    }
}
