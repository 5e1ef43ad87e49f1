use nalgebra::DMatrix;
use num_complex::Complex;

use crate::scalar::cabs;
use crate::Real;

/// Relative threshold below which trailing coefficients are dropped.
pub const TRIM_REL: f64 = 1e-12;

/// Real polynomial stored with ascending powers: `c[0] + c[1] s + ...`.
///
/// The zero polynomial has no coefficients. Trailing coefficients smaller
/// than `TRIM_REL` times the largest magnitude are removed on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    c: Vec<T>,
}

impl<T: Real> Poly<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        let mut c = coeffs;
        let max = c.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let tol = max * T::c(TRIM_REL);
        while let Some(last) = c.last() {
            if last.abs() <= tol {
                c.pop();
            } else {
                break;
            }
        }
        Poly { c }
    }

    pub fn from_f64(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&x| T::c(x)).collect())
    }

    pub fn zero() -> Self {
        Poly { c: Vec::new() }
    }

    pub fn constant(k: T) -> Self {
        Self::new(vec![k])
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    /// `s`
    pub fn s() -> Self {
        Self::new(vec![T::zero(), T::one()])
    }

    /// Monic polynomial with the given real roots.
    pub fn from_real_roots(roots: &[T]) -> Self {
        roots
            .iter()
            .fold(Self::one(), |acc, &r| acc.mul(&Self::new(vec![-r, T::one()])))
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    pub fn leading(&self) -> T {
        self.c.last().copied().unwrap_or_else(T::zero)
    }

    pub fn coeff(&self, k: usize) -> T {
        self.c.get(k).copied().unwrap_or_else(T::zero)
    }

    /// Multiplicity of the root at `s = 0` (number of vanishing low-order
    /// coefficients, using the same relative threshold as trimming).
    pub fn origin_multiplicity(&self) -> usize {
        let max = self.max_abs();
        let tol = max * T::c(TRIM_REL);
        self.c.iter().take_while(|x| x.abs() <= tol).count()
    }

    pub fn max_abs(&self) -> T {
        self.c.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn eval(&self, s: Complex<T>) -> Complex<T> {
        self.c
            .iter()
            .rev()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &k| acc * s + Complex::new(k, T::zero()))
    }

    /// `sum |c_k| |s|^k`, the magnitude scale used for pole detection.
    pub fn eval_abs(&self, s: Complex<T>) -> T {
        let r = cabs(s);
        self.c.iter().rev().fold(T::zero(), |acc, &k| acc * r + k.abs())
    }

    pub fn eval_real(&self, x: T) -> T {
        self.c.iter().rev().fold(T::zero(), |acc, &k| acc * x + k)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        Self::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![T::zero(); self.c.len() + other.c.len() - 1];
        for (i, &a) in self.c.iter().enumerate() {
            for (j, &b) in other.c.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.c.iter().map(|&x| x * k).collect())
    }

    pub fn pow(&self, n: usize) -> Self {
        (0..n).fold(Self::one(), |acc, _| acc.mul(self))
    }

    /// Roots as eigenvalues of the companion matrix. Exact zeros at the
    /// origin are deflated first so integrators come out as exact zeros.
    pub fn roots(&self) -> Vec<Complex<T>> {
        if self.c.len() < 2 {
            return Vec::new();
        }
        let k0 = self.c.iter().take_while(|x| **x == T::zero()).count();
        let mut roots = vec![Complex::new(T::zero(), T::zero()); k0];
        let c = &self.c[k0..];
        let n = c.len() - 1;
        if n == 0 {
            return roots;
        }
        let lead = c[n];
        let mut comp = DMatrix::<T>::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -c[n - 1 - j] / lead;
        }
        for i in 1..n {
            comp[(i, i - 1)] = T::one();
        }
        roots.extend(comp.complex_eigenvalues().iter().copied());
        roots
    }
}
