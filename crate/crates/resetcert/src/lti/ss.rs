use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::poly::Poly;
use super::tf::RationalTf;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    #[default]
    Controllable,
    Observable,
}

impl<T: Real> StateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A {n}x{n}, B {}x{}, C {}x{}, D {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn from_rows(a: &[&[f64]], b: &[f64], c: &[f64], d: f64) -> Result<Self> {
        let n = a.len();
        let am = DMatrix::from_fn(n, n, |i, j| T::c(a[i][j]));
        let bm = DMatrix::from_fn(n, 1, |i, _| T::c(b[i]));
        let cm = DMatrix::from_fn(1, n, |_, j| T::c(c[j]));
        Self::new(am, bm, cm, DMatrix::from_element(1, 1, T::c(d)))
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Scalar feedthrough of a SISO realization.
    pub fn d0(&self) -> T {
        self.d[(0, 0)]
    }

    /// `C (sI - A)^-1 B + D` for a SISO realization.
    ///
    /// Uses `det(sI - A + BC) = det(sI - A) (1 + C (sI - A)^-1 B)`.
    pub fn to_tf(&self) -> Result<RationalTf<T>> {
        if self.b.ncols() != 1 || self.c.nrows() != 1 {
            return Err(Error::DimensionMismatch("to_tf needs a SISO realization".into()));
        }
        let den = char_poly(&self.a);
        let closed = char_poly(&(&self.a - &self.b * &self.c));
        let num = closed.add(&den.scale(self.d0() - T::one()));
        RationalTf::new(num, den)
    }
}

/// `det(sI - A)` by the Faddeev-LeVerrier recursion.
pub fn char_poly<T: Real>(a: &DMatrix<T>) -> Poly<T> {
    let n = a.nrows();
    let mut coeffs = vec![T::zero(); n + 1];
    coeffs[n] = T::one();
    let id = DMatrix::<T>::identity(n, n);
    let mut m = DMatrix::<T>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n - k + 1];
        let am = a * &m;
        coeffs[n - k] = -am.trace() / T::c(k as f64);
    }
    Poly::new(coeffs)
}

/// Canonical realization of a proper SISO transfer function.
///
/// With monic denominator `s^n + a_{n-1} s^{n-1} + ... + a_0` and strictly
/// proper numerator remainder `b_{n-1} s^{n-1} + ... + b_0`:
/// controllable form puts `-a` in the first row with `B = e_1`,
/// observable form puts `-a` in the last column with `C = e_n`.
pub fn to_state_space<T: Real>(tf: &RationalTf<T>, form: Form) -> Result<StateSpace<T>> {
    let (num, den) = (tf.num(), tf.den());
    let n = den.degree();
    if !num.is_zero() && num.degree() > n {
        return Err(Error::ImproperTransferFunction {
            num: num.degree(),
            den: n,
        });
    }
    let lead = den.leading();
    let a: Vec<T> = (0..n).map(|k| den.coeff(k) / lead).collect();
    let d = num.coeff(n) / lead;
    let b: Vec<T> = (0..n).map(|k| num.coeff(k) / lead - d * a[k]).collect();

    let mut am = DMatrix::<T>::zeros(n, n);
    let mut bm = DMatrix::<T>::zeros(n, 1);
    let mut cm = DMatrix::<T>::zeros(1, n);
    match form {
        Form::Controllable => {
            for j in 0..n {
                am[(0, j)] = -a[n - 1 - j];
                cm[(0, j)] = b[n - 1 - j];
            }
            for i in 1..n {
                am[(i, i - 1)] = T::one();
            }
            if n > 0 {
                bm[(0, 0)] = T::one();
            }
        }
        Form::Observable => {
            for i in 0..n {
                am[(i, n - 1)] = -a[i];
                bm[(i, 0)] = b[i];
            }
            for i in 1..n {
                am[(i, i - 1)] = T::one();
            }
            if n > 0 {
                cm[(0, n - 1)] = T::one();
            }
        }
    }
    StateSpace::new(am, bm, cm, DMatrix::from_element(1, 1, d))
}

/// Relative singular-value threshold for the rank tests.
pub const RANK_REL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub controllable: bool,
    pub observable: bool,
}

/// PBH rank tests on `(A, B0)` and `(A, C0)`: `[A - lambda I, B0]` and
/// `[A - lambda I; C0]` must have full rank at every eigenvalue of `A`.
///
/// `A` is balanced first by a diagonal similarity, which leaves both ranks
/// unchanged.
pub fn ctrb_obsv_rank<T: Real>(a: &DMatrix<T>, b0: &DMatrix<T>, c0: &DMatrix<T>) -> RankReport {
    let d = balance(a);
    let a = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j] / d[i]);
    let b0 = DMatrix::from_fn(b0.nrows(), b0.ncols(), |i, j| b0[(i, j)] / d[i]);
    let c0 = DMatrix::from_fn(c0.nrows(), c0.ncols(), |i, j| c0[(i, j)] * d[j]);
    let (a, b0, c0) = (&a, &b0, &c0);
    let eig = a.clone().complex_eigenvalues();
    let full = |m: DMatrix<Complex<T>>| {
        let sv = m.svd(false, false).singular_values;
        let max = sv.iter().fold(T::zero(), |x, &y| x.max(y));
        max > T::zero() && sv.iter().all(|&s| s > max * T::c(RANK_REL))
    };
    let shifted = |lambda: Complex<T>| {
        let mut m = a.map(|v| Complex::new(v, T::zero()));
        for i in 0..m.nrows() {
            m[(i, i)] -= lambda;
        }
        m
    };
    let cplx = |m: &DMatrix<T>| m.map(|v| Complex::new(v, T::zero()));
    let (bc, cc) = (cplx(b0), cplx(c0));
    let mut ctrb = true;
    let mut obsv = true;
    for &l in eig.iter() {
        let s = shifted(l);
        ctrb &= full(nalgebra::stack![s, bc]);
        obsv &= full(nalgebra::stack![s; cc]);
    }
    RankReport {
        controllable: ctrb,
        observable: obsv,
    }
}

/// Osborne balancing: powers of two `d` such that `D^-1 A D` has
/// comparable off-diagonal row and column norms.
fn balance<T: Real>(a: &DMatrix<T>) -> Vec<T> {
    let n = a.nrows();
    let mut d = vec![T::one(); n];
    let two = T::c(2.0);
    for _ in 0..100 {
        let mut done = true;
        for i in 0..n {
            let (mut c, mut r) = (T::zero(), T::zero());
            for j in (0..n).filter(|&j| j != i) {
                c += (a[(j, i)] * d[i] / d[j]).abs();
                r += (a[(i, j)] * d[j] / d[i]).abs();
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let mut f = T::one();
            while c * f < r / (two * f) {
                f *= two;
            }
            while c * f > r * two / f {
                f /= two;
            }
            if f != T::one() && (c * f + r / f) < T::c(0.95) * (c + r) {
                d[i] *= f;
                done = false;
            }
        }
        if done {
            break;
        }
    }
    d
}

pub fn numeric_rank<T: Real>(m: &DMatrix<T>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if max == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > max * T::c(RANK_REL)).count()
}
