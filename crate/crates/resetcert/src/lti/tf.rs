use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::poly::Poly;
use crate::scalar::cabs;
use crate::{Error, Real, Result};

/// `num(s) / den(s)` with real coefficients in ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalTf<T> {
    num: Poly<T>,
    den: Poly<T>,
}

/// Plain coefficient lists, the serialized form of a transfer function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfCoeffs {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl<T: Real> RationalTf<T> {
    pub fn new(num: Poly<T>, den: Poly<T>) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(RationalTf { num, den })
    }

    pub fn from_f64(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(Poly::from_f64(num), Poly::from_f64(den))
    }

    pub fn from_coeffs(c: &TfCoeffs) -> Result<Self> {
        Self::from_f64(&c.num, &c.den)
    }

    pub fn to_coeffs(&self) -> TfCoeffs {
        TfCoeffs {
            num: self.num.coeffs().iter().map(|x| x.f64()).collect(),
            den: self.den.coeffs().iter().map(|x| x.f64()).collect(),
        }
    }

    pub fn gain(k: T) -> Self {
        RationalTf {
            num: Poly::constant(k),
            den: Poly::one(),
        }
    }

    pub fn one() -> Self {
        Self::gain(T::one())
    }

    /// `1/s`
    pub fn integrator() -> Self {
        RationalTf {
            num: Poly::one(),
            den: Poly::s(),
        }
    }

    pub fn num(&self) -> &Poly<T> {
        &self.num
    }

    pub fn den(&self) -> &Poly<T> {
        &self.den
    }

    pub fn eval_s(&self, s: Complex<T>) -> Result<Complex<T>> {
        let d = self.den.eval(s);
        let scale = self.den.eval_abs(s);
        if cabs(d) <= scale * T::eps() * T::c(64.0) {
            return Err(Error::EvaluationAtPole { omega: s.im.f64() });
        }
        Ok(self.num.eval(s) / d)
    }

    /// Frequency response at `s = j omega`.
    pub fn eval(&self, omega: T) -> Result<Complex<T>> {
        self.eval_s(Complex::new(T::zero(), omega))
    }

    /// Series connection; no cancellation is attempted.
    pub fn series(&self, other: &Self) -> Self {
        RationalTf {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        RationalTf {
            num: self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        RationalTf {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn inv(&self) -> Result<Self> {
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.series(&other.inv()?))
    }

    /// Closed-loop characteristic polynomial `den + num` of `1 + L`.
    pub fn return_difference_poly(&self) -> Poly<T> {
        self.den.add(&self.num)
    }

    /// `deg(den) - deg(num)`; the zero transfer function reports `deg(den)`.
    pub fn relative_degree(&self) -> isize {
        if self.num.is_zero() {
            return self.den.degree() as isize;
        }
        self.den.degree() as isize - self.num.degree() as isize
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree() >= 1
    }

    /// Net number of poles at the origin (zero if the origin is a zero).
    pub fn origin_poles(&self) -> usize {
        let d = self.den.origin_multiplicity();
        let n = if self.num.is_zero() {
            0
        } else {
            self.num.origin_multiplicity()
        };
        d.saturating_sub(n)
    }

    /// Ratio of leading coefficients: the high-frequency gain of
    /// `s^(n-m) * tf`.
    pub fn high_frequency_gain(&self) -> T {
        self.num.leading() / self.den.leading()
    }

    /// `tf(0)`, with the denominator's constant term required to be nonzero.
    pub fn dc_value(&self) -> Result<T> {
        let d0 = self.den.coeff(0);
        if d0 == T::zero() || self.den.origin_multiplicity() > 0 {
            return Err(Error::Normalization);
        }
        Ok(self.num.coeff(0) / d0)
    }

    pub fn poles(&self) -> Vec<Complex<T>> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex<T>> {
        self.num.roots()
    }
}

/// `(K_n, K_s0)`: the high-frequency gain of `L C_s` and the DC value of
/// `C_s` after normalizing its denominator constant term to one.
pub fn leading_coefficients<T: Real>(loop_cs: &RationalTf<T>, c_s: &RationalTf<T>) -> Result<(T, T)> {
    Ok((loop_cs.high_frequency_gain(), c_s.dc_value()?))
}
