use num_complex::Complex;
use serde::Serialize;

use super::poly::Poly;
use super::tf::RationalTf;
use crate::scalar::{cabs, carg};
use crate::{Error, Real, Result};

/// Relative distance under which a zero and a pole are considered to cancel.
pub const CANCEL_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearStability<T> {
    pub stable: bool,
    /// Roots of `den + num`.
    pub poles: Vec<Complex<T>>,
}

/// Closed-loop poles of `1 + L = 0`.
pub fn base_linear_stability<T: Real>(l: &RationalTf<T>) -> LinearStability<T> {
    let poles = l.return_difference_poly().roots();
    let stable = poles
        .iter()
        .all(|p| p.re < -T::c(1e-10) * cabs(*p).max(T::one()));
    LinearStability { stable, poles }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NyquistReport {
    pub stable: bool,
    /// Net clockwise encirclements of -1.
    pub encirclements: i64,
    /// `encirclements + open-loop RHP poles`.
    pub closed_loop_rhp: i64,
    pub origin_poles: usize,
}

/// Winding-number stability test on sampled `L(j omega)`, omega increasing.
///
/// The positive-frequency phase change of `1 + L` is doubled by conjugate
/// symmetry; each origin pole contributes `-pi` from the small indentation.
/// `origin_poles = None` estimates the count from the low-frequency slope.
pub fn nyquist_stability<T: Real>(
    omega: &[T],
    l: &[Complex<T>],
    open_loop_rhp: usize,
    origin_poles: Option<usize>,
) -> Result<NyquistReport> {
    if omega.len() < 2 || omega.len() != l.len() {
        return Err(Error::EmptyTable);
    }
    let one = Complex::new(T::one(), T::zero());
    let mut total = 0.0;
    let mut prev = carg(one + l[0]).f64();
    for k in 1..l.len() {
        let cur = carg(one + l[k]).f64();
        let d = wrap_pi(cur - prev);
        if d.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::InsufficientFrfResolution {
                omega: omega[k].f64(),
                jump: d.abs(),
            });
        }
        total += d;
        prev = cur;
    }
    let q = origin_poles.unwrap_or_else(|| estimate_origin_poles(omega, l));
    let winding = 2.0 * total - q as f64 * std::f64::consts::PI;
    let encirclements = (-winding / std::f64::consts::TAU).round() as i64;
    let closed_loop_rhp = encirclements + open_loop_rhp as i64;
    Ok(NyquistReport {
        stable: closed_loop_rhp == 0,
        encirclements,
        closed_loop_rhp,
        origin_poles: q,
    })
}

fn wrap_pi(x: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let mut y = x % t;
    if y > std::f64::consts::PI {
        y -= t;
    } else if y <= -std::f64::consts::PI {
        y += t;
    }
    y
}

fn estimate_origin_poles<T: Real>(omega: &[T], l: &[Complex<T>]) -> usize {
    let (m0, m1) = (cabs(l[0]).f64(), cabs(l[1]).f64());
    if m0 == 0.0 || m1 == 0.0 {
        return 0;
    }
    let slope = (m1.ln() - m0.ln()) / (omega[1].f64().ln() - omega[0].f64().ln());
    (-slope).round().max(0.0) as usize
}

/// Log-spaced band covering every nonzero pole and zero magnitude of `tf`,
/// widened by two decades on each side.
pub fn rational_band<T: Real>(tf: &RationalTf<T>) -> (f64, f64) {
    let mags: Vec<f64> = tf
        .poles()
        .into_iter()
        .chain(tf.zeros())
        .map(|z| cabs(z).f64())
        .filter(|&m| m > 1e-12)
        .collect();
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0, f64::max);
    if !lo.is_finite() {
        return (1e-2, 1e2);
    }
    (lo * 1e-2, hi * 1e2)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Minimality<T> {
    Minimal,
    /// Numerator roots that coincide with denominator roots.
    Cancellation(Vec<Complex<T>>),
}

impl<T> Minimality<T> {
    pub fn is_minimal(&self) -> bool {
        matches!(self, Minimality::Minimal)
    }
}

/// Common roots of numerator and denominator.
///
/// Repeated roots come out of the companion matrix perturbed by roughly
/// `eps^(1/k)`, so a numerator root also counts as cancelled when the
/// denominator nearly vanishes there relative to its coefficient scale.
pub fn minimality_check<T: Real>(l: &RationalTf<T>) -> Minimality<T> {
    if l.num().is_zero() {
        return Minimality::Minimal;
    }
    let den_roots = l.den().roots();
    let mut hits = Vec::new();
    for z in l.num().roots() {
        let near = den_roots
            .iter()
            .any(|p| cabs(z - p) <= T::c(CANCEL_REL) * cabs(*p).max(T::one()));
        if near || nearly_vanishes(l.den(), z) {
            hits.push(z);
        }
    }
    if hits.is_empty() {
        Minimality::Minimal
    } else {
        Minimality::Cancellation(hits)
    }
}

fn nearly_vanishes<T: Real>(p: &Poly<T>, z: Complex<T>) -> bool {
    cabs(p.eval(z)) <= T::c(1e-9) * p.eval_abs(z)
}
