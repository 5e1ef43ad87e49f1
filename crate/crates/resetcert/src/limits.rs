//! Exact `omega -> 0` and `omega -> inf` behavior of real rational functions
//! of `omega` built from transfer functions evaluated at `s = j omega`.
//!
//! Every coefficient carries a magnitude bound (the sum of absolute values of
//! the products that formed it). A coefficient is treated as an exact zero
//! when it is below `ZERO_REL` times its bound, which removes cancellation
//! residue without any evaluation at extreme frequencies.

use num_complex::Complex;

use crate::lti::{Poly, RationalTf};
use crate::Real;

pub const ZERO_REL: f64 = 1e-10;

/// Real polynomial in `omega` with per-coefficient magnitude bounds.
#[derive(Clone, Debug)]
pub struct RPoly<T> {
    c: Vec<T>,
    mag: Vec<T>,
}

/// Complex polynomial in `omega`.
#[derive(Clone, Debug)]
pub struct JPoly<T> {
    c: Vec<Complex<T>>,
    mag: Vec<T>,
}

impl<T: Real> JPoly<T> {
    /// `p(j omega)` as a polynomial in `omega`.
    pub fn from_poly(p: &Poly<T>) -> Self {
        let z = T::zero();
        let c = p
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, &a)| match k % 4 {
                0 => Complex::new(a, z),
                1 => Complex::new(z, a),
                2 => Complex::new(-a, z),
                _ => Complex::new(z, -a),
            })
            .collect();
        let mag = p.coeffs().iter().map(|a| a.abs()).collect();
        JPoly { c, mag }
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.c.is_empty() || o.c.is_empty() {
            return JPoly { c: vec![], mag: vec![] };
        }
        let n = self.c.len() + o.c.len() - 1;
        let mut c = vec![Complex::new(T::zero(), T::zero()); n];
        let mut mag = vec![T::zero(); n];
        for i in 0..self.c.len() {
            for j in 0..o.c.len() {
                c[i + j] += self.c[i] * o.c[j];
                mag[i + j] += self.mag[i] * o.mag[j];
            }
        }
        JPoly { c, mag }
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let zero = Complex::new(T::zero(), T::zero());
        let c = (0..n)
            .map(|k| self.c.get(k).copied().unwrap_or(zero) + o.c.get(k).copied().unwrap_or(zero))
            .collect();
        let mag = (0..n)
            .map(|k| self.mag.get(k).copied().unwrap_or(T::zero()) + o.mag.get(k).copied().unwrap_or(T::zero()))
            .collect();
        JPoly { c, mag }
    }

    /// Conjugate on the real `omega` axis.
    pub fn conj(&self) -> Self {
        JPoly {
            c: self.c.iter().map(|z| z.conj()).collect(),
            mag: self.mag.clone(),
        }
    }

    /// Multiplies by `j omega`.
    pub fn mul_jw(&self) -> Self {
        let mut c = vec![Complex::new(T::zero(), T::zero())];
        c.extend(self.c.iter().map(|z| Complex::new(-z.im, z.re)));
        let mut mag = vec![T::zero()];
        mag.extend(self.mag.iter().copied());
        JPoly { c, mag }
    }

    pub fn re(&self) -> RPoly<T> {
        RPoly {
            c: self.c.iter().map(|z| z.re).collect(),
            mag: self.mag.clone(),
        }
    }

    /// `|p(j omega)|^2`
    pub fn abs2(&self) -> RPoly<T> {
        self.mul(&self.conj()).re()
    }
}

impl<T: Real> RPoly<T> {
    pub fn mul(&self, o: &Self) -> Self {
        if self.c.is_empty() || o.c.is_empty() {
            return RPoly { c: vec![], mag: vec![] };
        }
        let n = self.c.len() + o.c.len() - 1;
        let mut c = vec![T::zero(); n];
        let mut mag = vec![T::zero(); n];
        for i in 0..self.c.len() {
            for j in 0..o.c.len() {
                c[i + j] += self.c[i] * o.c[j];
                mag[i + j] += self.mag[i] * o.mag[j];
            }
        }
        RPoly { c, mag }
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let g = |v: &Vec<T>, k: usize| v.get(k).copied().unwrap_or(T::zero());
        RPoly {
            c: (0..n).map(|k| g(&self.c, k) + g(&o.c, k)).collect(),
            mag: (0..n).map(|k| g(&self.mag, k) + g(&o.mag, k)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        RPoly {
            c: self.c.iter().map(|&x| x * k).collect(),
            mag: self.mag.iter().map(|&x| x * k.abs()).collect(),
        }
    }

    fn live(&self, k: usize) -> bool {
        self.c[k].abs() > T::c(ZERO_REL) * self.mag[k]
    }

    /// `(power, coefficient, bound)` of the lowest surviving term.
    pub fn lowest(&self) -> Option<(usize, T, T)> {
        (0..self.c.len()).find(|&k| self.live(k)).map(|k| (k, self.c[k], self.mag[k]))
    }

    pub fn highest(&self) -> Option<(usize, T, T)> {
        (0..self.c.len()).rev().find(|&k| self.live(k)).map(|k| (k, self.c[k], self.mag[k]))
    }

    pub fn eval(&self, w: T) -> T {
        self.c.iter().rev().fold(T::zero(), |acc, &k| acc * w + k)
    }
}

/// `f(omega) ~ coef * omega^power` with the magnitude bound of `coef`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Asymptote<T> {
    pub coef: T,
    pub bound: T,
    pub power: i64,
}

impl<T: Real> Asymptote<T> {
    /// Value of `omega^-scale * f` in the limit: `coef` when the power
    /// matches, zero when `f` decays faster, signed infinity when slower.
    pub fn scaled_limit(&self, scale: i64, at_infinity: bool) -> T {
        let faster_decay = if at_infinity {
            self.power < scale
        } else {
            self.power > scale
        };
        if self.power == scale {
            self.coef
        } else if faster_decay {
            T::zero()
        } else if self.coef > T::zero() {
            T::max_value().unwrap()
        } else {
            T::min_value().unwrap()
        }
    }
}

/// Real rational function of `omega` with positive-definite denominator.
#[derive(Clone, Debug)]
pub struct RealRational<T> {
    pub num: RPoly<T>,
    pub den: RPoly<T>,
}

impl<T: Real> RealRational<T> {
    pub fn add(&self, o: &Self) -> Self {
        RealRational {
            num: self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            den: self.den.mul(&o.den),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        RealRational {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        RealRational {
            num: self.num.mul(&o.num),
            den: self.den.mul(&o.den),
        }
    }

    pub fn eval(&self, w: T) -> T {
        self.num.eval(w) / self.den.eval(w)
    }

    /// `f + c`
    pub fn add_constant(&self, c: T) -> Self {
        RealRational {
            num: self.num.add(&self.den.scale(c)),
            den: self.den.clone(),
        }
    }

    /// `None` when the function vanishes identically.
    pub fn at_zero(&self) -> Option<Asymptote<T>> {
        Self::ratio(self.num.lowest()?, self.den.lowest()?)
    }

    pub fn at_infinity(&self) -> Option<Asymptote<T>> {
        Self::ratio(self.num.highest()?, self.den.highest()?)
    }

    fn ratio(n: (usize, T, T), d: (usize, T, T)) -> Option<Asymptote<T>> {
        Some(Asymptote {
            coef: n.1 / d.1,
            bound: n.2 / d.1.abs(),
            power: n.0 as i64 - d.0 as i64,
        })
    }
}

/// `Re(A(j omega) kappa(omega))` with `kappa = 1 + conj(L(j omega))`,
/// optionally with `A` multiplied by `j omega`.
pub fn kappa_projection<T: Real>(a: &RationalTf<T>, l: &RationalTf<T>, times_jw: bool) -> RealRational<T> {
    let (an, ad) = (JPoly::from_poly(a.num()), JPoly::from_poly(a.den()));
    let (ln, ld) = (JPoly::from_poly(l.num()), JPoly::from_poly(l.den()));
    let an = if times_jw { an.mul_jw() } else { an };
    // kappa = (conj ld + conj ln) ld / |ld|^2
    let num = an.mul(&ld.conj().add(&ln.conj())).mul(&ld).mul(&ad.conj()).re();
    let den = ad.abs2().mul(&ld.abs2());
    RealRational { num, den }
}

/// `Re h(j omega)`
pub fn real_part<T: Real>(h: &RationalTf<T>) -> RealRational<T> {
    let (n, d) = (JPoly::from_poly(h.num()), JPoly::from_poly(h.den()));
    RealRational {
        num: n.mul(&d.conj()).re(),
        den: d.abs2(),
    }
}

/// `|L_d|^2 / |L_d + L_n|^2 = 1 / |1 + L|^2`
pub fn inverse_return_difference_abs2<T: Real>(l: &RationalTf<T>) -> RealRational<T> {
    let (ln, ld) = (JPoly::from_poly(l.num()), JPoly::from_poly(l.den()));
    RealRational {
        num: ld.abs2(),
        den: ld.add(&ln).abs2(),
    }
}

/// Angle of the vector `(x, y)` in the limit, or `None` if both vanish.
pub fn limit_direction<T: Real>(x: Option<Asymptote<T>>, y: Option<Asymptote<T>>, at_infinity: bool) -> Option<T> {
    let dominant = |a: i64, b: i64| if at_infinity { a.max(b) } else { a.min(b) };
    let (x, y) = match (x, y) {
        (None, None) => return None,
        (Some(x), None) => (x.coef, T::zero()),
        (None, Some(y)) => (T::zero(), y.coef),
        (Some(x), Some(y)) => {
            let p = dominant(x.power, y.power);
            (
                if x.power == p { x.coef } else { T::zero() },
                if y.power == p { y.coef } else { T::zero() },
            )
        }
    };
    Some(y.atan2(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(n: &[f64], d: &[f64]) -> RationalTf<f64> {
        RationalTf::from_f64(n, d).unwrap()
    }

    #[test]
    fn projection_matches_pointwise() {
        let l = tf(&[2.0, 1.0], &[0.0, 3.0, 2.0, 1.0]);
        let a = tf(&[1.0], &[1.0, 1.0]);
        let r = kappa_projection(&a, &l, false);
        let rj = kappa_projection(&a, &l, true);
        for &w in &[0.3, 1.0, 7.0] {
            let lv = l.eval(w).unwrap();
            let k = Complex::new(1.0, 0.0) + lv.conj();
            let direct = (a.eval(w).unwrap() * k).re;
            assert!((r.eval(w) - direct).abs() < 1e-12 * direct.abs().max(1.0));
            let dj = (Complex::new(0.0, w) * a.eval(w).unwrap() * k).re;
            assert!((rj.eval(w) - dj).abs() < 1e-12 * dj.abs().max(1.0));
        }
    }

    #[test]
    fn exact_cancellation_is_detected() {
        // Re(1/(1+jw)) = 1/(1+w^2): numerator has no w^1 term
        let a = tf(&[1.0], &[1.0, 1.0]);
        let r = kappa_projection(&a, &RationalTf::gain(0.0), false);
        let hi = r.at_infinity().unwrap();
        assert_eq!(hi.power, -2);
        assert!((hi.coef - 1.0).abs() < 1e-15);
        let lo = r.at_zero().unwrap();
        assert_eq!((lo.power, lo.coef), (0, 1.0));
    }

    #[test]
    fn first_order_nsv_limits() {
        // L = C_R = 1/(s+1): N = (1, 1) * 4/(... ) up to a positive factor, angle pi/4 at both ends
        let l = tf(&[1.0], &[1.0, 1.0]);
        let nx = kappa_projection(&l, &l, false);
        let ny = kappa_projection(&l, &l, false);
        let t0 = limit_direction(nx.at_zero(), ny.at_zero(), false).unwrap();
        let ti = limit_direction(nx.at_infinity(), ny.at_infinity(), true).unwrap();
        assert!((t0 - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        assert!((ti - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
    }

    #[test]
    fn real_part_limits() {
        // Re 2/(jw+2) = 4/(4+w^2)
        let r = real_part(&tf(&[2.0], &[2.0, 1.0]));
        assert_eq!(r.at_zero().unwrap().coef, 1.0);
        let hi = r.at_infinity().unwrap();
        assert_eq!((hi.power, hi.coef), (-2, 4.0));
        // Re(jw/(jw+1)) - 1 = -1/(1+w^2)
        let r = real_part(&tf(&[0.0, 1.0], &[1.0, 1.0])).add_constant(-1.0);
        let hi = r.at_infinity().unwrap();
        assert_eq!((hi.power, hi.coef), (-2, -1.0));
    }

    #[test]
    fn scaled_limits() {
        let a = Asymptote { coef: 3.0, bound: 3.0, power: -2 };
        assert_eq!(a.scaled_limit(-2, true), 3.0);
        assert_eq!(a.scaled_limit(0, true), 0.0);
        assert_eq!(a.scaled_limit(-4, true), f64::MAX);
    }
}
