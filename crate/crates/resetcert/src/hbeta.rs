//! Direct check of the H-beta condition for a concrete `(beta, rho)`.
//!
//! A failing candidate says nothing about the system; only a passing one
//! certifies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;

use crate::elements::{reset_matrix_condition, ElementKind};
use crate::frf::LoopSample;
use crate::gsore::FBasis;
use crate::limits::{real_part, Asymptote, RealRational};
use crate::lti::{Architecture, ClosedLoop, Poly, RationalTf};
use crate::nsv::{NsvVariant, MAX_GAP};
use crate::scalar::{cabs, carg};
use crate::system::ResetLoop;
use crate::{Error, Real, Result};

/// Strictness margin, relative to the magnitude of the terms involved.
pub const MARGIN_REL: f64 = 1e-9;
/// Angle steps tried by the scalar search.
pub const SEARCH_STEPS: usize = 720;

/// `beta` and `rho = rho^T > 0` for `C_0 = [rho, beta C_e]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HbetaCandidate<T: Real> {
    pub beta: DVector<T>,
    pub rho: DMatrix<T>,
}

impl<T: Real> HbetaCandidate<T> {
    pub fn new(beta: DVector<T>, rho: DMatrix<T>) -> Result<Self> {
        let n = beta.len();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch(format!("beta has {n} entries, rho is {}x{}", rho.nrows(), rho.ncols())));
        }
        if rho != rho.transpose() || rho.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(HbetaCandidate { beta, rho })
    }
}

/// First-order candidate in the `(beta', rho')` form of `H = (beta' L C_s +
/// rho' C_R) / (1 + L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalarCandidate<T> {
    pub beta_prime: T,
    pub rho_prime: T,
}

impl<T: Real> ScalarCandidate<T> {
    /// `beta = -beta'`, `rho = rho' C_r` for a realization with output gain `c_r`.
    pub fn to_hbeta(&self, c_r: T) -> Result<HbetaCandidate<T>> {
        HbetaCandidate::new(
            DVector::from_element(1, -self.beta_prime),
            DMatrix::from_element(1, 1, self.rho_prime * c_r),
        )
    }
}

/// Second-order candidate with `beta = -[beta1, beta2]` and
/// `rho = [[rho1, rho2], [rho2, rho3]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GsoreCandidate<T> {
    pub beta1: T,
    pub beta2: T,
    pub rho1: T,
    pub rho2: T,
    pub rho3: T,
}

impl<T: Real> GsoreCandidate<T> {
    pub fn rho(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(2, 2, &[self.rho1, self.rho2, self.rho2, self.rho3])
    }

    pub fn is_positive_definite(&self) -> bool {
        self.rho1 > T::zero() && self.rho3 > T::zero() && self.rho1 * self.rho3 > self.rho2 * self.rho2
    }

    pub fn to_hbeta(&self) -> Result<HbetaCandidate<T>> {
        HbetaCandidate::new(DVector::from_vec(vec![-self.beta1, -self.beta2]), self.rho())
    }

    /// `H(j omega) + H(j omega)^*` real symmetric part, scaled by `|1 + L|^2`,
    /// as `(m11, m12, m22)` with a magnitude bound for each entry.
    pub fn matrix_terms(&self, f: &FBasis<T>) -> ([T; 3], [T; 3]) {
        let two = T::c(2.0);
        let (b1, b2, r1, r2, r3) = (self.beta1, self.beta2, self.rho1, self.rho2, self.rho3);
        (
            [
                two * f.f1(r1, r2, b1),
                f.f1(r2, r3, b2) + f.f2(r2, r1, b1),
                two * f.f2(r3, r2, b2),
            ],
            [
                two * f.f1_bound(r1, r2, b1),
                f.f1_bound(r2, r3, b2) + f.f2_bound(r2, r1, b1),
                two * f.f2_bound(r3, r2, b2),
            ],
        )
    }
}

/// Strict positive definiteness of `[[p, q], [q, r]]`: diagonal margins
/// relative to the term bounds `b`, determinant margin relative to
/// `p r + q^2`.
pub fn pd2<T: Real>(m: [T; 3], b: [T; 3]) -> bool {
    let e = T::c(MARGIN_REL);
    m[0] > e * b[0] && m[2] > e * b[2] && m[0] * m[2] - m[1] * m[1] > e * (m[0] * m[2] + m[1] * m[1])
}

/// Largest phase step of `L`, `1 + L` and `C_R` between adjacent samples
/// must stay below the classifier's angle gap.
pub fn check_resolution<T: Real>(samples: &[LoopSample<T>]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::GridTooSparse("fewer than two frequencies".into()));
    }
    let one = Complex::new(T::one(), T::zero());
    let step = |a: Complex<T>, b: Complex<T>| {
        let d = (carg(b) - carg(a)).f64().abs() % std::f64::consts::TAU;
        d.min(std::f64::consts::TAU - d)
    };
    for w in samples.windows(2) {
        let gap = step(w[0].l, w[1].l)
            .max(step(one + w[0].l, one + w[1].l))
            .max(step(w[0].c_r, w[1].c_r));
        if gap >= MAX_GAP {
            return Err(Error::GridTooSparse(format!(
                "phase step {gap:.3} rad between omega = {} and {}",
                w[0].omega, w[1].omega
            )));
        }
    }
    Ok(())
}

/// `a / (1 + l)` as a rational function.
fn over_return_difference<T: Real>(a: &RationalTf<T>, l: &RationalTf<T>) -> Result<RationalTf<T>> {
    RationalTf::new(a.num().mul(l.den()), a.den().mul(&l.den().add(l.num())))
}

fn poly_tf<T: Real>(c: &[T]) -> RationalTf<T> {
    RationalTf::new(Poly::new(c.to_vec()), Poly::one()).expect("unit denominator")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitCheck {
    /// Leading coefficient and power of `omega` of the limit.
    pub coef: f64,
    pub power: Option<i64>,
    pub passed: bool,
}

fn entry_limit<T: Real>(r: &RealRational<T>, at_infinity: bool) -> Option<Asymptote<T>> {
    if at_infinity {
        r.at_infinity()
    } else {
        r.at_zero()
    }
}

/// `Re H` at zero needs a positive constant; at infinity a positive
/// `omega^-2` coefficient (or a positive constant).
fn scalar_limit<T: Real>(r: &RealRational<T>, at_infinity: bool) -> LimitCheck {
    let scale = if at_infinity { -2 } else { 0 };
    match entry_limit(r, at_infinity) {
        None => LimitCheck {
            coef: 0.0,
            power: None,
            passed: false,
        },
        Some(a) => {
            let v = a.scaled_limit(scale, at_infinity);
            let passed = if a.power == scale {
                v > T::c(MARGIN_REL) * a.bound
            } else {
                v > T::zero()
            };
            LimitCheck {
                coef: a.coef.f64(),
                power: Some(a.power),
                passed,
            }
        }
    }
}

/// Rational pieces of `H = (beta' A1 + rho' A2) / (1 + Lk)` for one loop model.
#[derive(Clone, Debug)]
pub struct ScalarModel<T: Real> {
    pub a1: RationalTf<T>,
    pub a2: RationalTf<T>,
    pub lk: RationalTf<T>,
}

impl<T: Real> ScalarModel<T> {
    pub fn new(l: &RationalTf<T>, c_s: &RationalTf<T>, c_r: &RationalTf<T>, variant: NsvVariant) -> Self {
        match variant {
            NsvVariant::Standard => ScalarModel {
                a1: l.series(c_s),
                a2: c_r.clone(),
                lk: l.clone(),
            },
            NsvVariant::Sosre => ScalarModel {
                a1: l.series(c_s),
                a2: c_r.series(&RationalTf::new(Poly::s(), Poly::one()).expect("unit denominator")),
                lk: l.clone(),
            },
            NsvVariant::Modified => ScalarModel {
                a1: l.clone(),
                a2: c_r.clone(),
                lk: l.series(c_s),
            },
        }
    }

    pub fn h(&self, c: &ScalarCandidate<T>) -> Result<RationalTf<T>> {
        let num = self.a1.scale(c.beta_prime).add(&self.a2.scale(c.rho_prime));
        over_return_difference(&num, &self.lk)
    }
}

#[derive(Clone, Debug)]
pub struct ScalarContext<T: Real> {
    pub variant: NsvVariant,
    pub low: Option<ScalarModel<T>>,
    pub high: Option<ScalarModel<T>>,
}

impl<T: Real> ScalarContext<T> {
    pub fn from_loop(sys: &ResetLoop<T>) -> Result<Self> {
        let variant = NsvVariant::for_loop(sys.element.kind, sys.architecture);
        let c_r = sys.element.base_tf();
        let models = sys.asymptotic_loops()?;
        let mk = |l: &RationalTf<T>| ScalarModel::new(l, &sys.c_s, &c_r, variant);
        Ok(ScalarContext {
            variant,
            low: models.as_ref().map(|(lo, _)| mk(lo)),
            high: models.as_ref().map(|(_, hi)| mk(hi)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarReport {
    pub min_re_h: f64,
    pub min_omega: f64,
    pub grid_passed: bool,
    /// First grid frequency where `Re H` is not strictly positive.
    pub witness: Option<f64>,
    pub low: Option<LimitCheck>,
    pub high: Option<LimitCheck>,
    pub passed: bool,
}

/// `(A1, A2, Lk)` at one sample.
fn scalar_terms<T: Real>(s: &LoopSample<T>, variant: NsvVariant) -> (Complex<T>, Complex<T>, Complex<T>) {
    match variant {
        NsvVariant::Standard => (s.l * s.c_s, s.c_r, s.l),
        NsvVariant::Sosre => (s.l * s.c_s, Complex::new(T::zero(), s.omega) * s.c_r, s.l),
        NsvVariant::Modified => (s.l, s.c_r, s.l * s.c_s),
    }
}

pub fn spr_check_scalar<T: Real>(
    cand: &ScalarCandidate<T>,
    samples: &[LoopSample<T>],
    ctx: &ScalarContext<T>,
) -> Result<ScalarReport> {
    check_resolution(samples)?;
    let one = Complex::new(T::one(), T::zero());
    let (bp, rp) = (cand.beta_prime, cand.rho_prime);
    let mut min = (f64::INFINITY, f64::NAN);
    let mut witness = None;
    for s in samples {
        let (a1, a2, lk) = scalar_terms(s, ctx.variant);
        let d = one + lk;
        let h = (a1 * bp + a2 * rp) / d;
        let margin = T::c(MARGIN_REL) * (bp.abs() * cabs(a1) + rp.abs() * cabs(a2)) / cabs(d);
        if h.re.f64() < min.0 {
            min = (h.re.f64(), s.omega.f64());
        }
        if witness.is_none() && !(h.re > margin) {
            witness = Some(s.omega.f64());
        }
    }
    let limit = |m: &Option<ScalarModel<T>>, at_inf: bool| -> Result<Option<LimitCheck>> {
        m.as_ref()
            .map(|m| Ok(scalar_limit(&real_part(&m.h(cand)?), at_inf)))
            .transpose()
    };
    let low = limit(&ctx.low, false)?;
    let high = limit(&ctx.high, true)?;
    let grid_passed = witness.is_none();
    let passed = grid_passed && low.is_some_and(|l| l.passed) && high.is_some_and(|h| h.passed);
    Ok(ScalarReport {
        min_re_h: min.0,
        min_omega: min.1,
        grid_passed,
        witness,
        low,
        high,
        passed,
    })
}

/// Sweeps the direction of `(beta', rho')` over the unit circle, skipping
/// directions with `rho' <= 0`, and returns the first direction (in order
/// of decreasing worst-case grid margin) that passes every check.
pub fn search_candidate_scalar<T: Real>(
    samples: &[LoopSample<T>],
    ctx: &ScalarContext<T>,
) -> Result<Option<ScalarCandidate<T>>> {
    check_resolution(samples)?;
    let one = Complex::new(T::one(), T::zero());
    let dirs: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let (a1, a2, lk) = scalar_terms(s, ctx.variant);
            let k = (one + lk).conj();
            let (x, y) = ((a1 * k).re.f64(), (a2 * k).re.f64());
            let n = x.hypot(y);
            (x / n, y / n)
        })
        .collect();
    let mut scored: Vec<(f64, f64, f64)> = (0..SEARCH_STEPS)
        .filter_map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / SEARCH_STEPS as f64;
            let (b, r) = (phi.cos(), phi.sin());
            if r <= 1e-12 {
                return None;
            }
            let worst = dirs.iter().map(|(x, y)| b * x + r * y).fold(f64::INFINITY, f64::min);
            (worst > 0.0).then_some((worst, b, r))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, b, r) in scored {
        let c = ScalarCandidate {
            beta_prime: T::c(b),
            rho_prime: T::c(r),
        };
        if spr_check_scalar(&c, samples, ctx)?.passed {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Loop models and element data for the second-order check.
#[derive(Clone, Debug)]
pub struct MatrixContext<T: Real> {
    pub omega_r: T,
    pub xi: T,
    pub a_rho: DMatrix<T>,
    pub c_s: RationalTf<T>,
    pub c_r: RationalTf<T>,
    /// `L` near `omega -> 0` and `omega -> inf`.
    pub low: Option<RationalTf<T>>,
    pub high: Option<RationalTf<T>>,
    /// Enables the Hermitian diagnostic.
    pub closed_loop: Option<ClosedLoop<T>>,
}

impl<T: Real> MatrixContext<T> {
    pub fn from_loop(sys: &ResetLoop<T>) -> Result<Self> {
        if sys.element.kind != ElementKind::Gsore {
            return Err(Error::Config("the matrix check needs a GSORE element".into()));
        }
        if sys.architecture != Architecture::Standard {
            return Err(Error::Config("the matrix check supports the standard architecture only".into()));
        }
        let models = sys.asymptotic_loops()?;
        Ok(MatrixContext {
            omega_r: sys.element.omega_r,
            xi: sys.element.xi,
            a_rho: sys.element.a_rho.clone(),
            c_s: sys.c_s.clone(),
            c_r: sys.element.base_tf(),
            low: models.as_ref().map(|m| m.0.clone()),
            high: models.map(|m| m.1),
            closed_loop: sys.closed_loop().ok(),
        })
    }

    /// `(m11, m12, m22) / |1 + L|^2` as real rational functions of `omega`.
    fn entries(&self, l: &RationalTf<T>, c: &GsoreCandidate<T>) -> Result<[RealRational<T>; 3]> {
        let cc = T::c(2.0) * self.xi * self.omega_r;
        let (b1, b2, r1, r2, r3) = (c.beta1, c.beta2, c.rho1, c.rho2, c.rho3);
        let lcs = l.series(&self.c_s);
        let cr = &self.c_r;
        let a_p = cr.series(&poly_tf(&[r2, r1])).add(&lcs.scale(b1));
        let a_q = cr
            .series(&poly_tf(&[r3 + r2 * cc, r2 + r2 + r1 * cc, r1]))
            .add(&lcs.series(&poly_tf(&[b2 + b1 * cc, b1])));
        let a_r = cr
            .series(&poly_tf(&[r3 * cc, r3 + r2 * cc, r2]))
            .add(&lcs.series(&poly_tf(&[b2 * cc, b2])));
        let two = T::c(2.0);
        let p = real_part(&over_return_difference(&a_p, l)?).scale(two);
        let q = real_part(&over_return_difference(&a_q, l)?).add_constant(-r1);
        let r = real_part(&over_return_difference(&a_r, l)?).add_constant(-r2).scale(two);
        Ok([p, q, r])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitMatrix {
    /// `(m11, m12, m22)`, scaled by `omega^2` at infinity.
    pub entries: [f64; 3],
    pub passed: bool,
}

fn matrix_limit<T: Real>(e: &[RealRational<T>; 3], at_infinity: bool) -> LimitMatrix {
    let scale = if at_infinity { -2 } else { 0 };
    let mut vals = [T::zero(); 3];
    let mut bounds = [T::zero(); 3];
    let mut finite = true;
    for i in 0..3 {
        if let Some(a) = entry_limit(&e[i], at_infinity) {
            let v = a.scaled_limit(scale, at_infinity);
            if a.power == scale {
                vals[i] = v;
                bounds[i] = a.bound;
            } else if v != T::zero() {
                finite = false;
            }
        }
    }
    LimitMatrix {
        entries: vals.map(|v| v.f64()),
        passed: finite && pd2(vals, bounds),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixReport {
    pub grid_passed: bool,
    pub witness: Option<f64>,
    /// Smallest `(m11 m22 - m12^2) / (m11 m22 + m12^2)` on the grid.
    pub min_det_ratio: f64,
    pub low: Option<LimitMatrix>,
    pub high: Option<LimitMatrix>,
    pub reset_matrix: bool,
    /// Smallest eigenvalue of `H + H^*` on the grid, from the closed-loop
    /// matrices; reported, not used in the verdict.
    pub hermitian_min_eig: Option<f64>,
    pub passed: bool,
}

pub fn spr_check_matrix<T: Real>(
    cand: &GsoreCandidate<T>,
    samples: &[LoopSample<T>],
    ctx: &MatrixContext<T>,
) -> Result<MatrixReport> {
    if !cand.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    check_resolution(samples)?;
    let reset_matrix = reset_matrix_condition(&ctx.a_rho, &cand.rho())?;
    let mut witness = None;
    let mut min_det = f64::INFINITY;
    for s in samples {
        let f = FBasis::new(s, ctx.omega_r, ctx.xi);
        let (m, b) = cand.matrix_terms(&f);
        let det = (m[0] * m[2] - m[1] * m[1]).f64();
        let norm = (m[0] * m[2]).abs().f64() + (m[1] * m[1]).f64();
        if norm > 0.0 {
            min_det = min_det.min(det / norm);
        }
        if witness.is_none() && !pd2(m, b) {
            witness = Some(s.omega.f64());
        }
    }
    let low = ctx
        .low
        .as_ref()
        .map(|l| ctx.entries(l, cand).map(|e| matrix_limit(&e, false)))
        .transpose()?;
    let high = ctx
        .high
        .as_ref()
        .map(|l| ctx.entries(l, cand).map(|e| matrix_limit(&e, true)))
        .transpose()?;
    let hermitian_min_eig = match &ctx.closed_loop {
        Some(cl) => Some(hermitian_min_eig(cl, cand, samples)?),
        None => None,
    };
    let grid_passed = witness.is_none();
    let passed = grid_passed
        && reset_matrix
        && low.is_some_and(|l| l.passed)
        && high.is_some_and(|h| h.passed);
    Ok(MatrixReport {
        grid_passed,
        witness,
        min_det_ratio: min_det,
        low,
        high,
        reset_matrix,
        hermitian_min_eig,
        passed,
    })
}

/// `C_0 = [rho, beta C_e]` on the state `[x_r; zeta]`.
pub fn c0_matrix<T: Real>(cl: &ClosedLoop<T>, cand: &HbetaCandidate<T>) -> DMatrix<T> {
    let n = cl.order();
    let nr = cl.n_r;
    let mut c0 = &cand.beta * &cl.c_e_bar;
    let mut block = c0.view_mut((0, 0), (nr, nr));
    block += &cand.rho;
    debug_assert_eq!(c0.ncols(), n);
    c0
}

/// `H(j omega) = C_0 (j omega I - A)^-1 B_0` with `B_0 = [I; 0]`.
pub fn transfer_matrix<T: Real>(cl: &ClosedLoop<T>, c0: &DMatrix<T>, omega: T) -> Result<DMatrix<Complex<T>>> {
    let n = cl.order();
    let nr = cl.n_r;
    let zero = Complex::new(T::zero(), T::zero());
    let mut m = DMatrix::from_fn(n, n, |i, j| Complex::new(-cl.a_bar[(i, j)], T::zero()));
    for i in 0..n {
        m[(i, i)] += Complex::new(T::zero(), omega);
    }
    let b0 = DMatrix::from_fn(n, nr, |i, j| if i == j { Complex::new(T::one(), T::zero()) } else { zero });
    let x = m
        .lu()
        .solve(&b0)
        .ok_or(Error::EvaluationAtPole { omega: omega.f64() })?;
    let c = c0.map(|v| Complex::new(v, T::zero()));
    Ok(c * x)
}

fn hermitian_min_eig<T: Real>(cl: &ClosedLoop<T>, cand: &GsoreCandidate<T>, samples: &[LoopSample<T>]) -> Result<f64> {
    let c0 = c0_matrix(cl, &cand.to_hbeta()?);
    let mut worst = f64::INFINITY;
    for s in samples {
        let h = transfer_matrix(cl, &c0, s.omega)?;
        let k11 = (h[(0, 0)].re * T::c(2.0)).f64();
        let k22 = (h[(1, 1)].re * T::c(2.0)).f64();
        let k12 = h[(0, 1)] + h[(1, 0)].conj();
        let off = cabs(k12).f64();
        let eig = 0.5 * (k11 + k22) - (0.25 * (k11 - k22).powi(2) + off * off).sqrt();
        worst = worst.min(eig);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::ResetElement;
    use crate::frf::{log_space, Plant};

    fn tf(n: &[f64], d: &[f64]) -> RationalTf<f64> {
        RationalTf::from_f64(n, d).unwrap()
    }

    fn first_order(c_r: ResetElement<f64>, g: RationalTf<f64>) -> (Vec<LoopSample<f64>>, ScalarContext<f64>) {
        let sys = ResetLoop::new(c_r, Plant::Rational(g));
        let grid = log_space(1e-3, 1e3, 1500);
        (sys.samples(&grid).unwrap(), ScalarContext::from_loop(&sys).unwrap())
    }

    #[test]
    fn closed_form_scalar_examples() {
        let (s, ctx) = first_order(ResetElement::gfore(1.0, 0.0).unwrap(), RationalTf::one());
        let good = ScalarCandidate { beta_prime: 1.0, rho_prime: 1.0 };
        let r = spr_check_scalar(&good, &s, &ctx).unwrap();
        assert!(r.passed);
        // H = 2/(s+2)
        assert!((r.min_re_h - 4.0 / (4.0 + 1e6)).abs() < 1e-12);
        assert_eq!(r.low.unwrap().coef, 1.0);
        assert_eq!((r.high.unwrap().coef, r.high.unwrap().power), (4.0, Some(-2)));

        let bad = ScalarCandidate { beta_prime: -1.0, rho_prime: 0.0 };
        let r = spr_check_scalar(&bad, &s, &ctx).unwrap();
        assert!(!r.passed);
        assert!((r.low.unwrap().coef + 0.5).abs() < 1e-15);
    }

    #[test]
    fn scale_invariance() {
        let (s, ctx) = first_order(ResetElement::gfore(1.0, 0.3).unwrap(), tf(&[1.0], &[1.0, 1.0]));
        for (b, r) in [(1.0, 1.0), (0.2, 1.0), (-0.3, 1.0), (1.0, 0.01)] {
            let a = spr_check_scalar(&ScalarCandidate { beta_prime: b, rho_prime: r }, &s, &ctx).unwrap();
            let c = spr_check_scalar(&ScalarCandidate { beta_prime: 7.5 * b, rho_prime: 7.5 * r }, &s, &ctx).unwrap();
            assert_eq!(a.passed, c.passed);
        }
    }

    #[test]
    fn search_examples() {
        let (s, ctx) = first_order(ResetElement::gfore(1.0, 0.0).unwrap(), RationalTf::one());
        let c = search_candidate_scalar(&s, &ctx).unwrap().unwrap();
        assert!(c.rho_prime > 0.0);
        let (s, ctx) = first_order(ResetElement::gfore(1.0, 0.0).unwrap(), tf(&[1.0], &[1.0, 1.0]));
        assert!(search_candidate_scalar(&s, &ctx).unwrap().is_some());
    }

    #[test]
    fn ci_limits_fail_as_expected() {
        // relative degree 3: omega^2 Re H -> 0
        let (s, ctx) = first_order(ResetElement::ci(0.0), tf(&[1.0], &[1.0, 2.0, 1.0]));
        for k in 0..36 {
            let phi = std::f64::consts::PI * (k as f64 + 0.5) / 36.0;
            let c = ScalarCandidate { beta_prime: phi.cos(), rho_prime: phi.sin() };
            let r = spr_check_scalar(&c, &s, &ctx).unwrap();
            assert!(!r.high.unwrap().passed);
        }
    }

    #[test]
    fn sparse_grid_rejected() {
        let sys = ResetLoop::new(ResetElement::gfore(1.0, 0.0).unwrap(), Plant::Rational(tf(&[1.0], &[1.0, 0.1, 1.0])));
        let s = sys.samples(&[0.1, 10.0]).unwrap();
        let ctx = ScalarContext::from_loop(&sys).unwrap();
        let c = ScalarCandidate { beta_prime: 1.0, rho_prime: 1.0 };
        assert!(matches!(spr_check_scalar(&c, &s, &ctx), Err(Error::GridTooSparse(_))));
    }

    fn gsore_loop(gamma: f64) -> ResetLoop<f64> {
        let e = ResetElement::gsore(1.0, 0.8, DMatrix::identity(2, 2) * gamma).unwrap();
        let mut sys = ResetLoop::new(e, Plant::Rational(tf(&[2.0, 1.0], &[0.0, 1.0, 1.0])));
        sys.c_s = tf(&[1.0, 0.5], &[1.0, 0.25]);
        sys
    }

    #[test]
    fn matrix_entries_match_transfer_matrix() {
        let sys = gsore_loop(0.3);
        let ctx = MatrixContext::from_loop(&sys).unwrap();
        let cl = ctx.closed_loop.clone().unwrap();
        let cand = GsoreCandidate { beta1: 0.7, beta2: -0.4, rho1: 2.0, rho2: 0.3, rho3: 1.5 };
        let c0 = c0_matrix(&cl, &cand.to_hbeta().unwrap());
        for &w in &[0.05, 0.7, 1.3, 20.0] {
            let s = sys.samples(&[w]).unwrap()[0];
            let f = FBasis::new(&s, 1.0, 0.8);
            let (m, _) = cand.matrix_terms(&f);
            let k2 = (Complex::new(1.0, 0.0) + s.l).norm_sqr();
            let h = transfer_matrix(&cl, &c0, w).unwrap();
            let direct = [2.0 * h[(0, 0)].re, h[(0, 1)].re + h[(1, 0)].re, 2.0 * h[(1, 1)].re];
            for i in 0..3 {
                assert!((m[i] / k2 - direct[i]).abs() < 1e-10 * (1.0 + direct[i].abs()), "entry {i} at {w}");
            }
            let e = ctx.entries(&sys.loop_tf().unwrap(), &cand).unwrap();
            for i in 0..3 {
                assert!((e[i].eval(w) - direct[i]).abs() < 1e-9 * (1.0 + direct[i].abs()));
            }
        }
    }

    #[test]
    fn non_positive_rho_rejected() {
        let sys = gsore_loop(0.3);
        let ctx = MatrixContext::from_loop(&sys).unwrap();
        let s = sys.samples(&log_space(0.01, 100.0, 400)).unwrap();
        let cand = GsoreCandidate { beta1: 1.0, beta2: 1.0, rho1: 1.0, rho2: 1.0, rho3: 1.0 };
        assert!(matches!(spr_check_matrix(&cand, &s, &ctx), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn identity_rho_fails_where_f2_is_negative() {
        let sys = gsore_loop(0.3);
        let ctx = MatrixContext::from_loop(&sys).unwrap();
        let s = sys.samples(&log_space(0.01, 100.0, 400)).unwrap();
        let cand = GsoreCandidate { beta1: 0.0, beta2: 0.0, rho1: 1.0, rho2: 0.0, rho3: 1.0 };
        let rep = spr_check_matrix(&cand, &s, &ctx).unwrap();
        assert!(!rep.passed);
        let w = rep.witness.expect("grid witness");
        let at = s.iter().find(|x| x.omega == w).unwrap();
        let f = FBasis::new(at, 1.0, 0.8);
        assert!(f.f1(1.0, 0.0, 0.0) <= 0.0 || f.f2(1.0, 0.0, 0.0) < 0.0);
        assert!(s.iter().any(|x| FBasis::new(x, 1.0, 0.8).f2(1.0, 0.0, 0.0) < 0.0));
    }
}
