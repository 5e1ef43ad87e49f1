//! GSORE certification through the Q-parameterized matrix conditions.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::elements::ElementKind;
use crate::frf::LoopSample;
use crate::hbeta::{c0_matrix, check_resolution, spr_check_matrix, GsoreCandidate, MatrixContext, MatrixReport, MARGIN_REL};
use crate::lti::{ctrb_obsv_rank, leading_coefficients};
use crate::scalar::cabs;
use crate::system::ResetLoop;
use crate::{Error, Real, Result};

/// Per-frequency projections behind `f1` and `f2`, with `kappa = 1 + conj(L)`
/// and `c = 2 xi omega_r`:
///
/// `f1(x1, x2, x3) = x1 Re(C_R kappa jw) + x2 Re(C_R kappa) + x3 Re(L kappa C_s)`
///
/// `f2(x1, x2, x3) = x1 Re(C_R kappa (jw + c)) + x3 Re(L kappa C_s (jw + c))
///                 + x2 (Re(C_R kappa ((jw)^2 + c jw)) - |kappa|^2)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FBasis<T> {
    pub omega: T,
    pub r: [T; 6],
    /// Magnitude of each term before taking the real part.
    pub m: [T; 6],
}

impl<T: Real> FBasis<T> {
    pub fn new(s: &LoopSample<T>, omega_r: T, xi: T) -> Self {
        let one = Complex::new(T::one(), T::zero());
        let kappa = one + s.l.conj();
        let jw = Complex::new(T::zero(), s.omega);
        let shift = jw + Complex::new(T::c(2.0) * xi * omega_r, T::zero());
        let ck = s.c_r * kappa;
        let lk = s.l * kappa * s.c_s;
        let k2 = kappa.norm_sqr();
        let v = [ck * jw, ck, lk, ck * shift, lk * shift, ck * jw * shift];
        FBasis {
            omega: s.omega,
            r: [v[0].re, v[1].re, v[2].re, v[3].re, v[4].re, v[5].re - k2],
            m: [cabs(v[0]), cabs(v[1]), cabs(v[2]), cabs(v[3]), cabs(v[4]), cabs(v[5]) + k2],
        }
    }

    pub fn f1(&self, x1: T, x2: T, x3: T) -> T {
        x1 * self.r[0] + x2 * self.r[1] + x3 * self.r[2]
    }

    pub fn f2(&self, x1: T, x2: T, x3: T) -> T {
        x1 * self.r[3] + x3 * self.r[4] + x2 * self.r[5]
    }

    pub fn f1_bound(&self, x1: T, x2: T, x3: T) -> T {
        x1.abs() * self.m[0] + x2.abs() * self.m[1] + x3.abs() * self.m[2]
    }

    pub fn f2_bound(&self, x1: T, x2: T, x3: T) -> T {
        x1.abs() * self.m[3] + x3.abs() * self.m[4] + x2.abs() * self.m[5]
    }
}

/// `f1` at one frequency.
pub fn f1<T: Real>(x1: T, x2: T, x3: T, s: &LoopSample<T>, omega_r: T, xi: T) -> T {
    FBasis::new(s, omega_r, xi).f1(x1, x2, x3)
}

/// `f2` at one frequency.
pub fn f2<T: Real>(x1: T, x2: T, x3: T, s: &LoopSample<T>, omega_r: T, xi: T) -> T {
    FBasis::new(s, omega_r, xi).f2(x1, x2, x3)
}

/// `(g1 g2 - 1)^2 / ((g1^2 - 1)(g2^2 - 1))`
pub fn gamma_factor<T: Real>(g1: T, g2: T) -> Result<T> {
    for g in [g1, g2] {
        if !(g.abs() < T::one()) {
            return Err(Error::Domain(format!("|gamma| must be below 1, got {g}")));
        }
    }
    let one = T::one();
    let p = g1 * g2 - one;
    Ok(p * p / ((g1 * g1 - one) * (g2 * g2 - one)))
}

/// Interval of admissible magnitudes `|Q|` along a fixed direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prop1Bounds<T> {
    /// Lower bound; `-inf` when no point constrains it.
    pub eta1: T,
    /// Upper bound; `+inf` when no point constrains it.
    pub eta2: T,
    pub feasible: bool,
}

/// Magnitude interval for `|Q| (u . F) > F3` at every sample, with
/// `u = sign (1, ratio) / sqrt(1 + ratio^2)` and `F = (F1, F2)`.
pub fn prop1_bounds<T: Real>(f1: &[T], f2: &[T], f3: &[T], ratio: T, sign: T) -> Result<Prop1Bounds<T>> {
    if f1.len() != f2.len() || f1.len() != f3.len() {
        return Err(Error::DimensionMismatch("F1, F2 and F3 must have equal length".into()));
    }
    let norm = (T::one() + ratio * ratio).sqrt();
    let (u1, u2) = (sign.signum() / norm, sign.signum() * ratio / norm);
    let inf = T::max_value().unwrap();
    let mut eta1 = -inf;
    let mut eta2 = inf;
    for i in 0..f1.len() {
        let d = u1 * f1[i] + u2 * f2[i];
        if f3[i] >= T::zero() {
            eta1 = if d > T::zero() { eta1.max(f3[i] / d) } else { inf };
        } else if d < T::zero() {
            eta2 = eta2.min(f3[i] / d);
        }
    }
    Ok(Prop1Bounds {
        eta1,
        eta2,
        feasible: eta1 < eta2 && eta2 > T::zero(),
    })
}

fn is_finite<T: Real>(x: T) -> bool {
    x.abs() < T::max_value().unwrap()
}

/// Normalized slack of `a > b`; the inequality holds strictly when this
/// exceeds the margin.
fn slack<T: Real>(a: T, b: T) -> f64 {
    let scale = (a.abs() + b.abs()).f64();
    let v = if scale > 0.0 { (a - b).f64() / scale } else { 0.0 };
    if v.is_nan() {
        -1.0
    } else {
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GsoreType {
    #[serde(rename = "III")]
    III,
    #[serde(rename = "IV")]
    IV,
    #[serde(rename = "V")]
    V,
}

#[derive(Clone, Debug)]
pub struct GsoreProblem<T: Real> {
    pub omega_r: T,
    pub xi: T,
    pub gamma1: T,
    pub gamma2: T,
    pub k_s0: T,
    pub k_n: T,
    /// Samples on `omega > 0`.
    pub samples: Vec<LoopSample<T>>,
    /// Loop at `omega = 0`, when it is finite.
    pub zero_sample: Option<LoopSample<T>>,
    pub origin_pole: bool,
    pub n_minus_m: isize,
    /// Loop behind the samples. Enables local refinement, the rank test and
    /// the direct re-check of the reconstructed candidate.
    pub model: Option<ResetLoop<T>>,
}

impl<T: Real> GsoreProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        omega_r: T,
        xi: T,
        gamma1: T,
        gamma2: T,
        k_s0: T,
        k_n: T,
        samples: Vec<LoopSample<T>>,
        origin_pole: bool,
        n_minus_m: isize,
    ) -> Result<Self> {
        gamma_factor(gamma1, gamma2)?;
        if !(omega_r > T::zero()) || !(xi > T::zero()) {
            return Err(Error::Domain(format!("omega_r and xi must be positive, got {omega_r}, {xi}")));
        }
        Ok(GsoreProblem {
            omega_r,
            xi,
            gamma1,
            gamma2,
            k_s0,
            k_n,
            samples,
            zero_sample: None,
            origin_pole,
            n_minus_m,
            model: None,
        })
    }

    /// Problem data for a GSORE loop with diagonal `A_rho`. The grid spans
    /// the loop's band and reaches down to `1e-4 omega_r`.
    pub fn from_loop(sys: &ResetLoop<T>, grid_points: usize) -> Result<Self> {
        let e = &sys.element;
        if e.kind != ElementKind::Gsore {
            return Err(Error::Config("GSORE certification needs a GSORE element".into()));
        }
        if e.a_rho[(0, 1)] != T::zero() || e.a_rho[(1, 0)] != T::zero() {
            return Err(Error::Config("GSORE certification needs a diagonal A_rho".into()));
        }
        let (lo, hi) = sys
            .asymptotic_loops()?
            .ok_or_else(|| Error::Config("a measured plant needs declared asymptotic slopes".into()))?;
        let origin_pole = sys.origin_pole()?.unwrap_or(false);
        let hi_cs = hi.series(&sys.c_s);
        let (k_n, k_s0) = leading_coefficients(&hi_cs, &sys.c_s)?;
        let grid = sys.default_grid(grid_points)?;
        let floor = e.omega_r * T::c(1e-4);
        let grid = if grid[0] > floor {
            crate::frf::log_space(floor, grid[grid.len() - 1], grid_points)
        } else {
            grid
        };
        let samples = sys.samples(&grid)?;
        let zero_sample = if lo.origin_poles() == 0 {
            let z = T::zero();
            Some(LoopSample {
                omega: z,
                l: lo.eval(z)?,
                c_s: sys.c_s.eval(z)?,
                c_r: e.base_tf().eval(z)?,
            })
        } else {
            None
        };
        let mut p = GsoreProblem::new(
            e.omega_r,
            e.xi,
            e.a_rho[(0, 0)],
            e.a_rho[(1, 1)],
            k_s0,
            k_n,
            samples,
            origin_pole,
            hi_cs.relative_degree(),
        )?;
        p.zero_sample = zero_sample;
        p.model = Some(sys.clone());
        Ok(p)
    }

    pub fn gsore_type(&self) -> Result<GsoreType> {
        if self.n_minus_m < 3 {
            return Err(Error::Domain(format!(
                "relative degree of L C_s must be at least 3, got {}",
                self.n_minus_m
            )));
        }
        Ok(if self.origin_pole {
            GsoreType::III
        } else if self.n_minus_m > 3 {
            GsoreType::IV
        } else {
            GsoreType::V
        })
    }

    pub fn gamma(&self) -> Result<T> {
        gamma_factor(self.gamma1, self.gamma2)
    }

    fn sigma(&self) -> T {
        if self.k_s0 < T::zero() {
            -T::one()
        } else {
            T::one()
        }
    }

    /// `(beta, rho)` from `Q`.
    pub fn reconstruct(&self, ty: GsoreType, q: [T; 4]) -> GsoreCandidate<T> {
        let [q1, q2, q3, q4] = q;
        match ty {
            GsoreType::III => {
                let s = self.sigma();
                GsoreCandidate {
                    beta1: s,
                    beta2: s * q2 / q4,
                    rho1: s * q1,
                    rho2: s * q2,
                    rho3: s * q2 * q3 / q4,
                }
            }
            GsoreType::IV | GsoreType::V => {
                let rho3 = q2 / q4;
                GsoreCandidate {
                    beta1: q1,
                    beta2: q3 * rho3,
                    rho1: T::one(),
                    rho2: q2,
                    rho3,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub id: String,
    pub satisfied: bool,
    /// Normalized slack of the tightest inequality in the group.
    pub margin: f64,
    /// Frequency of the tightest point, for constraints over `omega`.
    pub worst_omega: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateResult<T> {
    pub gsore_type: GsoreType,
    pub q: [T; 4],
    /// Supremum of `G1` (Type III) or `G2` (Type IV/V); infinite when no
    /// feasible point was found.
    pub m_value: T,
    pub certified: bool,
    /// Every condition except the rank test holds, and no rational model
    /// was available to run it.
    pub conditional_on_rank: bool,
    pub rank_condition: Option<bool>,
    pub constraint_report: Vec<ConstraintReport>,
    pub reconstructed: GsoreCandidate<T>,
    pub matrix_check: Option<MatrixReport>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings {
    pub population: usize,
    pub generations: usize,
    pub restarts: usize,
    /// A restart ends after this many generations without improvement.
    pub stall_generations: usize,
    /// Grid size used inside the search; the final check uses every sample.
    pub search_points: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            population: 200,
            generations: 500,
            restarts: 8,
            stall_generations: 50,
            search_points: 400,
            seed: 0,
        }
    }
}

/// `M < 4` is accepted when `M <= 4 - M_TOL`.
pub const M_TOL: f64 = 1e-6;
const INFEASIBLE: f64 = 1e12;

/// Interval `{x : a_i + x b_i > 0 for all i}`, open, possibly unbounded.
fn axis_interval<T: Real>(a: &[T], b: &[T]) -> Option<(T, T)> {
    let inf = T::max_value().unwrap();
    let (mut lo, mut hi) = (-inf, inf);
    for (&a, &b) in a.iter().zip(b) {
        if b > T::zero() {
            lo = lo.max(-a / b);
        } else if b < T::zero() {
            hi = hi.min(-a / b);
        } else if !(a > T::zero()) {
            return None;
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Positive magnitude range inside `(eta1, eta2)`, with unbounded ends cut
/// six decades from `scale`.
fn magnitude_range<T: Real>(b: &Prop1Bounds<T>, scale: T) -> Option<(T, T)> {
    let wide = T::c(1e6);
    let lo0 = b.eta1.max(T::zero());
    let hi = if is_finite(b.eta2) { b.eta2 } else { lo0.max(scale) * wide };
    let lo = if lo0 > T::zero() { lo0 } else { hi.min(scale) / wide };
    (lo < hi).then_some((lo, hi))
}

fn log_pick<T: Real>(lo: T, hi: T, g: f64) -> T {
    let g = T::c(g.clamp(1e-9, 1.0 - 1e-9));
    (lo.ln() + g * (hi.ln() - lo.ln())).exp()
}

fn lin_pick<T: Real>(lo: T, hi: T, g: f64) -> T {
    let g = T::c(g.clamp(1e-9, 1.0 - 1e-9));
    lo + g * (hi - lo)
}

/// Bounded copy of an axis interval for sampling.
fn bounded<T: Real>((lo, hi): (T, T)) -> (T, T) {
    let mut w = T::one();
    for x in [lo, hi] {
        if is_finite(x) {
            w = w.max(x.abs());
        }
    }
    let w = w * T::c(10.0);
    let lo2 = if is_finite(lo) { lo } else { hi.min(T::zero()) - w };
    let hi2 = if is_finite(hi) { hi } else { lo.max(T::zero()) + w };
    (lo2, hi2)
}

/// Evaluation of one candidate over a set of frequency bases.
struct GridEval {
    s1: (f64, Option<f64>),
    s2: (f64, Option<f64>),
    /// Supremum of `4 m12^2 / (m11 m22)` and where it occurs.
    m: f64,
    m_index: Option<usize>,
}

fn grid_eval<T: Real>(cand: &GsoreCandidate<T>, bases: &[FBasis<T>]) -> GridEval {
    let e = T::c(MARGIN_REL);
    let mut out = GridEval {
        s1: (f64::INFINITY, None),
        s2: (f64::INFINITY, None),
        m: f64::NEG_INFINITY,
        m_index: None,
    };
    let mut diag_ok = true;
    for (i, f) in bases.iter().enumerate() {
        let (m, b) = cand.matrix_terms(f);
        let w = Some(f.omega.f64());
        let n1 = if b[0] > T::zero() { (m[0] / b[0]).f64() } else { 0.0 };
        let n2 = if b[2] > T::zero() { (m[2] / b[2]).f64() } else { 0.0 };
        if n1 < out.s1.0 {
            out.s1 = (n1, w);
        }
        if n2 < out.s2.0 {
            out.s2 = (n2, w);
        }
        if m[0] > e * b[0] && m[2] > e * b[2] {
            let g = (T::c(4.0) * m[1] * m[1] / (m[0] * m[2])).f64();
            if g > out.m {
                out.m = g;
                out.m_index = Some(i);
            }
        } else {
            diag_ok = false;
        }
    }
    if !diag_ok || out.m_index.is_none() {
        out.m = f64::INFINITY;
    }
    out
}

struct Certifier<'a, T: Real> {
    p: &'a GsoreProblem<T>,
    ty: GsoreType,
    gamma: T,
    /// Search grid, including `omega = 0` for Type IV/V when available.
    coarse: Vec<FBasis<T>>,
    dense: Vec<FBasis<T>>,
}

impl<'a, T: Real> Certifier<'a, T> {
    fn new(p: &'a GsoreProblem<T>, search_points: usize) -> Result<Self> {
        let ty = p.gsore_type()?;
        let basis = |s: &LoopSample<T>| FBasis::new(s, p.omega_r, p.xi);
        let mut dense: Vec<FBasis<T>> = Vec::with_capacity(p.samples.len() + 1);
        if ty != GsoreType::III {
            if let Some(z) = &p.zero_sample {
                dense.push(basis(z));
            }
        }
        dense.extend(p.samples.iter().filter(|s| s.omega > T::zero()).map(basis));
        let step = dense.len().div_ceil(search_points.max(2)).max(1);
        let mut coarse: Vec<FBasis<T>> = dense.iter().step_by(step).copied().collect();
        if let Some(last) = dense.last() {
            if coarse.last() != Some(last) {
                coarse.push(*last);
            }
        }
        Ok(Certifier {
            p,
            ty,
            gamma: p.gamma()?,
            coarse,
            dense,
        })
    }

    fn c(&self) -> T {
        T::c(2.0) * self.p.xi * self.p.omega_r
    }

    fn k_high(&self) -> T {
        if self.p.n_minus_m == 3 {
            self.p.k_n
        } else {
            T::zero()
        }
    }

    /// `(lower, upper)` slack of the `rho3` window from the `omega -> inf`
    /// limit, and the two diagonal terms.
    fn high_limit(&self, c: &GsoreCandidate<T>) -> (f64, f64, T, T) {
        let (w2, cc, k) = (self.p.omega_r * self.p.omega_r, self.c(), self.k_high());
        let d1 = cc * c.rho1 - c.rho2;
        let d2 = w2 * c.rho2 - k * c.beta2;
        let center = w2 * c.rho1 + cc * c.rho2 - k * c.beta1;
        if d1 < T::zero() || d2 < T::zero() {
            return (-1.0, -1.0, d1, d2);
        }
        let rad = T::c(2.0) * (d1 * d2).sqrt();
        (slack(c.rho3, center - rad), slack(center + rad, c.rho3), d1, d2)
    }

    /// `(lower, upper)` slack of the `rho1` window from the `omega -> 0`
    /// limit with an origin pole.
    fn low_limit(&self, c: &GsoreCandidate<T>) -> (f64, f64) {
        let (k, cc) = (self.p.k_s0, self.c());
        let e1 = k * c.beta1;
        let e2 = k * c.beta2 * cc - c.rho2;
        if e1 < T::zero() || e2 < T::zero() {
            return (-1.0, -1.0);
        }
        let center = k * (c.beta1 * cc + c.beta2);
        let rad = T::c(2.0) * (e1 * e2).sqrt();
        (slack(c.rho1, center - rad), slack(center + rad, c.rho1))
    }

    /// Constraints that do not depend on the grid, in definition order
    /// after `S1`, `S2`.
    fn closed_form(&self, q: [T; 4], c: &GsoreCandidate<T>) -> Vec<(&'static str, f64)> {
        let [q1, q2, q3, q4] = q;
        let (cc, g, z) = (self.c(), self.gamma, T::zero());
        let w2 = self.p.omega_r * self.p.omega_r;
        let (h_lo, h_hi, d1, d2) = self.high_limit(c);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        match self.ty {
            GsoreType::III => {
                let k = self.p.k_s0;
                let (l_lo, l_hi) = self.low_limit(c);
                let s7 = [
                    slack(k * q1, z),
                    slack(k * q2, z),
                    slack(k * q3, z),
                    slack(k * q4, z),
                    slack(cc, q4 / k),
                    slack(cc, q2 / q1),
                    slack(d2, z),
                    slack(q1 * q3, g * q2 * q4),
                ];
                vec![("S3", l_hi), ("S4", l_lo), ("S5", h_hi), ("S6", h_lo), ("S7", min(&s7))]
            }
            GsoreType::IV => {
                let s5 = [slack(q4, z), slack(q2, z), slack(cc, q2), slack(T::one(), g * q2 * q4)];
                vec![("S3", h_hi), ("S4", h_lo), ("S5", min(&s5))]
            }
            GsoreType::V => {
                let (a, b) = (slack(d1, z), slack(d2, z));
                let r = if (a > 0.0) == (b > 0.0) { a.abs().min(b.abs()) } else { -a.abs().min(b.abs()) };
                let s6 = [
                    slack(cc, q2),
                    slack(w2 * q4, self.p.k_n * q3),
                    slack(q2 * q4, z),
                    slack(T::one(), g * q2 * q4),
                ];
                vec![("S3", h_hi), ("S4", h_lo), ("S5", r), ("S6", min(&s6))]
            }
        }
    }

    fn score(&self, q: [T; 4]) -> f64 {
        let c = self.p.reconstruct(self.ty, q);
        if !q.iter().all(|x| is_finite(*x)) || !c.is_positive_definite() {
            return INFEASIBLE * 10.0;
        }
        let mut penalty = 0.0;
        for (_, m) in self.closed_form(q, &c) {
            if !(m > MARGIN_REL) {
                penalty += 1.0 + (-m).max(0.0);
            }
        }
        let g = grid_eval(&c, &self.coarse);
        for m in [g.s1.0, g.s2.0] {
            if !(m > MARGIN_REL) {
                penalty += 1.0 + (-m).max(0.0).min(1.0);
            }
        }
        if penalty > 0.0 {
            INFEASIBLE + penalty
        } else {
            g.m
        }
    }

    /// Maps genes in `[0, 1]^4` to `Q`, drawing the `S1`/`S2` magnitudes
    /// from their admissible intervals.
    fn decode(&self, g: &[f64; 4]) -> Option<[T; 4]> {
        match self.ty {
            GsoreType::III => self.decode_origin(g),
            _ => self.decode_finite(g),
        }
    }

    fn decode_origin(&self, g: &[f64; 4]) -> Option<[T; 4]> {
        let (cc, s, k) = (self.c(), self.p.sigma(), self.p.k_s0);
        if k == T::zero() {
            return None;
        }
        let scale = k.abs() * (cc + T::one());
        let col = |i: usize| -> Vec<T> { self.coarse.iter().map(|f| f.r[i]).collect() };
        let neg = |v: Vec<T>| -> Vec<T> { v.into_iter().map(|x| -(s * x)).collect() };

        let a = log_pick(cc * T::c(1e-6), cc, g[0]);
        let b1 = prop1_bounds(&col(0), &col(1), &neg(col(2)), a, T::one()).ok()?;
        if !b1.feasible {
            return None;
        }
        let (lo, hi) = magnitude_range(&b1, scale)?;
        let t = log_pick(lo, hi, g[1]);
        let q1 = s * t / (T::one() + a * a).sqrt();
        let q2 = a * q1;

        let b_lo = self.gamma * a * T::c(1.0 + 1e-9);
        let b = log_pick(b_lo, b_lo.max(self.p.omega_r) * T::c(1e4), g[2]);
        let nb = (T::one() + b * b).sqrt();
        let mut b2 = prop1_bounds(&col(5), &col(3), &neg(col(4)), b, T::one()).ok()?;
        b2.eta2 = b2.eta2.min(cc * nb * k.abs());
        if !(b2.eta1 < b2.eta2) {
            return None;
        }
        let (lo, hi) = magnitude_range(&b2, scale)?;
        let t = log_pick(lo, hi, g[3]);
        let q4 = s * t / nb;
        Some([q1, q2, b * q4, q4])
    }

    fn decode_finite(&self, g: &[f64; 4]) -> Option<[T; 4]> {
        let (cc, w2) = (self.c(), self.p.omega_r * self.p.omega_r);
        let q2 = log_pick(cc * T::c(1e-8), cc, g[0]);
        let a: Vec<T> = self.coarse.iter().map(|f| f.r[0] + q2 * f.r[1]).collect();
        let b: Vec<T> = self.coarse.iter().map(|f| f.r[2]).collect();
        let (lo, hi) = bounded(axis_interval(&a, &b)?);
        let q1 = lin_pick(lo, hi, g[1]);

        let d1 = cc - q2;
        let center = w2 + cc * q2 - self.k_high() * q1;
        let rad = T::c(2.0) * (d1 * w2 * q2).sqrt();
        let lo3 = (center - rad).max(self.gamma * q2 * q2);
        let hi3 = center + rad;
        let (lo3, hi3) = if self.ty == GsoreType::V {
            (self.gamma * q2 * q2, hi3.max(lo3) * T::c(10.0))
        } else {
            (lo3, hi3)
        };
        if !(lo3 > T::zero() && lo3 < hi3) {
            return None;
        }
        let rho3 = log_pick(lo3, hi3, g[2]);
        let q4 = q2 / rho3;
        let a: Vec<T> = self.coarse.iter().map(|f| f.r[3] + q4 * f.r[5]).collect();
        let b: Vec<T> = self.coarse.iter().map(|f| f.r[4]).collect();
        let (lo, hi) = bounded(axis_interval(&a, &b)?);
        Some([q1, q2, lin_pick(lo, hi, g[3]), q4])
    }

    fn fitness(&self, g: &[f64; 4]) -> f64 {
        match self.decode(g) {
            Some(q) => self.score(q),
            None => INFEASIBLE * 10.0,
        }
    }

    /// Best genome of each restart, best first.
    fn search(&self, s: &OptimizerSettings) -> Vec<([f64; 4], f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let n = s.population.max(4);
        let mut winners = Vec::with_capacity(s.restarts);
        for _ in 0..s.restarts.max(1) {
            let mut pop: Vec<[f64; 4]> = (0..n).map(|_| rng.gen()).collect();
            let mut fit: Vec<f64> = pop.par_iter().map(|g| self.fitness(g)).collect();
            let mut best = argmin(&fit);
            let mut best_val = (pop[best], fit[best]);
            let mut stall = 0;
            for _ in 0..s.generations {
                let mut next = Vec::with_capacity(n);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
                next.extend(order.iter().take(2).map(|&i| pop[i]));
                while next.len() < n {
                    let a = tournament(&fit, &mut rng);
                    let b = tournament(&fit, &mut rng);
                    let mut child = pop[a];
                    for i in 0..4 {
                        if rng.gen_bool(0.9) {
                            let u: f64 = rng.gen_range(-0.25..1.25);
                            child[i] = pop[a][i] + u * (pop[b][i] - pop[a][i]);
                        }
                        if rng.gen_bool(0.25) {
                            child[i] += rng.gen_range(-0.1..0.1);
                        }
                        child[i] = child[i].clamp(0.0, 1.0);
                    }
                    next.push(child);
                }
                pop = next;
                fit = pop.par_iter().map(|g| self.fitness(g)).collect();
                best = argmin(&fit);
                if fit[best] < best_val.1 * (1.0 - 1e-9) {
                    best_val = (pop[best], fit[best]);
                    stall = 0;
                } else {
                    stall += 1;
                    if stall >= s.stall_generations {
                        break;
                    }
                }
            }
            winners.push(best_val);
        }
        winners.sort_by(|a, b| a.1.total_cmp(&b.1));
        winners
    }

    /// `4 m12^2 / (m11 m22)` at one frequency of the model.
    fn g_at(&self, c: &GsoreCandidate<T>, omega: T) -> Option<f64> {
        let model = self.p.model.as_ref()?;
        let s = model.samples(&[omega]).ok()?;
        let (m, _) = c.matrix_terms(&FBasis::new(&s[0], self.p.omega_r, self.p.xi));
        if m[0] > T::zero() && m[2] > T::zero() {
            Some((T::c(4.0) * m[1] * m[1] / (m[0] * m[2])).f64())
        } else {
            Some(f64::INFINITY)
        }
    }

    /// Golden-section maximization in `log omega` between the neighbors of
    /// the grid maximum.
    fn refine_sup(&self, c: &GsoreCandidate<T>, i: usize, grid_max: f64) -> f64 {
        let d = &self.dense;
        if self.p.model.is_none() || d.len() < 3 {
            return grid_max;
        }
        let lo = d[i.saturating_sub(1)].omega;
        let hi = d[(i + 1).min(d.len() - 1)].omega;
        if !(lo > T::zero()) {
            return grid_max;
        }
        let (mut a, mut b) = (lo.f64().ln(), hi.f64().ln());
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let f = |x: f64| self.g_at(c, T::c(x.exp())).unwrap_or(grid_max);
        let mut x1 = b - r * (b - a);
        let mut x2 = a + r * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        let mut best = grid_max.max(f1).max(f2);
        for _ in 0..60 {
            if f1 > f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - r * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + r * (b - a);
                f2 = f(x2);
            }
            let prev = best;
            best = best.max(f1).max(f2);
            if (b - a).abs() < 1e-12 || (best - prev).abs() <= 1e-6 * best.abs() && (b - a) < 1e-6 {
                break;
            }
        }
        best
    }

    fn report(&self, q: [T; 4]) -> Result<CertificateResult<T>> {
        let c = self.p.reconstruct(self.ty, q);
        let g = grid_eval(&c, &self.dense);
        let mut constraints = vec![
            ConstraintReport {
                id: "S1".into(),
                satisfied: g.s1.0 > MARGIN_REL,
                margin: g.s1.0,
                worst_omega: g.s1.1,
            },
            ConstraintReport {
                id: "S2".into(),
                satisfied: g.s2.0 > MARGIN_REL,
                margin: g.s2.0,
                worst_omega: g.s2.1,
            },
        ];
        constraints.extend(self.closed_form(q, &c).into_iter().map(|(id, m)| ConstraintReport {
            id: id.into(),
            satisfied: m > MARGIN_REL,
            margin: m,
            worst_omega: None,
        }));
        let m_value = match g.m_index {
            Some(i) if g.m.is_finite() => self.refine_sup(&c, i, g.m),
            _ => f64::INFINITY,
        };
        let constraints_ok = constraints.iter().all(|r| r.satisfied);
        let pd = c.is_positive_definite();
        let matrix_check = match (&self.p.model, pd) {
            (Some(model), true) => {
                let ctx = MatrixContext::from_loop(model)?;
                Some(spr_check_matrix(&c, &self.p.samples, &ctx)?)
            }
            _ => None,
        };
        let rank = if pd { rank_check(self.p, &c) } else { Some(false) };
        let core = constraints_ok && pd && m_value <= 4.0 - M_TOL && matrix_check.as_ref().is_none_or(|r| r.passed);
        Ok(CertificateResult {
            gsore_type: self.ty,
            q,
            m_value: T::c(m_value),
            certified: core && rank == Some(true),
            conditional_on_rank: core && rank.is_none(),
            rank_condition: rank,
            constraint_report: constraints,
            reconstructed: c,
            matrix_check,
        })
    }
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0)
}

fn tournament(fit: &[f64], rng: &mut ChaCha8Rng) -> usize {
    (0..3)
        .map(|_| rng.gen_range(0..fit.len()))
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]))
        .expect("three draws")
}

fn rank_check<T: Real>(p: &GsoreProblem<T>, c: &GsoreCandidate<T>) -> Option<bool> {
    let cl = p.model.as_ref()?.closed_loop().ok()?;
    let c0 = c0_matrix(&cl, &c.to_hbeta().ok()?);
    let n = cl.order();
    let b0 = DMatrix::from_fn(n, 2, |i, j| if i == j { T::one() } else { T::zero() });
    let r = ctrb_obsv_rank(&cl.a_bar, &b0, &c0);
    Some(r.controllable && r.observable)
}

/// Controllability of `(A, B_0)` and observability of `(A, C_0)` for the
/// candidate built from `q`. `None` without a rational closed loop.
pub fn rank_condition<T: Real>(problem: &GsoreProblem<T>, q: [T; 4]) -> Result<Option<bool>> {
    let c = problem.reconstruct(problem.gsore_type()?, q);
    Ok(rank_check(problem, &c))
}

/// Constraint report and `M` for a given `Q`, without searching.
pub fn evaluate<T: Real>(problem: &GsoreProblem<T>, q: [T; 4]) -> Result<CertificateResult<T>> {
    check_resolution(&problem.samples)?;
    Certifier::new(problem, usize::MAX)?.report(q)
}

/// Searches `Q` minimizing `M` under the type's constraints and checks the
/// best points on the full grid, in order, until one certifies.
pub fn certify<T: Real>(problem: &GsoreProblem<T>, settings: &OptimizerSettings) -> Result<CertificateResult<T>> {
    check_resolution(&problem.samples)?;
    let cert = Certifier::new(problem, settings.search_points)?;
    let mut first = None;
    for (genes, fit) in cert.search(settings) {
        let Some(q) = cert.decode(&genes) else { continue };
        if fit >= INFEASIBLE && first.is_some() {
            break;
        }
        let r = cert.report(q)?;
        if r.certified {
            return Ok(r);
        }
        first.get_or_insert(r);
    }
    match first {
        Some(r) => Ok(r),
        None => {
            let nan = T::c(f64::NAN);
            let q = [nan; 4];
            Ok(CertificateResult {
                gsore_type: cert.ty,
                q,
                m_value: T::c(f64::INFINITY),
                certified: false,
                conditional_on_rank: false,
                rank_condition: None,
                constraint_report: Vec::new(),
                reconstructed: problem.reconstruct(cert.ty, q),
                matrix_check: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::ResetElement;
    use crate::frf::Plant;
    use crate::lti::RationalTf;
    use rand::Rng;

    fn sample(omega: f64, l: Complex<f64>, c_r: Complex<f64>) -> LoopSample<f64> {
        LoopSample {
            omega,
            l,
            c_s: Complex::new(1.0, 0.0),
            c_r,
        }
    }

    #[test]
    fn f_function_examples() {
        let s = sample(1.0, Complex::new(0.5, -0.5), Complex::new(0.3, 0.1));
        assert_eq!(f1(0.0, 0.0, 0.0, &s, 1.0, 1.0), 0.0);
        assert_eq!(f2(0.0, 0.0, 0.0, &s, 1.0, 1.0), 0.0);
        assert!((f1(0.0, 0.0, 1.0, &s, 1.0, 1.0) - 1.0).abs() < 1e-15);

        let c_r = RationalTf::from_f64(&[1.0], &[1.0, 2.0, 1.0]).unwrap().eval(1.0).unwrap();
        let s = sample(1.0, c_r, c_r);
        let kappa = Complex::new(1.0, 0.0) + c_r.conj();
        let want = (c_r * kappa * Complex::new(0.0, 1.0)).re;
        assert!((f1(1.0, 0.0, 0.0, &s, 1.0, 1.0) - want).abs() < 1e-15);
        let want = (c_r * kappa * Complex::new(2.0, 1.0)).re;
        assert!((f2(1.0, 0.0, 0.0, &s, 1.0, 1.0) - want).abs() < 1e-15);
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_factor(0.5f64, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gamma_factor(0.0, 0.0).unwrap(), 1.0);
        assert!((gamma_factor(0.5f64, -0.5).unwrap() - 25.0 / 9.0).abs() < 1e-12);
        assert!(matches!(gamma_factor(1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(gamma_factor(0.2, -1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn prop1_cases() {
        // F3 <= 0 everywhere and u . F < 0 nowhere binding: no upper bound
        let r = prop1_bounds(&[1.0, 2.0], &[0.5, 1.0], &[-1.0, -0.5], 1.0, 1.0).unwrap();
        assert_eq!(r.eta2, f64::MAX);
        assert!(r.feasible);
        // F3 >= 0 everywhere, no negative set
        let r = prop1_bounds::<f64>(&[1.0, 2.0], &[1.0, 0.0], &[1.0, 3.0], 1.0, 1.0).unwrap();
        assert!(r.eta1.is_finite() && r.eta1 > 0.0);
        assert_eq!(r.eta2, f64::MAX);
        assert!(r.feasible);
        // F3 >= 0 where the direction points away
        let r = prop1_bounds(&[-1.0], &[0.0], &[1.0], 0.0, 1.0).unwrap();
        assert!(!r.feasible);
        assert!(prop1_bounds(&[1.0], &[1.0, 2.0], &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn prop1_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let f1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f3: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.2)).collect();
        for i in 0..60 {
            for j in 0..60 {
                let q1 = -3.0 + 6.0 * (i as f64 + 0.5) / 60.0;
                let q2 = -3.0 + 6.0 * (j as f64 + 0.5) / 60.0;
                let direct = (0..n).all(|k| q1 * f1[k] + q2 * f2[k] > f3[k]);
                let b = prop1_bounds(&f1, &f2, &f3, q2 / q1, q1.signum()).unwrap();
                let mag = q1.hypot(q2);
                assert_eq!(direct, b.eta1 < mag && mag < b.eta2, "cell ({q1}, {q2})");
            }
        }
    }

    fn cglp_loop() -> ResetLoop<f64> {
        let g = RationalTf::from_f64(&[1.0], &[0.0, 0.5, 1.0])
            .unwrap()
            .series(&RationalTf::from_f64(&[1.0], &[9.0, 3.0, 1.0]).unwrap());
        let plant = Plant::Rational(g);
        let t = crate::template::CglpPid {
            k_p: 1.0,
            omega_c: 1.0,
            omega_d: 3.0,
            xi_d: 0.7,
            omega_r: 3.0,
            xi: 1.0,
            gamma1: 0.5,
            gamma2: 0.5,
        };
        t.with_unity_crossover(&plant).unwrap().reset_loop(plant).unwrap()
    }

    #[test]
    fn problem_validation() {
        let s = vec![sample(1.0, Complex::new(0.5, -0.5), Complex::new(0.3, 0.1))];
        assert!(matches!(
            GsoreProblem::new(1.0, 1.0, 1.0, 0.5, 1.0, 1.0, s.clone(), true, 4),
            Err(Error::Domain(_))
        ));
        assert!(GsoreProblem::new(-1.0, 1.0, 0.5, 0.5, 1.0, 1.0, s.clone(), true, 4).is_err());
        let p = GsoreProblem::new(1.0, 1.0, 0.5, 0.5, 1.0, 1.0, s.clone(), false, 3).unwrap();
        assert_eq!(p.gsore_type().unwrap(), GsoreType::V);
        let p = GsoreProblem::new(1.0, 1.0, 0.5, 0.5, 1.0, 1.0, s, false, 2).unwrap();
        assert!(p.gsore_type().is_err());
    }

    #[test]
    fn reconstruction_inverts_substitutions() {
        let s = vec![sample(1.0, Complex::new(0.5, -0.5), Complex::new(0.3, 0.1))];
        let p = GsoreProblem::new(1.0, 1.0, 0.5, 0.5, -2.0, 1.0, s, true, 4).unwrap();
        let q = [-13.0, -12.0, -8.0, -1.5];
        let c = p.reconstruct(GsoreType::III, q);
        let back = [c.rho1 / c.beta1, c.rho2 / c.beta1, c.rho3 / c.beta2, c.rho2 / c.beta2];
        for i in 0..4 {
            assert!((back[i] - q[i]).abs() < 1e-12 * q[i].abs());
        }
        let q = [0.4, 0.3, -2.0, 0.05];
        let c = p.reconstruct(GsoreType::IV, q);
        assert_eq!((c.rho1, c.rho2, c.beta1), (1.0, 0.3, 0.4));
        assert!((c.rho3 - 6.0).abs() < 1e-12 && (c.beta2 + 12.0).abs() < 1e-12);
    }

    #[test]
    fn wide_range_fixture_shape() {
        // Q and M from a reported stage certificate; only the shape of the
        // result is checked since the loop data is not available.
        let q = [13172.0, 12001144.0, 8113151.0, 1055.0];
        let s = vec![sample(1.0, Complex::new(0.5, -0.5), Complex::new(0.3, 0.1))];
        let w = 800.0 * std::f64::consts::PI;
        let p = GsoreProblem::new(w, 1.0, 0.5, 0.5, 1.0, 1.0, s, true, 4).unwrap();
        let r = evaluate(&p, q);
        let c = p.reconstruct(GsoreType::III, q);
        assert!(c.is_positive_definite());
        assert!(q[1] / q[0] > 340.0 && q[1] / q[0] < 5057.0);
        assert!(q[2] / q[3] > 1132.0);
        assert!(matches!(r, Err(Error::GridTooSparse(_))));
    }

    #[test]
    fn rank_condition_examples() {
        let sys = cglp_loop();
        let p = GsoreProblem::from_loop(&sys, 200).unwrap();
        let q = [17.0, 12.0, 13.5, 1.2];
        assert_eq!(rank_condition(&p, q).unwrap(), Some(true));

        let mut cancel = sys.clone();
        cancel.c_l1 = RationalTf::from_f64(&[2.0, 1.0], &[2.0, 1.0]).unwrap();
        let p = GsoreProblem::from_loop(&cancel, 200).unwrap();
        assert_eq!(rank_condition(&p, q).unwrap(), Some(false));

        let mut bare = GsoreProblem::from_loop(&sys, 200).unwrap();
        bare.model = None;
        assert_eq!(rank_condition(&bare, q).unwrap(), None);
    }

    #[test]
    fn certified_candidate_passes_direct_check() {
        let sys = cglp_loop();
        let p = GsoreProblem::from_loop(&sys, 600).unwrap();
        let s = OptimizerSettings {
            population: 60,
            generations: 60,
            restarts: 1,
            stall_generations: 15,
            search_points: 150,
            seed: 3,
        };
        let r = certify(&p, &s).unwrap();
        assert_eq!(r.gsore_type, GsoreType::III);
        assert!(r.certified, "{r:?}");
        assert!(r.m_value < 4.0);
        assert!(r.constraint_report.iter().all(|c| c.satisfied));
        assert!(r.reconstructed.is_positive_definite());
        let ctx = MatrixContext::from_loop(&sys).unwrap();
        assert!(spr_check_matrix(&r.reconstructed, &p.samples, &ctx).unwrap().passed);

        // any gamma with a smaller factor keeps the gamma inequality
        let [q1, q2, q3, q4] = r.q;
        for g in [-0.9, 0.0, 0.3, 0.9] {
            assert!(q1 * q3 / (q2 * q4) > gamma_factor(g, g).unwrap());
        }
    }

    #[test]
    fn wrong_element_rejected() {
        let sys = ResetLoop::new(
            ResetElement::gfore(1.0, 0.0).unwrap(),
            Plant::Rational(RationalTf::from_f64(&[1.0], &[0.0, 1.0, 1.0]).unwrap()),
        );
        assert!(matches!(GsoreProblem::from_loop(&sys, 100), Err(Error::Config(_))));
    }
}
