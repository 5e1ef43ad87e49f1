//! Nyquist stability vector, Type I/II classification and the first-order
//! stability verdict.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, TAU};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::elements::ElementKind;
use crate::frf::{compose_loop, LoopSample};
use crate::limits::{kappa_projection, limit_direction};
use crate::lti::{base_linear_stability, minimality_check, nyquist_stability, Architecture, Minimality, RationalTf};
use crate::scalar::{cabs, carg};
use crate::system::ResetLoop;
use crate::{Error, Real, Result};

/// Absolute slack on sign and angle conditions.
pub const SLACK: f64 = 1e-9;
/// Largest accepted angle step between adjacent samples.
pub const MAX_GAP: f64 = FRAC_PI_6;
pub const REFINE_LEVELS: usize = 4;
/// `|C_s(j omega)|` below this is treated as a zero of the shaping filter.
pub const SHAPING_ZERO: f64 = 1e-12;
/// `|N|` below this fraction of its term magnitudes is treated as zero.
pub const NSV_ZERO_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NsvVariant {
    #[default]
    Standard,
    /// Shaping filter in series before the reset element.
    Modified,
    /// Second-order element with a single reset state.
    Sosre,
}

impl NsvVariant {
    pub fn for_loop(kind: ElementKind, arch: Architecture) -> Self {
        match (kind, arch) {
            (ElementKind::Sosre, _) => NsvVariant::Sosre,
            (_, Architecture::Modified) => NsvVariant::Modified,
            _ => NsvVariant::Standard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsvSample<T> {
    pub omega: T,
    pub n_chi: T,
    pub n_upsilon: T,
    /// In `[-pi/2, 3pi/2)`.
    pub theta: T,
}

impl<T: Real> NsvSample<T> {
    pub fn new(omega: T, n_chi: T, n_upsilon: T) -> Self {
        NsvSample {
            omega,
            n_chi,
            n_upsilon,
            theta: wrap_theta(n_chi, n_upsilon),
        }
    }

    /// Limit directions are stored with `omega = 0` or `omega = inf`.
    pub fn is_limit(&self) -> bool {
        self.omega == T::zero() || !self.omega.is_finite()
    }
}

/// `atan2(y, x)` moved into `[-pi/2, 3pi/2)`.
pub fn wrap_theta<T: Real>(x: T, y: T) -> T {
    let t = y.atan2(x);
    if t < -T::frac_pi_2() {
        t + T::two_pi()
    } else {
        t
    }
}

pub fn nsv_point<T: Real>(s: &LoopSample<T>, variant: NsvVariant) -> Result<NsvSample<T>> {
    let one = Complex::new(T::one(), T::zero());
    let (a, b) = match variant {
        NsvVariant::Standard => {
            let k = one + s.l.conj();
            (s.l * s.c_s * k, k * s.c_r)
        }
        NsvVariant::Sosre => {
            let k = one + s.l.conj();
            (s.l * s.c_s * k, Complex::new(T::zero(), s.omega) * k * s.c_r)
        }
        NsvVariant::Modified => {
            if cabs(s.c_s) <= T::c(SHAPING_ZERO) {
                return Err(Error::ZeroShapingFilter { omega: s.omega.f64() });
            }
            let lp = s.l * s.c_s;
            let k = one + lp.conj();
            (lp * k / s.c_s, k * s.c_r)
        }
    };
    let (x, y) = (a.re, b.re);
    if x.hypot(y) <= T::c(NSV_ZERO_REL) * (cabs(a) + cabs(b)) {
        return Err(Error::ZeroNsv { omega: s.omega.f64() });
    }
    Ok(NsvSample::new(s.omega, x, y))
}

pub fn compute_nsv<T: Real>(samples: &[LoopSample<T>], variant: NsvVariant) -> Result<Vec<NsvSample<T>>> {
    samples.iter().map(|s| nsv_point(s, variant)).collect()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (b - a).abs() % TAU;
    d.min(TAU - d)
}

fn sign_change<T: Real>(a: T, b: T) -> bool {
    (a > T::zero() && b < T::zero()) || (a < T::zero() && b > T::zero())
}

fn needs_split<T: Real>(a: &NsvSample<T>, b: &NsvSample<T>) -> bool {
    angle_gap(a.theta.f64(), b.theta.f64()) >= MAX_GAP
        || sign_change(a.n_chi, b.n_chi)
        || sign_change(a.n_upsilon, b.n_upsilon)
}

/// Bisects (geometrically) every interval with a large angle step or a sign
/// change of either component, up to `levels` times.
pub fn refine<T: Real>(
    samples: Vec<NsvSample<T>>,
    levels: usize,
    eval: impl Fn(T) -> Result<NsvSample<T>>,
) -> Result<Vec<NsvSample<T>>> {
    let mut cur = samples;
    for _ in 0..levels {
        let mut out = Vec::with_capacity(cur.len() * 2);
        let mut added = false;
        for (k, s) in cur.iter().enumerate() {
            out.push(*s);
            if let Some(n) = cur.get(k + 1) {
                if !s.is_limit() && !n.is_limit() && needs_split(s, n) {
                    out.push(eval((s.omega * n.omega).sqrt())?);
                    added = true;
                }
            }
        }
        cur = out;
        if !added {
            break;
        }
    }
    Ok(cur)
}

/// Fails with `SparseGrid` when adjacent finite samples are `MAX_GAP` or
/// more apart in angle.
pub fn check_coverage<T: Real>(samples: &[NsvSample<T>]) -> Result<()> {
    for w in samples.windows(2) {
        if w[0].is_limit() || w[1].is_limit() {
            continue;
        }
        let gap = angle_gap(w[0].theta.f64(), w[1].theta.f64());
        if gap >= MAX_GAP {
            return Err(Error::SparseGrid {
                omega: w[1].omega.f64(),
                gap,
            });
        }
    }
    Ok(())
}

/// Exact NSV direction as `omega -> 0` (or `inf`) for a rational loop,
/// as a unit-length sample at `omega = 0` (or `inf`).
pub fn limit_sample<T: Real>(
    l: &RationalTf<T>,
    c_s: &RationalTf<T>,
    c_r: &RationalTf<T>,
    variant: NsvVariant,
    at_infinity: bool,
) -> Option<NsvSample<T>> {
    let (ax, kl) = match variant {
        NsvVariant::Modified => (l.clone(), l.series(c_s)),
        _ => (l.series(c_s), l.clone()),
    };
    let nx = kappa_projection(&ax, &kl, false);
    let ny = kappa_projection(c_r, &kl, variant == NsvVariant::Sosre);
    let dir = if at_infinity {
        limit_direction(nx.at_infinity(), ny.at_infinity(), true)
    } else {
        limit_direction(nx.at_zero(), ny.at_zero(), false)
    }?;
    let omega = if at_infinity { T::c(f64::INFINITY) } else { T::zero() };
    Some(NsvSample::new(omega, dir.cos(), dir.sin()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsvType {
    I,
    II,
}

impl NsvType {
    fn tag(self) -> &'static str {
        match self {
            NsvType::I => "type1",
            NsvType::II => "type2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub condition: String,
    /// Witnessing frequency of a failure.
    pub omega: Option<f64>,
    pub ok: bool,
}

impl Diagnostic {
    fn new(condition: String, omega: Option<f64>, ok: bool) -> Self {
        Diagnostic { condition, omega, ok }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeVerdict {
    pub is_type1: bool,
    pub is_type2: bool,
    pub theta1: f64,
    pub theta2: f64,
    pub diagnostics: Vec<Diagnostic>,
}

impl TypeVerdict {
    pub fn first_failure(&self) -> Option<&Diagnostic> {
        self.diagnostics.iter().find(|d| !d.ok)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyContext<T> {
    /// `C_L1 C_L2 G` has a pole at the origin.
    pub origin_pole: bool,
    pub k_s0: T,
    pub kind: ElementKind,
    /// Relative degree of `L C_s`.
    pub n_minus_m: isize,
}

fn theta_extremes<T: Real>(samples: &[NsvSample<T>]) -> ((f64, f64), (f64, f64)) {
    let mut lo = (f64::INFINITY, f64::NAN);
    let mut hi = (f64::NEG_INFINITY, f64::NAN);
    for s in samples {
        let t = s.theta.f64();
        if t < lo.0 {
            lo = (t, s.omega.f64());
        }
        if t > hi.0 {
            hi = (t, s.omega.f64());
        }
    }
    (lo, hi)
}

/// Angle-window test on `(theta1, theta2)`, the grid extremes.
pub fn angle_window<T: Real>(samples: &[NsvSample<T>], ty: NsvType) -> bool {
    let ((t1, _), (t2, _)) = theta_extremes(samples);
    window(t1, t2, ty)
}

fn window(t1: f64, t2: f64, ty: NsvType) -> bool {
    let e = SLACK;
    match ty {
        NsvType::I => t1 > -FRAC_PI_2 + e && t2 < PI - e && t2 - t1 < PI - e,
        NsvType::II => t1 > e && t2 < 1.5 * PI - e && t2 - t1 < PI - e,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefinitionReport {
    pub holds: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// The condition-list form of the Type I/II tests: the `N_chi = 0` set, the
/// `N_upsilon = 0` set and the three alternative shape conditions.
///
/// Zero sets use the samples themselves (with `SLACK` on the angle) plus
/// sign changes between adjacent finite samples, located on the chord.
pub fn definition_conditions<T: Real>(samples: &[NsvSample<T>], ty: NsvType) -> DefinitionReport {
    let e = SLACK;
    let tag = ty.tag();
    let th: Vec<f64> = samples.iter().map(|s| s.theta.f64()).collect();
    let om: Vec<f64> = samples.iter().map(|s| s.omega.f64()).collect();

    let mut m_witness = th
        .iter()
        .position(|&t| t <= -FRAC_PI_2 + e || t >= 1.5 * PI - e)
        .map(|k| om[k]);
    let mut q_witness = th
        .iter()
        .position(|&t| match ty {
            NsvType::I => (t - PI).abs() <= e,
            NsvType::II => t.abs() <= e,
        })
        .map(|k| om[k]);
    for k in 1..samples.len() {
        let (a, b) = (&samples[k - 1], &samples[k]);
        if a.is_limit() || b.is_limit() {
            continue;
        }
        let (ax, ay, bx, by) = (a.n_chi.f64(), a.n_upsilon.f64(), b.n_chi.f64(), b.n_upsilon.f64());
        let at = |t: f64| (a.omega.f64().ln() * (1.0 - t) + b.omega.f64().ln() * t).exp();
        if m_witness.is_none() && sign_change(ax, bx) {
            let t = ax / (ax - bx);
            if ay + t * (by - ay) <= 0.0 {
                m_witness = Some(at(t));
            }
        }
        if q_witness.is_none() && sign_change(ay, by) {
            let t = ay / (ay - by);
            let x = ax + t * (bx - ax);
            let bad = match ty {
                NsvType::I => x <= 0.0,
                NsvType::II => x >= 0.0,
            };
            if bad {
                q_witness = Some(at(t));
            }
        }
    }

    let all_y_nonneg = samples.iter().all(|s| s.n_upsilon >= T::zero());
    let x_sign_ok = samples.iter().all(|s| match ty {
        NsvType::I => s.n_chi >= T::zero(),
        NsvType::II => s.n_chi <= T::zero(),
    });
    // Slopes as angles: atan(delta) and atan(Psi) over the relevant quadrants.
    let in_open = |t: f64, lo: f64, hi: f64| t > lo && t < hi;
    let (forbidden, delta, psi) = match ty {
        NsvType::I => (
            th.iter().any(|&t| in_open(t, PI, 1.5 * PI)),
            th.iter().filter(|&&t| in_open(t, -FRAC_PI_2, 0.0)).map(|&t| -t).fold(None, fmax),
            th.iter().filter(|&&t| in_open(t, FRAC_PI_2, PI)).map(|&t| PI - t).fold(None, fmin),
        ),
        NsvType::II => (
            th.iter().any(|&t| in_open(t, -FRAC_PI_2, 0.0)),
            th.iter().filter(|&&t| in_open(t, PI, 1.5 * PI)).map(|&t| t - PI).fold(None, fmax),
            th.iter().filter(|&&t| in_open(t, 0.0, FRAC_PI_2)).copied().fold(None, fmin),
        ),
    };
    let slopes_ok = match (delta, psi) {
        (Some(d), Some(p)) => d < p - e,
        _ => true,
    };
    let shape = all_y_nonneg || x_sign_ok || (!forbidden && slopes_ok);

    let holds = m_witness.is_none() && q_witness.is_none() && shape;
    let diagnostics = vec![
        Diagnostic::new(format!("{tag}.n_chi_zero_set"), m_witness, m_witness.is_none()),
        Diagnostic::new(format!("{tag}.n_upsilon_zero_set"), q_witness, q_witness.is_none()),
        Diagnostic::new(format!("{tag}.shape"), None, shape),
    ];
    DefinitionReport { holds, diagnostics }
}

fn fmax(acc: Option<f64>, x: f64) -> Option<f64> {
    Some(acc.map_or(x, |a| a.max(x)))
}

fn fmin(acc: Option<f64>, x: f64) -> Option<f64> {
    Some(acc.map_or(x, |a| a.min(x)))
}

pub fn classify<T: Real>(samples: &[NsvSample<T>], ctx: &ClassifyContext<T>) -> Result<TypeVerdict> {
    if samples.is_empty() {
        return Err(Error::EmptyTable);
    }
    check_coverage(samples)?;
    let ((t1, w1), (t2, w2)) = theta_extremes(samples);
    let k = ctx.k_s0.f64();
    let mut diagnostics = Vec::new();
    let mut verdict = [false; 2];
    for (i, ty) in [NsvType::I, NsvType::II].into_iter().enumerate() {
        let tag = ty.tag();
        let mut ok = true;
        if ctx.origin_pole {
            let pass = match ty {
                NsvType::I => k > SLACK,
                NsvType::II => k < -SLACK,
            };
            diagnostics.push(Diagnostic::new(format!("{tag}.origin_pole_k_s0_sign"), None, pass));
            ok &= pass;
        }
        if ctx.kind == ElementKind::Ci {
            let pass = match ty {
                NsvType::I => k < -SLACK,
                NsvType::II => k > SLACK,
            };
            diagnostics.push(Diagnostic::new(format!("{tag}.ci_k_s0_sign"), None, pass));
            ok &= pass;
        }
        let win = window(t1, t2, ty);
        let witness = if win {
            None
        } else if match ty {
            NsvType::I => t1 <= -FRAC_PI_2 + SLACK,
            NsvType::II => t1 <= SLACK,
        } {
            Some(w1)
        } else {
            Some(w2)
        };
        diagnostics.push(Diagnostic::new(format!("{tag}.angle_window"), witness, win));
        diagnostics.extend(definition_conditions(samples, ty).diagnostics);
        verdict[i] = ok && win;
    }
    if ctx.kind == ElementKind::Ci {
        diagnostics.push(Diagnostic::new("ci_relative_degree".into(), None, ctx.n_minus_m == 2));
    }
    Ok(TypeVerdict {
        is_type1: verdict[0],
        is_type2: verdict[1],
        theta1: t1,
        theta2: t2,
        diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Corollary1 {
    /// `Im L >= 0` on the grid.
    pub cond_a: bool,
    /// `cos(angle L - angle C_R) >= 0` on the grid; only meaningful for
    /// elements other than CI.
    pub cond_b: bool,
}

pub fn corollary1_check<T: Real>(samples: &[LoopSample<T>]) -> Corollary1 {
    let e = T::c(SLACK);
    Corollary1 {
        cond_a: samples.iter().all(|s| s.l.im >= -e),
        cond_b: samples.iter().all(|s| (carg(s.l) - carg(s.c_r)).cos() >= -e),
    }
}

/// NSV of a loop on `grid`, refined near sign changes, with the exact
/// limit directions prepended and appended when available.
pub fn nsv_for_loop<T: Real>(sys: &ResetLoop<T>, grid: &[T]) -> Result<Vec<NsvSample<T>>> {
    let variant = NsvVariant::for_loop(sys.element.kind, sys.architecture);
    let blocks = sys.blocks();
    let eval = |w: T| nsv_point(&compose_loop(&sys.plant, &blocks, &[w])?[0], variant);
    let base = compute_nsv(&sys.samples(grid)?, variant)?;
    let mut out = refine(base, REFINE_LEVELS, eval)?;
    if let Some((lo, hi)) = sys.asymptotic_loops()? {
        let c_r = sys.element.base_tf();
        if let Some(s) = limit_sample(&lo, &sys.c_s, &c_r, variant, false) {
            out.insert(0, s);
        }
        if let Some(s) = limit_sample(&hi, &sys.c_s, &c_r, variant, true) {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bullet {
    pub name: &'static str,
    /// `None` when the inputs cannot decide it.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifiedVerdict {
    pub certified: bool,
    pub conditional_on_well_posedness: bool,
    pub is_type1: bool,
    pub is_type2: bool,
    pub theta1: f64,
    pub theta2: f64,
    pub bullets: Vec<Bullet>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CertifiedVerdict {
    pub fn bullet(&self, name: &str) -> Option<&Bullet> {
        self.bullets.iter().find(|b| b.name == name)
    }

    /// First bullet that did not pass.
    pub fn reason(&self) -> Option<&'static str> {
        self.bullets.iter().find(|b| b.passed != Some(true)).map(|b| b.name)
    }
}

fn is_unity<T: Real>(tf: &RationalTf<T>) -> bool {
    tf.num().degree() == 0 && tf.den().degree() == 0 && tf.num().coeff(0) == tf.den().coeff(0)
}

fn bullet(name: &'static str, passed: Option<bool>, detail: impl Into<String>) -> Bullet {
    Bullet {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Full first-order verdict (CI, PCI, GFORE, and SOSRE with its own NSV).
pub fn theorem1_verdict<T: Real>(sys: &ResetLoop<T>, grid: &[T]) -> Result<CertifiedVerdict> {
    let kind = sys.element.kind;
    if kind == ElementKind::Gsore {
        return Err(Error::Config(
            "GSORE with full reset goes through the second-order certifier".into(),
        ));
    }
    let samples = nsv_for_loop(sys, grid)?;
    let asym = sys.asymptotic_loops()?;
    let origin = sys.origin_pole()?;
    let k_s0 = sys.k_s0()?;
    let nm = sys.n_minus_m()?;
    let ctx = ClassifyContext {
        origin_pole: origin.unwrap_or(false),
        k_s0,
        kind,
        n_minus_m: nm.unwrap_or(0),
    };
    let tv = classify(&samples, &ctx)?;
    let mut bullets = Vec::new();

    let modified = sys.architecture == Architecture::Modified;
    match sys.loop_tf() {
        Some(l) => {
            let l = if modified { l.series(&sys.c_s) } else { l };
            let st = base_linear_stability(&l);
            let worst = st.poles.iter().map(|p| p.re.f64()).fold(f64::NEG_INFINITY, f64::max);
            bullets.push(bullet(
                "base linear stability",
                Some(st.stable),
                format!("largest closed-loop real part {worst:.6e}"),
            ));
            bullets.push(minimality_bullet(&l, ""));
        }
        None => {
            let loops = sys.samples(grid)?;
            let omega: Vec<T> = loops.iter().map(|s| s.omega).collect();
            let l: Vec<Complex<T>> = loops
                .iter()
                .map(|s| if modified { s.l * s.c_s } else { s.l })
                .collect();
            let q = asym.as_ref().map(|(lo, _)| lo.origin_poles());
            let ny = nyquist_stability(&omega, &l, sys.open_loop_rhp, q)?;
            bullets.push(bullet(
                "base linear stability",
                Some(ny.stable),
                format!(
                    "{} encirclements, {} closed-loop RHP poles",
                    ny.encirclements, ny.closed_loop_rhp
                ),
            ));
            let mut ctrl = sys.blocks().controller();
            if modified {
                ctrl = ctrl.series(&sys.c_s);
            }
            bullets.push(minimality_bullet(&ctrl, " (controller blocks only)"));
        }
    }

    if kind == ElementKind::Ci {
        bullets.push(bullet(
            "CI origin-pole rule",
            origin.map(|o| !o),
            match origin {
                Some(true) => "C_L1 C_L2 G has a pole at the origin",
                Some(false) => "no pole at the origin",
                None => "plant slope at low frequency not declared",
            },
        ));
        bullets.push(bullet(
            "CI relative-degree rule",
            nm.map(|n| n == 2),
            match nm {
                Some(n) => format!("n - m = {n}"),
                None => "plant slope at high frequency not declared".into(),
            },
        ));
    } else {
        bullets.push(bullet("CI origin-pole rule", Some(true), "not applicable"));
        bullets.push(bullet("CI relative-degree rule", Some(true), "not applicable"));
    }

    bullets.push(bullet(
        "asymptotic limits",
        asym.as_ref().map(|_| true),
        if asym.is_some() {
            "limit directions from rational models"
        } else {
            "measured plant without declared asymptotes"
        },
    ));

    let types = match (tv.is_type1, tv.is_type2) {
        (true, true) => "Type I and Type II".to_string(),
        (true, false) => "Type I".into(),
        (false, true) => "Type II".into(),
        (false, false) => match tv.first_failure() {
            Some(d) => format!("neither; first failure {}", d.condition),
            None => "neither".into(),
        },
    };
    bullets.push(bullet("Type I/II", Some(tv.is_type1 || tv.is_type2), types));

    let gamma = sys.element.a_rho[(0, 0)];
    bullets.push(bullet(
        "reset matrix",
        Some(gamma.abs() < T::one()),
        format!("gamma = {gamma}"),
    ));

    let conditional = !is_unity(&sys.c_s) || kind == ElementKind::Sosre;
    bullets.push(bullet(
        "well-posedness",
        Some(true),
        if kind == ElementKind::Sosre {
            "conditional: partial reset, assumed well-posed"
        } else if conditional {
            "conditional: C_s is not 1, assumed well-posed"
        } else {
            "C_s = 1"
        },
    ));

    Ok(CertifiedVerdict {
        certified: bullets.iter().all(|b| b.passed == Some(true)),
        conditional_on_well_posedness: conditional,
        is_type1: tv.is_type1,
        is_type2: tv.is_type2,
        theta1: tv.theta1,
        theta2: tv.theta2,
        bullets,
        diagnostics: tv.diagnostics,
    })
}

fn minimality_bullet<T: Real>(tf: &RationalTf<T>, suffix: &str) -> Bullet {
    match minimality_check(tf) {
        Minimality::Minimal => bullet("minimality", Some(true), format!("no cancellation{suffix}")),
        Minimality::Cancellation(z) => bullet(
            "minimality",
            Some(false),
            format!("cancellation at s = {}{suffix}", z[0]),
        ),
    }
}
