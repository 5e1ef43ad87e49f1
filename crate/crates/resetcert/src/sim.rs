//! Hybrid simulation: RK4 flow, zero-crossing resets, dwell-time guard.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elements::{Realization, ResetElement};
use crate::lti::{assemble_closed_loop, Architecture, ClosedLoop, LinearBlocks};
use crate::{Error, Real, Result};

/// A trajectory is abandoned once `||x||` exceeds this bound.
pub const OVERFLOW_NORM: f64 = 1e12;
/// Crossing localization, relative to `dt`.
pub const BISECTION_TOL: f64 = 1e-10;
/// The jump fires only if `||(I - A_rho) x|| > GUARD_REL ||x||`.
pub const GUARD_REL: f64 = 1e-12;

/// `coef t^power e^(rate t) cos(omega t + phase)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct BohlTerm<T> {
    pub coef: T,
    #[serde(default)]
    pub power: u32,
    #[serde(default = "zero")]
    pub rate: T,
    #[serde(default = "zero")]
    pub omega: T,
    #[serde(default = "zero")]
    pub phase: T,
}

fn zero<T: Real>() -> T {
    T::zero()
}

/// Reference signal; all variants are Bohl functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub enum Input<T> {
    Zero,
    Step { amplitude: T },
    Sinusoid { amplitude: T, omega: T, phase: T },
    Bohl { terms: Vec<BohlTerm<T>> },
}

impl<T: Real> Input<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            Input::Zero => T::zero(),
            Input::Step { amplitude } => *amplitude,
            Input::Sinusoid { amplitude, omega, phase } => *amplitude * (*omega * t + *phase).sin(),
            Input::Bohl { terms } => terms
                .iter()
                .map(|b| b.coef * t.powi(b.power as i32) * (b.rate * t).exp() * (b.omega * t + b.phase).cos())
                .fold(T::zero(), |a, v| a + v),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig<T: Real> {
    pub system: ClosedLoop<T>,
    pub dt: T,
    pub t_end: T,
    /// Minimum time between resets.
    pub lambda: T,
    pub input: Input<T>,
    pub x0: DVector<T>,
}

impl<T: Real> SimConfig<T> {
    /// Default step, `lambda = dt`, zero initial state.
    pub fn new(system: ClosedLoop<T>, input: Input<T>, t_end: T) -> Self {
        let dt = default_dt(&system, t_end);
        let n = system.order();
        SimConfig {
            system,
            dt,
            t_end,
            lambda: dt,
            input,
            x0: DVector::zeros(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !(self.t_end > self.dt) {
            return Err(Error::Config(format!("need 0 < dt < t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.x0.len() != self.system.order() {
            return Err(Error::DimensionMismatch(format!(
                "x0 has {} entries, the system has order {}",
                self.x0.len(),
                self.system.order()
            )));
        }
        Ok(())
    }
}

/// Slowest stable time constant of `A`, if any.
pub fn dominant_time_constant<T: Real>(a: &DMatrix<T>) -> Option<T> {
    let tiny = T::c(1e-12);
    a.clone()
        .complex_eigenvalues()
        .iter()
        .filter(|l| l.re < -tiny)
        .map(|l| -T::one() / l.re)
        .reduce(|x, y| x.max(y))
}

/// `min(tau / 200, 0.5 / rho(A))`, falling back to `t_end / 10^4`.
pub fn default_dt<T: Real>(system: &ClosedLoop<T>, t_end: T) -> T {
    let eig = system.a_bar.clone().complex_eigenvalues();
    let rho = eig.iter().map(|l| crate::scalar::cabs(*l)).fold(T::zero(), |a, b| a.max(b));
    let mut dt = match dominant_time_constant(&system.a_bar) {
        Some(tau) => tau / T::c(200.0),
        None => t_end / T::c(1e4),
    };
    if rho > T::zero() {
        dt = dt.min(T::c(0.5) / rho);
    }
    dt
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub outputs: Vec<T>,
    pub reset_signal: Vec<T>,
    /// Rows recorded at a reset instant hold the pre-jump state.
    pub reset_flags: Vec<bool>,
    pub reset_instants: Vec<T>,
    /// State right after each jump.
    pub post_jump: Vec<DVector<T>>,
    pub max_state_norm: T,
}

impl<T: Real> SimTrace<T> {
    /// Indices of the uniform-time rows.
    pub fn uniform_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.times.len()).filter(|&i| !self.reset_flags[i])
    }

    /// Smallest gap between consecutive resets.
    pub fn min_dwell(&self) -> Option<T> {
        self.reset_instants
            .windows(2)
            .map(|w| w[1] - w[0])
            .reduce(|a, b| a.min(b))
    }

    /// CSV with columns `t, x_1..x_n, y, e_r, reset_flag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["y", "e_r", "reset_flag"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.states[i].iter().map(|v| v.to_string()));
            row.push(self.outputs[i].to_string());
            row.push(self.reset_signal[i].to_string());
            row.push(u8::from(self.reset_flags[i]).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

struct Flow<'a, T: Real> {
    cl: &'a ClosedLoop<T>,
    input: &'a Input<T>,
}

impl<T: Real> Flow<'_, T> {
    fn deriv(&self, t: T, x: &DVector<T>) -> DVector<T> {
        let r = self.input.eval(t);
        &self.cl.a_bar * x + self.cl.b_bar.column(0) * r
    }

    fn rk4(&self, t: T, x: &DVector<T>, h: T) -> DVector<T> {
        let half = h * T::c(0.5);
        let k1 = self.deriv(t, x);
        let k2 = self.deriv(t + half, &(x + &k1 * half));
        let k3 = self.deriv(t + half, &(x + &k2 * half));
        let k4 = self.deriv(t + h, &(x + &k3 * h));
        x + (k1 + k2 * T::c(2.0) + k3 * T::c(2.0) + k4) * (h / T::c(6.0))
    }

    fn e_r(&self, t: T, x: &DVector<T>) -> T {
        (&self.cl.c_e_bar * x)[(0, 0)] + self.cl.d_e * self.input.eval(t)
    }

    fn y(&self, t: T, x: &DVector<T>) -> T {
        (&self.cl.c_bar * x)[(0, 0)] + self.cl.d_y[0] * self.input.eval(t)
    }
}

struct Recorder<T: Real> {
    trace: SimTrace<T>,
}

impl<T: Real> Recorder<T> {
    fn push(&mut self, flow: &Flow<T>, t: T, x: &DVector<T>, reset: bool) -> Result<()> {
        let norm = x.norm();
        if !(norm <= T::c(OVERFLOW_NORM)) {
            return Err(Error::StateOverflow { t: t.f64() });
        }
        let tr = &mut self.trace;
        tr.max_state_norm = tr.max_state_norm.max(norm);
        tr.times.push(t);
        tr.outputs.push(flow.y(t, x));
        tr.reset_signal.push(flow.e_r(t, x));
        tr.reset_flags.push(reset);
        tr.states.push(x.clone());
        Ok(())
    }
}

/// Fixed-step RK4 of the flow. A sign change of `e_r` within a step is
/// located by bisection; if the dwell and jump guards allow it, the step
/// is split at the crossing and the jump applied there.
pub fn simulate<T: Real>(config: &SimConfig<T>) -> Result<SimTrace<T>> {
    config.validate()?;
    let cl = &config.system;
    let flow = Flow {
        cl,
        input: &config.input,
    };
    let (dt, t_end) = (config.dt, config.t_end);
    let min_gap = config.lambda.max(dt);
    let steps = (t_end / dt).ceil().to_usize().unwrap_or(0);
    let guard_ok = |x: &DVector<T>| {
        let moved = x - &cl.a_rho_bar * x;
        moved.norm() > T::c(GUARD_REL) * x.norm()
    };

    let mut rec = Recorder {
        trace: SimTrace {
            times: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity(steps + 1),
            outputs: Vec::with_capacity(steps + 1),
            reset_signal: Vec::with_capacity(steps + 1),
            reset_flags: Vec::with_capacity(steps + 1),
            reset_instants: Vec::new(),
            post_jump: Vec::new(),
            max_state_norm: T::zero(),
        },
    };
    let mut x = config.x0.clone();
    rec.push(&flow, T::zero(), &x, false)?;
    let mut last_reset: Option<T> = None;

    for k in 0..steps {
        let t0 = dt * T::c(k as f64);
        let t1 = (t0 + dt).min(t_end);
        let h = t1 - t0;
        if !(h > T::zero()) {
            break;
        }
        let mut x1 = flow.rk4(t0, &x, h);
        let e0 = flow.e_r(t0, &x);
        let e1 = flow.e_r(t1, &x1);
        let crossed = (e0 > T::zero() && e1 <= T::zero()) || (e0 < T::zero() && e1 >= T::zero());
        if crossed {
            let (mut lo, mut hi) = (T::zero(), h);
            let tol = T::c(BISECTION_TOL) * dt;
            while hi - lo > tol {
                let mid = (lo + hi) * T::c(0.5);
                let em = flow.e_r(t0 + mid, &flow.rk4(t0, &x, mid));
                if (em > T::zero()) == (e0 > T::zero()) && em != T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tc = t0 + hi;
            let xc = if hi == h { x1.clone() } else { flow.rk4(t0, &x, hi) };
            let dwell_ok = last_reset.is_none_or(|tr| tc - tr >= min_gap);
            if dwell_ok && guard_ok(&xc) {
                rec.push(&flow, tc, &xc, true)?;
                let post = &cl.a_rho_bar * &xc;
                rec.trace.reset_instants.push(tc);
                rec.trace.post_jump.push(post.clone());
                last_reset = Some(tc);
                x1 = if t1 > tc { flow.rk4(tc, &post, t1 - tc) } else { post };
            }
        }
        x = x1;
        rec.push(&flow, t1, &x, false)?;
    }
    Ok(rec.trace)
}

/// Independent runs in parallel.
pub fn simulate_many<T: Real>(configs: &[SimConfig<T>]) -> Vec<Result<SimTrace<T>>> {
    configs.par_iter().map(simulate).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResponse<T: Real> {
    pub trace: SimTrace<T>,
    /// Peak excess over the final value, relative to it.
    pub overshoot: T,
    /// Last time `y` is outside 2% of the final value.
    pub settling_time: Option<T>,
}

pub fn step_response<T: Real>(system: &ClosedLoop<T>, amplitude: T, t_end: T) -> Result<StepResponse<T>> {
    let cfg = SimConfig::new(system.clone(), Input::Step { amplitude }, t_end);
    let trace = simulate(&cfg)?;
    let fin = *trace.outputs.last().expect("trace has rows");
    let peak = trace.outputs.iter().fold(T::zero(), |m, &y| if (y - fin).abs() > m.abs() && y.abs() > fin.abs() { y - fin } else { m });
    let overshoot = if fin != T::zero() { (peak / fin).abs() } else { T::zero() };
    let band = fin.abs() * T::c(0.02);
    let settling_time = trace
        .times
        .iter()
        .zip(&trace.outputs)
        .rev()
        .find(|(_, y)| (**y - fin).abs() > band)
        .map(|(t, _)| *t);
    Ok(StepResponse {
        trace,
        overshoot,
        settling_time,
    })
}

/// `sup_t |y_a - y_b|` over the uniform rows for two realizations of the
/// same element, open loop when `blocks` is `None`.
pub fn realization_equivalence<T: Real>(
    element: &ResetElement<T>,
    a: Realization,
    b: Realization,
    blocks: Option<&LinearBlocks<T>>,
    input: &Input<T>,
    t_end: T,
    dt: T,
) -> Result<T> {
    let build = |r: Realization| -> Result<ClosedLoop<T>> {
        let ss = element.clone().with_realization(r).realization()?;
        match blocks {
            Some(bl) => assemble_closed_loop(&ss, &element.a_rho, bl, Architecture::Standard),
            None => ClosedLoop::open_loop(&ss, &element.a_rho),
        }
    };
    let run = |cl: ClosedLoop<T>| {
        let n = cl.order();
        simulate(&SimConfig {
            system: cl,
            dt,
            t_end,
            lambda: dt,
            input: input.clone(),
            x0: DVector::zeros(n),
        })
    };
    let (ta, tb) = (run(build(a)?)?, run(build(b)?)?);
    let ya: Vec<T> = ta.uniform_rows().map(|i| ta.outputs[i]).collect();
    let yb: Vec<T> = tb.uniform_rows().map(|i| tb.outputs[i]).collect();
    Ok(ya.iter().zip(&yb).map(|(p, q)| (*p - *q).abs()).fold(T::zero(), |m, v| m.max(v)))
}
