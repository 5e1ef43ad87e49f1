#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use resetcert::elements::ResetElement;
use resetcert::frf::{log_space, Plant};
use resetcert::lti::{base_linear_stability, Poly, RationalTf};
use resetcert::nsv::{theorem1_verdict, NsvSample};
use resetcert::system::ResetLoop;
use resetcert::template::CglpPid;

pub const GRID_POINTS: usize = 2000;

/// Plant of order 1..=3 with real or complex stable poles.
pub fn random_plant(rng: &mut ChaCha8Rng) -> RationalTf<f64> {
    let order = rng.gen_range(1..=3);
    let mut den = Poly::one();
    let mut k = 0;
    while k < order {
        if order - k >= 2 && rng.gen_bool(0.4) {
            let wn: f64 = rng.gen_range(0.3..5.0);
            let z: f64 = rng.gen_range(0.1..1.0);
            den = den.mul(&Poly::new(vec![wn * wn, 2.0 * z * wn, 1.0]));
            k += 2;
        } else {
            den = den.mul(&Poly::new(vec![rng.gen_range(0.1..5.0), 1.0]));
            k += 1;
        }
    }
    let gain = 10f64.powf(rng.gen_range(-1.0..1.5));
    RationalTf::new(Poly::constant(gain), den).expect("nonzero denominator")
}

pub fn random_first_order_element(rng: &mut ChaCha8Rng) -> ResetElement<f64> {
    let gamma = rng.gen_range(-0.9..0.9);
    let wr = 10f64.powf(rng.gen_range(-1.0..1.0));
    if rng.gen_bool(0.5) {
        ResetElement::gfore(wr, gamma).expect("valid GFORE")
    } else {
        ResetElement::pci(wr, gamma).expect("valid PCI")
    }
}

/// Loop with a stable base system, total order at most four.
pub fn random_stable_loop(rng: &mut ChaCha8Rng) -> ResetLoop<f64> {
    loop {
        let sys = ResetLoop::new(random_first_order_element(rng), Plant::Rational(random_plant(rng)));
        if base_linear_stability(&sys.loop_tf().expect("rational")).stable {
            return sys;
        }
    }
}

pub fn grid(sys: &ResetLoop<f64>) -> Vec<f64> {
    sys.default_grid(GRID_POINTS).expect("rational band")
}

/// First `n` random stable loops that the first-order verdict certifies.
pub fn certified_suite(rng: &mut ChaCha8Rng, n: usize) -> Vec<ResetLoop<f64>> {
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 100 * n, "only {} certified loops in {tries} draws", out.len());
        let sys = random_stable_loop(rng);
        if theorem1_verdict(&sys, &grid(&sys)).is_ok_and(|v| v.certified) {
            out.push(sys);
        }
    }
    out
}

/// CgLp+PID around `1 / (s (s + 0.5) (s^2 + 3 s + 9))`, unit crossover at 1 rad/s.
pub fn cglp_loop() -> ResetLoop<f64> {
    let g = RationalTf::from_f64(&[1.0], &[0.0, 0.5, 1.0])
        .unwrap()
        .series(&RationalTf::from_f64(&[1.0], &[9.0, 3.0, 1.0]).unwrap());
    let plant = Plant::Rational(g);
    let t = CglpPid {
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

/// NSV samples along a random continuous angle path inside `[-pi/2, 3pi/2)`.
pub fn random_nsv_path(rng: &mut ChaCha8Rng) -> Vec<NsvSample<f64>> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let n = rng.gen_range(20..200);
    let lo = -FRAC_PI_2 + 1e-3;
    let hi = 1.5 * PI - 1e-3;
    let mut theta: f64 = rng.gen_range(lo..hi);
    let omega = log_space(1e-2, 1e2, n);
    omega
        .iter()
        .map(|&w| {
            theta = (theta + rng.gen_range(-0.2..0.2)).clamp(lo, hi);
            let r = 10f64.powf(rng.gen_range(-2.0..2.0));
            NsvSample::new(w, r * theta.cos(), r * theta.sin())
        })
        .collect()
}
