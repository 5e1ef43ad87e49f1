//! End-to-end acceptance run. Prints one line per criterion and exits with a
//! failure status if any criterion fails or overruns its time budget.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resetcert::elements::{Realization, ResetElement};
use resetcert::frf::{LoopSample, Plant};
use resetcert::gsore::{certify, evaluate, gamma_factor, prop1_bounds, GsoreProblem, OptimizerSettings};
use resetcert::hbeta::{
    search_candidate_scalar, spr_check_matrix, spr_check_scalar, MatrixContext, ScalarCandidate, ScalarContext,
};
use resetcert::lti::{LinearBlocks, RationalTf};
use resetcert::nsv::{angle_window, definition_conditions, nsv_point, theorem1_verdict, NsvType, NsvVariant};
use resetcert::sim::{dominant_time_constant, realization_equivalence, simulate, simulate_many, Input, SimConfig};
use resetcert::system::ResetLoop;
use resetcert::Complex;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check {
        passed,
        detail: detail.into(),
    }
}

/// Systems certified along the way, for the boundedness run.
#[derive(Default)]
struct Certified {
    loops: Vec<ResetLoop<f64>>,
}

fn run(n: usize, title: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let t0 = Instant::now();
    let c = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        check(false, format!("panicked: {msg}"))
    });
    let elapsed = t0.elapsed();
    let passed = c.passed && elapsed <= budget;
    let status = if passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:>2} {status}  {title}: {} [{:.2} s of {} s]",
        c.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    passed
}

fn nsv_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut alt = 0.0f64;
    let mut count = 0;
    while count < 1000 {
        let (a, b): (f64, f64) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let c_r = Complex::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let s = LoopSample {
            omega: 1.0,
            l: Complex::new(a, b),
            c_s: Complex::new(1.0, 0.0),
            c_r,
        };
        let Ok(p) = nsv_point(&s, NsvVariant::Standard) else { continue };
        count += 1;
        worst = worst.max((p.n_chi - (a * a + b * b + a)).abs());
        alt = alt.max((p.n_chi - (a * a + b * b + b)).abs());
    }
    check(
        worst <= 1e-10,
        format!("max |N_chi - (a^2 + b^2 + a)| = {worst:.1e} over {count} samples; a^2 + b^2 + b form differs by up to {alt:.1e}"),
    )
}

fn remark_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut agree = 0;
    let mut holds = [0; 2];
    for _ in 0..200 {
        let s = common::random_nsv_path(&mut rng);
        let mut same = true;
        for (i, ty) in [NsvType::I, NsvType::II].into_iter().enumerate() {
            let w = angle_window(&s, ty);
            same &= w == definition_conditions(&s, ty).holds;
            holds[i] += usize::from(w);
        }
        agree += usize::from(same);
    }
    check(
        agree == 200,
        format!("{agree}/200 sets agree on both types (Type I holds in {}, Type II in {})", holds[0], holds[1]),
    )
}

fn ci_directions(g: RationalTf<f64>) -> Vec<resetcert::hbeta::ScalarReport> {
    let sys = ResetLoop::new(ResetElement::ci(0.0), Plant::Rational(g));
    let samples = sys.samples(&common::grid(&sys)).unwrap();
    let ctx = ScalarContext::from_loop(&sys).unwrap();
    // half-step offset keeps beta' away from zero
    (0..72)
        .map(|k| {
            let phi = std::f64::consts::PI * (k as f64 + 0.5) / 72.0;
            let c = ScalarCandidate {
                beta_prime: phi.cos(),
                rho_prime: phi.sin(),
            };
            spr_check_scalar(&c, &samples, &ctx).unwrap()
        })
        .collect()
}

/// Origin pole with relative degree two: the low limit is `K_s0 beta'` and the
/// scaled high limit is `-K_s0 beta'`, so exactly one of them fails.
fn ci_origin_control(g: RationalTf<f64>) -> bool {
    ci_directions(g).iter().all(|r| {
        let (lo, hi) = (r.low.as_ref().unwrap(), r.high.as_ref().unwrap());
        !r.passed && lo.power == Some(0) && hi.power == Some(-2) && (lo.coef + hi.coef).abs() <= 1e-9 && lo.passed != hi.passed
    })
}

fn ci_degree_control(g: RationalTf<f64>) -> bool {
    ci_directions(g).iter().all(|r| !r.passed && !r.high.as_ref().unwrap().passed)
}

fn oracle_coupling(store: &mut Certified) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let suite = common::certified_suite(&mut rng, 50);
    let mut found = 0;
    for sys in &suite {
        let samples = sys.samples(&common::grid(sys)).unwrap();
        let ctx = ScalarContext::from_loop(sys).unwrap();
        if let Some(c) = search_candidate_scalar(&samples, &ctx).unwrap() {
            let r = spr_check_scalar(&c, &samples, &ctx).unwrap();
            if r.passed && r.low.is_some_and(|l| l.passed) && r.high.is_some_and(|h| h.passed) {
                found += 1;
            }
        }
    }
    let origin = ci_origin_control(RationalTf::from_f64(&[1.0, 1.0], &[0.0, 2.0, 1.0]).unwrap());
    let degree = ci_degree_control(RationalTf::from_f64(&[1.0], &[2.0, 3.0, 1.0]).unwrap());
    store.loops.extend(suite);
    check(
        found == 50 && origin && degree,
        format!(
            "{found}/50 candidates pass grid and both limits; CI origin-pole control has opposite-sign limits: {origin}; CI n-m=3 control fails the high limit: {degree}"
        ),
    )
}

fn gamma_properties() -> Check {
    let g = |k: usize| -0.99 + 1.98 * k as f64 / 98.0;
    let mut diag = 0.0f64;
    let mut min = f64::INFINITY;
    let mut argmin_on_diagonal = true;
    for i in 0..99 {
        let row: Vec<f64> = (0..99).map(|j| gamma_factor(g(i), g(j)).unwrap()).collect();
        diag = diag.max((row[i] - 1.0).abs());
        min = min.min(row.iter().copied().fold(f64::INFINITY, f64::min));
        let j = (0..99).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        argmin_on_diagonal &= j == i;
    }
    check(
        diag <= 1e-12 && min >= 1.0 - 1e-12 && argmin_on_diagonal,
        format!("max |Gamma(g,g) - 1| = {diag:.1e}, grid minimum {min:.15}, row minima on the diagonal: {argmin_on_diagonal}"),
    )
}

fn prop1_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cells, mut agree) = (0, 0);
    for _ in 0..20 {
        let n = rng.gen_range(10..80);
        let f1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f3: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.3)).collect();
        for i in 0..50 {
            for j in 0..50 {
                let q1 = -4.0 + 8.0 * (i as f64 + 0.5) / 50.0;
                let q2 = -4.0 + 8.0 * (j as f64 + 0.5) / 50.0;
                let direct = (0..n).all(|k| q1 * f1[k] + q2 * f2[k] > f3[k]);
                let b = prop1_bounds(&f1, &f2, &f3, q2 / q1, q1.signum()).unwrap();
                let mag = q1.hypot(q2);
                cells += 1;
                agree += usize::from(direct == (b.eta1 < mag && mag < b.eta2));
            }
        }
    }
    check(agree == cells, format!("{agree}/{cells} grid cells agree over 20 instances"))
}

fn max_reset_eigenvalue(a_rho: &DMatrix<f64>, rho: &DMatrix<f64>) -> f64 {
    let m = a_rho.transpose() * rho * a_rho - rho;
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().max()
}

fn gsore_consistency(store: &mut Certified) -> Check {
    let sys = common::cglp_loop();
    let problem = GsoreProblem::from_loop(&sys, 2000).unwrap();
    let ctx = MatrixContext::from_loop(&sys).unwrap();
    let (mut certified, mut inconsistent) = (0, 0);
    let mut hermitian = f64::INFINITY;
    for seed in 0..10 {
        let settings = OptimizerSettings {
            restarts: 2,
            seed,
            ..OptimizerSettings::default()
        };
        let r = certify(&problem, &settings).unwrap();
        if !r.certified {
            continue;
        }
        certified += 1;
        let c = r.reconstructed;
        let direct = spr_check_matrix(&c, &problem.samples, &ctx).unwrap();
        let limits = direct.low.is_some_and(|l| l.passed) && direct.high.is_some_and(|h| h.passed);
        let eig = max_reset_eigenvalue(&ctx.a_rho, &c.rho());
        if !(direct.grid_passed && limits && eig < 0.0 && direct.passed) {
            inconsistent += 1;
        }
        hermitian = hermitian.min(direct.hermitian_min_eig.unwrap_or(f64::NAN));
    }
    store.loops.push(sys);

    // published certificate values, evaluated only for output shape
    let fixture = evaluate(&problem, [13172.0, 12_001_144.0, 8_113_151.0, 1055.0]).unwrap();
    let shape = fixture.q.len() == 4 && fixture.constraint_report.len() == 7;
    check(
        inconsistent == 0 && shape,
        format!(
            "{certified}/10 seeds certified, {inconsistent} inconsistent; fixture Q gives {} constraint rows; smallest eig(H + H^*) on certified grids {hermitian:.3e}",
            fixture.constraint_report.len()
        ),
    )
}

fn simulator_oracle() -> Check {
    let e = ResetElement::ci(0.0);
    let cl = resetcert::lti::ClosedLoop::open_loop(&e.realization().unwrap(), &e.a_rho).unwrap();
    let sine = Input::Sinusoid {
        amplitude: 1.0,
        omega: 1.0,
        phase: 0.0,
    };
    let cfg = |cl: resetcert::lti::ClosedLoop<f64>, input: Input<f64>, dt: f64, lambda: f64, t_end: f64| SimConfig {
        x0: DVector::zeros(cl.order()),
        system: cl,
        dt,
        t_end,
        lambda,
        input,
    };
    let tr = simulate(&cfg(cl.clone(), sine.clone(), 1e-3, 1e-3, 20.0)).unwrap();
    let exact = |t: f64| {
        let k = (t / std::f64::consts::PI).ceil().max(1.0) - 1.0;
        (-1f64).powi(k as i32) - t.cos()
    };
    let err = tr
        .uniform_rows()
        .map(|i| (tr.states[i][0] - exact(tr.times[i])).abs())
        .fold(0.0, f64::max);
    let peak = tr.states.iter().map(|x| x[0].abs()).fold(0.0, f64::max);

    let mut dwell_ok = tr.min_dwell().is_none_or(|d| d >= 1e-3);
    for lambda in [0.5, 2.0, 4.0] {
        let t = simulate(&cfg(cl.clone(), sine.clone(), 1e-2, lambda, 30.0)).unwrap();
        dwell_ok &= t.min_dwell().is_none_or(|d| d >= lambda);
    }

    let g = RationalTf::from_f64(&[2.0], &[1.0, 2.0, 1.0]).unwrap();
    let gf = ResetElement::gfore(1.0, 0.3).unwrap();
    let looped = resetcert::lti::assemble_closed_loop(
        &gf.realization().unwrap(),
        &gf.a_rho,
        &LinearBlocks::with_plant(g),
        resetcert::lti::Architecture::Standard,
    )
    .unwrap();
    let mut unit = looped.clone();
    unit.a_rho_bar = DMatrix::identity(looped.order(), looped.order());
    let a = simulate(&cfg(unit, sine.clone(), 1e-2, 1e-2, 30.0)).unwrap();
    let b = simulate(&cfg(looped.base_linear(), sine, 1e-2, 1e-2, 30.0)).unwrap();
    dwell_ok &= a.min_dwell().is_none_or(|d| d >= 1e-2);
    let lin = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    check(
        err <= 1e-6 && (peak - 2.0).abs() <= 1e-6 && dwell_ok && lin <= 1e-12 && a.times.len() == b.times.len(),
        format!("CI max error {err:.1e}, peak {peak:.9}; dwell respected: {dwell_ok}; unit reset vs linear {lin:.1e}"),
    )
}

fn realization_equivalence_check() -> Check {
    let blocks = LinearBlocks::with_plant(RationalTf::from_f64(&[1.0], &[1.0, 2.0, 1.0]).unwrap());
    let input = Input::Sinusoid {
        amplitude: 1.0,
        omega: 0.7,
        phase: 0.0,
    };
    let dev = |a_rho: DMatrix<f64>| {
        let e = ResetElement::gsore(1.0, 1.2, a_rho).unwrap();
        realization_equivalence(
            &e,
            Realization::Controllable,
            Realization::Observable,
            Some(&blocks),
            &input,
            50.0,
            1e-3,
        )
        .unwrap()
    };
    let uniform = dev(DMatrix::identity(2, 2) * 0.3);
    let partial = dev(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])));
    check(
        uniform <= 1e-6 && partial > 1e-3,
        format!("A_rho = 0.3 I: max output gap {uniform:.1e}; A_rho = diag(0.5, 1): {partial:.3e}"),
    )
}

fn redistribution() -> Check {
    let tf = |n: &[f64], d: &[f64]| RationalTf::from_f64(n, d).unwrap();
    let (a, b, c) = (tf(&[2.0], &[0.5, 1.0]), tf(&[1.0, 0.25], &[4.0, 1.0]), tf(&[1.0], &[2.0, 1.0]));
    let arrangements = [
        (a.clone(), b.clone(), c.clone()),
        (RationalTf::one(), a.series(&b), c.clone()),
        (b.clone(), RationalTf::one(), a.series(&c)),
    ];
    let mut out = Vec::new();
    for element in [ResetElement::gfore(1.0, 0.25).unwrap(), ResetElement::pci(2.0, -0.5).unwrap()] {
        let v: Vec<String> = arrangements
            .iter()
            .map(|(l1, l2, g)| {
                let mut sys = ResetLoop::new(element.clone(), Plant::Rational(g.clone()));
                sys.c_l1 = l1.clone();
                sys.c_l2 = l2.clone();
                let grid = sys.default_grid(common::GRID_POINTS).unwrap();
                serde_json::to_string(&theorem1_verdict(&sys, &grid).unwrap()).unwrap()
            })
            .collect();
        out.push(v[0] == v[1] && v[0] == v[2]);
    }
    check(out.iter().all(|&x| x), format!("identical verdicts per element: {out:?}"))
}

fn ubibs(store: &Certified) -> Check {
    let mut configs = Vec::new();
    for sys in &store.loops {
        let cl = sys.closed_loop().unwrap();
        let tau = dominant_time_constant(&cl.a_bar).unwrap();
        let t_end = 200.0 * tau;
        for input in [
            Input::Step { amplitude: 1.0 },
            Input::Sinusoid {
                amplitude: 1.0,
                omega: 1.0 / tau,
                phase: 0.0,
            },
        ] {
            configs.push(SimConfig::new(cl.clone(), input, t_end));
        }
    }
    let results = simulate_many(&configs);
    let bounded = results
        .iter()
        .filter(|r| r.as_ref().is_ok_and(|t| t.max_state_norm.is_finite()))
        .count();
    let worst = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|t| t.max_state_norm)
        .fold(0.0, f64::max);
    check(
        bounded == configs.len(),
        format!("{bounded}/{} traces bounded over 200 time constants, largest state norm {worst:.3e}", configs.len()),
    )
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut store = Certified::default();
    let mut ok = true;
    ok &= run(1, "NSV identity", secs(1), nsv_identity);
    ok &= run(2, "condition lists vs angle windows", secs(5), remark_equivalence);
    ok &= run(3, "oracle soundness coupling", secs(60), || oracle_coupling(&mut store));
    ok &= run(4, "Gamma properties", secs(1), gamma_properties);
    ok &= run(5, "interval bounds vs brute force", secs(30), prop1_equivalence);
    ok &= run(6, "GSORE end-to-end self-consistency", secs(600), || gsore_consistency(&mut store));
    ok &= run(7, "simulator oracle", secs(10), simulator_oracle);
    ok &= run(8, "realization equivalence", secs(30), realization_equivalence_check);
    ok &= run(9, "redistribution invariance", secs(60), redistribution);
    ok &= run(10, "bounded traces of certified systems", secs(600), || ubibs(&store));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
