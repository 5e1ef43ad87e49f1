use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use resetcert::elements::{ElementKind, ResetElement};
use resetcert::frf::{log_space, write_frf, FrfTable};
use resetcert::gsore::{certify, CertificateResult, GsoreProblem};
use resetcert::hbeta::{
    search_candidate_scalar, spr_check_matrix, spr_check_scalar, GsoreCandidate, MatrixContext, MatrixReport,
    ScalarCandidate, ScalarContext, ScalarReport,
};
use resetcert::lti::{rational_band, ClosedLoop, RationalTf};
use resetcert::nalgebra::{DMatrix, DVector};
use resetcert::nsv::{nsv_for_loop, theorem1_verdict, CertifiedVerdict};
use resetcert::sim::{simulate_many, SimConfig};

use crate::config::{Overrides, RunConfig, TemplateSpec};
use crate::output::{emit, emit_json, write_atomic};
use crate::Outcome;

fn outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Certified
    } else {
        Outcome::NotCertified
    }
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    types: Vec<&'static str>,
    #[serde(flatten)]
    verdict: &'a CertifiedVerdict,
}

pub fn classify(cfg: &RunConfig, o: &Overrides, out: Option<&Path>) -> Result<Outcome> {
    let sys = cfg.reset_loop(o)?;
    let grid = cfg.grid(&sys)?;
    let verdict = theorem1_verdict(&sys, &grid)?;
    let mut types = Vec::new();
    if verdict.is_type1 {
        types.push("type1");
    }
    if verdict.is_type2 {
        types.push("type2");
    }
    emit_json(out, &ClassifyOutput { types, verdict: &verdict })?;
    Ok(outcome(verdict.certified))
}

#[derive(Serialize)]
struct GsoreOutput<'a> {
    seed: u64,
    #[serde(flatten)]
    result: &'a CertificateResult<f64>,
    oracle_cross_check: &'static str,
}

pub fn gsore_check(cfg: &RunConfig, o: &Overrides, out: Option<&Path>) -> Result<Outcome> {
    let sys = cfg.reset_loop(o)?;
    let problem = GsoreProblem::from_loop(&sys, cfg.grid_points())?;
    let settings = cfg.optimizer();
    let result = certify(&problem, &settings)?;
    let oracle_cross_check = match &result.matrix_check {
        Some(m) if m.passed => "pass",
        Some(_) => "fail",
        None => "not_run",
    };
    emit_json(
        out,
        &GsoreOutput {
            seed: settings.seed,
            result: &result,
            oracle_cross_check,
        },
    )?;
    Ok(outcome(result.certified))
}

#[derive(Serialize)]
#[serde(untagged)]
enum HbetaOutput {
    Scalar {
        candidate: Option<ScalarCandidate<f64>>,
        report: Option<ScalarReport>,
        passed: bool,
    },
    Matrix {
        candidate: GsoreCandidate<f64>,
        report: MatrixReport,
        passed: bool,
    },
}

pub fn hbeta(cfg: &RunConfig, o: &Overrides, out: Option<&Path>) -> Result<Outcome> {
    let sys = cfg.reset_loop(o)?;
    let grid = cfg.grid(&sys)?;
    let samples = sys.samples(&grid)?;
    let result = if sys.element.kind == ElementKind::Gsore {
        let Some(spec) = cfg.candidate else {
            bail!("a GSORE needs a candidate; gsore-check searches for one");
        };
        let candidate = spec.gsore()?;
        let ctx = MatrixContext::from_loop(&sys)?;
        let report = spr_check_matrix(&candidate, &samples, &ctx)?;
        HbetaOutput::Matrix {
            candidate,
            passed: report.passed,
            report,
        }
    } else {
        let ctx = ScalarContext::from_loop(&sys)?;
        let candidate = match cfg.candidate {
            Some(spec) => Some(spec.scalar()?),
            None => search_candidate_scalar(&samples, &ctx)?,
        };
        let report = candidate
            .map(|c| spr_check_scalar(&c, &samples, &ctx))
            .transpose()?;
        HbetaOutput::Scalar {
            candidate,
            passed: report.as_ref().is_some_and(|r| r.passed),
            report,
        }
    };
    let passed = match &result {
        HbetaOutput::Scalar { passed, .. } | HbetaOutput::Matrix { passed, .. } => *passed,
    };
    emit_json(out, &result)?;
    Ok(outcome(passed))
}

fn element_only(cfg: &RunConfig) -> Result<ResetElement<f64>> {
    match &cfg.template {
        Some(TemplateSpec::CglpPid { params, .. }) => Ok(params.element()?),
        None => cfg.element(),
    }
}

fn with_gamma(mut e: ResetElement<f64>, gamma: f64) -> ResetElement<f64> {
    let n = e.order();
    if e.kind == ElementKind::Sosre {
        e.a_rho[(0, 0)] = gamma;
    } else {
        e.a_rho = DMatrix::from_diagonal_element(n, n, gamma);
    }
    e
}

fn suffixed(path: &Path, gamma: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}_gamma{gamma}.{ext}"),
        None => format!("{stem}_gamma{gamma}"),
    };
    path.with_file_name(name)
}

pub fn simulate(cfg: &RunConfig, o: &Overrides, out: Option<&Path>, nsv_out: Option<&Path>) -> Result<Outcome> {
    let spec = cfg.simulation.as_ref().context("no \"simulation\" section in the config")?;
    let build = |gamma: Option<f64>| -> Result<ClosedLoop<f64>> {
        if spec.open_loop {
            let mut e = element_only(cfg)?;
            if let Some(g) = gamma {
                e = with_gamma(e, g);
            }
            Ok(ClosedLoop::open_loop(&e.realization()?, &e.a_rho)?)
        } else {
            let mut sys = cfg.reset_loop(o)?;
            if let Some(g) = gamma {
                sys.element = with_gamma(sys.element, g);
            }
            Ok(sys.closed_loop()?)
        }
    };
    let config = |cl: ClosedLoop<f64>| -> Result<SimConfig<f64>> {
        let mut c = SimConfig::new(cl, spec.input.clone(), spec.t_end);
        if let Some(dt) = spec.dt {
            c.dt = dt;
            c.lambda = dt;
        }
        if let Some(l) = spec.lambda {
            c.lambda = l;
        }
        if let Some(x0) = &spec.x0 {
            c.x0 = DVector::from_column_slice(x0);
        }
        c.validate()?;
        Ok(c)
    };

    let gammas: Vec<Option<f64>> = match &spec.gamma_sweep {
        Some(g) if out.is_none() => bail!("a gamma sweep writes one file per value and needs --out ({} values)", g.len()),
        Some(g) => g.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let configs = gammas
        .iter()
        .map(|g| config(build(*g)?))
        .collect::<Result<Vec<_>>>()?;
    let traces = simulate_many(&configs);
    for (g, trace) in gammas.iter().zip(traces) {
        let trace = trace?;
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        match (g, out) {
            (Some(g), Some(p)) => write_atomic(&suffixed(p, *g), &buf)?,
            _ => emit(out, &buf)?,
        }
    }

    if let Some(path) = nsv_out {
        let sys = cfg.reset_loop(o)?;
        let grid = cfg.grid(&sys)?;
        let mut buf = String::from("omega,theta_deg\n");
        for s in nsv_for_loop(&sys, &grid)?.iter().filter(|s| !s.is_limit()) {
            buf.push_str(&format!("{},{}\n", s.omega, s.theta.to_degrees()));
        }
        write_atomic(path, buf.as_bytes())?;
    }
    Ok(Outcome::Certified)
}

pub fn frf_convert(cfg: &RunConfig, o: &Overrides, out: Option<&Path>) -> Result<Outcome> {
    let table = match (&o.frf, &cfg.plant) {
        (Some(path), _) => resetcert::frf::load_frf(path, o.frf_format)
            .with_context(|| format!("loading {}", path.display()))?,
        (None, Some(c)) => {
            let g = RationalTf::from_coeffs(c)?;
            let grid = match (cfg.grid.omega_min, cfg.grid.omega_max) {
                (Some(lo), Some(hi)) => log_space(lo, hi, cfg.grid_points()),
                _ => {
                    let (lo, hi) = rational_band(&g);
                    log_space(lo, hi, cfg.grid_points())
                }
            };
            FrfTable::from_tf(&g, &grid)?
        }
        (None, None) => bail!("nothing to convert: pass --frf or a config with a rational plant"),
    };
    let mut buf = Vec::new();
    write_frf(&table, &mut buf)?;
    emit(out, &buf)?;
    Ok(Outcome::Certified)
}
