//! JSON run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use resetcert::elements::{ElementKind, Realization, ResetElement};
use resetcert::frf::{log_space, AsymptoteSpec, FrfFormat, Plant};
use resetcert::gsore::OptimizerSettings;
use resetcert::hbeta::{GsoreCandidate, ScalarCandidate};
use resetcert::lti::{Architecture, RationalTf, TfCoeffs};
use resetcert::nalgebra::{DMatrix, DVector};
use resetcert::sim::Input;
use resetcert::system::{ResetLoop, DEFAULT_GRID_POINTS};
use resetcert::template::CglpPid;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub element: Option<ElementSpec>,
    pub template: Option<TemplateSpec>,
    /// Rational plant; a measured one comes from `--frf`.
    pub plant: Option<TfCoeffs>,
    pub c_l1: Option<TfCoeffs>,
    pub c_l2: Option<TfCoeffs>,
    pub c_s: Option<TfCoeffs>,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub open_loop_rhp: usize,
    pub asymptote: Option<AsymptoteSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    pub seed: Option<u64>,
    pub optimizer: Option<OptimizerSpec>,
    pub candidate: Option<CandidateSpec>,
    pub simulation: Option<SimSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub kind: ElementKind,
    pub omega_r: Option<f64>,
    pub xi: Option<f64>,
    /// Uniform reset factor: `A_rho = gamma I` (SOSRE: `diag(gamma, 1)`).
    pub gamma: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    /// Full reset matrix, row major; GSORE only.
    pub a_rho: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub realization: Realization,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemplateSpec {
    CglpPid {
        #[serde(flatten)]
        params: CglpPid<f64>,
        /// Rescale `k_p` for unit loop gain at `omega_c`.
        #[serde(default)]
        unity_crossover: bool,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Option<usize>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub restarts: Option<usize>,
    pub stall_generations: Option<usize>,
    pub search_points: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum CandidateSpec {
    Scalar { beta_prime: f64, rho_prime: f64 },
    Gsore { beta1: f64, beta2: f64, rho1: f64, rho2: f64, rho3: f64 },
}

impl CandidateSpec {
    pub fn scalar(self) -> Result<ScalarCandidate<f64>> {
        match self {
            CandidateSpec::Scalar { beta_prime, rho_prime } => Ok(ScalarCandidate { beta_prime, rho_prime }),
            CandidateSpec::Gsore { .. } => bail!("a first-order element takes a (beta_prime, rho_prime) candidate"),
        }
    }

    pub fn gsore(self) -> Result<GsoreCandidate<f64>> {
        match self {
            CandidateSpec::Gsore { beta1, beta2, rho1, rho2, rho3 } => Ok(GsoreCandidate {
                beta1,
                beta2,
                rho1,
                rho2,
                rho3,
            }),
            CandidateSpec::Scalar { .. } => bail!("a GSORE takes a (beta1, beta2, rho1, rho2, rho3) candidate"),
        }
    }
}

fn unit_step() -> Input<f64> {
    Input::Step { amplitude: 1.0 }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "unit_step")]
    pub input: Input<f64>,
    pub t_end: f64,
    pub dt: Option<f64>,
    /// Minimum time between resets; defaults to `dt`.
    pub lambda: Option<f64>,
    pub x0: Option<Vec<f64>>,
    /// Drive the element directly with the input, without the loop.
    #[serde(default)]
    pub open_loop: bool,
    /// One trace per value, with `A_rho` replaced by `gamma I`.
    pub gamma_sweep: Option<Vec<f64>>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub frf: Option<std::path::PathBuf>,
    pub frf_format: FrfFormat,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    pub asymptote: Option<AsymptoteSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.grid_points.is_some() {
            self.grid.points = o.grid_points;
        }
        if o.asymptote.is_some() {
            self.asymptote = o.asymptote;
        }
    }

    pub fn grid_points(&self) -> usize {
        self.grid.points.unwrap_or(DEFAULT_GRID_POINTS)
    }

    pub fn optimizer(&self) -> OptimizerSettings {
        let mut s = OptimizerSettings {
            seed: self.seed.unwrap_or(0),
            ..OptimizerSettings::default()
        };
        if let Some(o) = self.optimizer {
            s.population = o.population.unwrap_or(s.population);
            s.generations = o.generations.unwrap_or(s.generations);
            s.restarts = o.restarts.unwrap_or(s.restarts);
            s.stall_generations = o.stall_generations.unwrap_or(s.stall_generations);
            s.search_points = o.search_points.unwrap_or(s.search_points);
        }
        s
    }

    pub fn plant(&self, o: &Overrides) -> Result<Plant<f64>> {
        match (&self.plant, &o.frf) {
            (Some(_), Some(_)) => bail!("give the plant either in the config or with --frf, not both"),
            (Some(c), None) => Ok(Plant::Rational(RationalTf::from_coeffs(c)?)),
            (None, Some(path)) => {
                let table = resetcert::frf::load_frf(path, o.frf_format)
                    .with_context(|| format!("loading {}", path.display()))?;
                Ok(Plant::Measured(table))
            }
            (None, None) => bail!("no plant: set \"plant\" in the config or pass --frf"),
        }
    }

    pub fn element(&self) -> Result<ResetElement<f64>> {
        let Some(e) = &self.element else {
            bail!("no reset element: set \"element\" or \"template\"");
        };
        let need = |v: Option<f64>, name: &str| v.with_context(|| format!("element field '{name}' is required"));
        let el = match e.kind {
            ElementKind::Ci => ResetElement::ci(need(e.gamma, "gamma")?),
            ElementKind::Pci => ResetElement::pci(need(e.omega_r, "omega_r")?, need(e.gamma, "gamma")?)?,
            ElementKind::Gfore => ResetElement::gfore(need(e.omega_r, "omega_r")?, need(e.gamma, "gamma")?)?,
            ElementKind::Sosre => {
                ResetElement::sosre(need(e.omega_r, "omega_r")?, need(e.xi, "xi")?, need(e.gamma, "gamma")?)?
            }
            ElementKind::Gsore => {
                let a_rho = match (&e.a_rho, e.gamma, e.gamma1, e.gamma2) {
                    (Some(rows), None, None, None) => matrix(rows)?,
                    (None, Some(g), None, None) => DMatrix::from_diagonal_element(2, 2, g),
                    (None, None, Some(g1), Some(g2)) => DMatrix::from_diagonal(&DVector::from_vec(vec![g1, g2])),
                    _ => bail!("a GSORE needs exactly one of a_rho, gamma, or gamma1 with gamma2"),
                };
                ResetElement::gsore(need(e.omega_r, "omega_r")?, need(e.xi, "xi")?, a_rho)?
            }
        };
        Ok(el.with_realization(e.realization))
    }

    pub fn reset_loop(&self, o: &Overrides) -> Result<ResetLoop<f64>> {
        let plant = self.plant(o)?;
        let mut sys = match (&self.template, &self.element) {
            (Some(_), Some(_)) => bail!("give either \"element\" or \"template\", not both"),
            (Some(TemplateSpec::CglpPid { params, unity_crossover }), None) => {
                let p = if *unity_crossover {
                    params.with_unity_crossover(&plant)?
                } else {
                    params.clone()
                };
                p.reset_loop(plant)?
            }
            (None, _) => ResetLoop::new(self.element()?, plant),
        };
        if let Some(c) = &self.c_l1 {
            sys.c_l1 = RationalTf::from_coeffs(c)?;
        }
        if let Some(c) = &self.c_l2 {
            if self.template.is_some() {
                bail!("the template defines c_l2");
            }
            sys.c_l2 = RationalTf::from_coeffs(c)?;
        }
        if let Some(c) = &self.c_s {
            sys.c_s = RationalTf::from_coeffs(c)?;
        }
        sys.architecture = self.architecture;
        sys.asymptotes = self.asymptote;
        sys.open_loop_rhp = self.open_loop_rhp;
        Ok(sys)
    }

    pub fn grid(&self, sys: &ResetLoop<f64>) -> Result<Vec<f64>> {
        let n = self.grid_points();
        match (self.grid.omega_min, self.grid.omega_max) {
            (Some(lo), Some(hi)) => {
                if !(lo > 0.0 && hi > lo) {
                    bail!("grid needs 0 < omega_min < omega_max");
                }
                Ok(log_space(lo, hi, n))
            }
            (None, None) => Ok(sys.default_grid(n)?),
            _ => bail!("give both omega_min and omega_max, or neither"),
        }
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("a_rho must be square");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
