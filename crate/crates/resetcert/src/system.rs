//! A reset control loop described by its blocks: the common input of the
//! classifier, the certifier and the oracle.

use crate::elements::ResetElement;
use crate::frf::{compose_loop, log_space, AsymptoteSpec, ControllerBlocks, LoopSample, Plant};
use crate::lti::{assemble_closed_loop, rational_band, Architecture, ClosedLoop, LinearBlocks, RationalTf};
use crate::{Error, Real, Result};

/// Number of points in the default frequency grid.
pub const DEFAULT_GRID_POINTS: usize = 2000;

#[derive(Clone, Debug)]
pub struct ResetLoop<T: Real> {
    pub element: ResetElement<T>,
    pub c_l1: RationalTf<T>,
    pub c_l2: RationalTf<T>,
    pub c_s: RationalTf<T>,
    pub plant: Plant<T>,
    pub architecture: Architecture,
    /// Plant slopes outside a measured band.
    pub asymptotes: Option<AsymptoteSpec>,
    /// Open-loop RHP poles, needed for the Nyquist count on measured plants.
    pub open_loop_rhp: usize,
}

impl<T: Real> ResetLoop<T> {
    pub fn new(element: ResetElement<T>, plant: Plant<T>) -> Self {
        ResetLoop {
            element,
            c_l1: RationalTf::one(),
            c_l2: RationalTf::one(),
            c_s: RationalTf::one(),
            plant,
            architecture: Architecture::Standard,
            asymptotes: None,
            open_loop_rhp: 0,
        }
    }

    pub fn blocks(&self) -> ControllerBlocks<T> {
        ControllerBlocks {
            c_l1: self.c_l1.clone(),
            c_r: self.element.base_tf(),
            c_l2: self.c_l2.clone(),
            c_s: self.c_s.clone(),
        }
    }

    /// `C_L1 C_R C_L2 G`, when the plant is rational.
    pub fn loop_tf(&self) -> Option<RationalTf<T>> {
        match &self.plant {
            Plant::Rational(g) => Some(self.blocks().controller().series(g)),
            Plant::Measured(_) => None,
        }
    }

    /// Rational stand-ins for `L` near `omega -> 0` and `omega -> inf`.
    ///
    /// Exact for rational plants. Measured plants need declared slopes.
    pub fn asymptotic_loops(&self) -> Result<Option<(RationalTf<T>, RationalTf<T>)>> {
        match (&self.plant, self.asymptotes) {
            (Plant::Rational(_), _) => {
                let l = self.loop_tf().expect("rational plant");
                Ok(Some((l.clone(), l)))
            }
            (Plant::Measured(t), Some(spec)) => {
                let (lo, hi) = t.asymptotic_models(spec)?;
                let c = self.blocks().controller();
                Ok(Some((c.series(&lo), c.series(&hi))))
            }
            (Plant::Measured(_), None) => Ok(None),
        }
    }

    /// Log-spaced grid over the rational band of `L`, or the measured band.
    pub fn default_grid(&self, points: usize) -> Result<Vec<T>> {
        match &self.plant {
            Plant::Rational(_) => {
                let (lo, hi) = rational_band(&self.loop_tf().expect("rational plant"));
                Ok(log_space(T::c(lo), T::c(hi), points))
            }
            Plant::Measured(t) => {
                let (lo, hi) = t.band();
                Ok(log_space(lo, hi, points))
            }
        }
    }

    pub fn samples(&self, grid: &[T]) -> Result<Vec<LoopSample<T>>> {
        compose_loop(&self.plant, &self.blocks(), grid)
    }

    /// `C_s(0)`.
    pub fn k_s0(&self) -> Result<T> {
        self.c_s.dc_value()
    }

    /// Whether `C_L1 C_L2 G` has a pole at the origin. `None` for a measured
    /// plant without declared slopes.
    pub fn origin_pole(&self) -> Result<Option<bool>> {
        let lin = self.c_l1.series(&self.c_l2);
        Ok(match &self.plant {
            Plant::Rational(g) => Some(lin.series(g).origin_poles() > 0),
            Plant::Measured(t) => match self.asymptotes {
                Some(spec) => Some(lin.series(&t.asymptotic_models(spec)?.0).origin_poles() > 0),
                None => None,
            },
        })
    }

    /// Relative degree of `L C_s`.
    pub fn n_minus_m(&self) -> Result<Option<isize>> {
        Ok(self
            .asymptotic_loops()?
            .map(|(_, hi)| hi.series(&self.c_s).relative_degree()))
    }

    pub fn closed_loop(&self) -> Result<ClosedLoop<T>> {
        let g = match &self.plant {
            Plant::Rational(g) => g.clone(),
            Plant::Measured(_) => {
                return Err(Error::Config("a time-domain model needs a rational plant".into()))
            }
        };
        let blocks = LinearBlocks {
            c_l1: self.c_l1.clone(),
            c_l2: self.c_l2.clone(),
            plant: g,
            c_s: self.c_s.clone(),
        };
        assemble_closed_loop(&self.element.realization()?, &self.element.a_rho, &blocks, self.architecture)
    }
}
