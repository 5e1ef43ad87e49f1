//! CgLp+PID controller template around a GSORE element.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elements::ResetElement;
use crate::frf::Plant;
use crate::lti::{Poly, RationalTf};
use crate::system::ResetLoop;
use crate::{Error, Real, Result};

/// `C_L2 = K_p (s^2 + 2 xi_d omega_d s + omega_d^2) / (s^2 + 20 omega_c s + 100 omega_c^2)
///        * (s + omega_c / 10) / s * (3 s / omega_c + 1) / (s / (3 omega_c) + 1)`
/// in series with a GSORE element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CglpPid<T> {
    pub k_p: T,
    pub omega_c: T,
    pub omega_d: T,
    pub xi_d: T,
    pub omega_r: T,
    pub xi: T,
    pub gamma1: T,
    pub gamma2: T,
}

impl<T: Real> CglpPid<T> {
    pub fn c_l2(&self) -> Result<RationalTf<T>> {
        let (wc, wd) = (self.omega_c, self.omega_d);
        if !(wc > T::zero()) || !(wd > T::zero()) {
            return Err(Error::Domain("omega_c and omega_d must be positive".into()));
        }
        let two = T::c(2.0);
        let three = T::c(3.0);
        let lead = RationalTf::new(
            Poly::new(vec![wd * wd, two * self.xi_d * wd, T::one()]),
            Poly::new(vec![T::c(100.0) * wc * wc, T::c(20.0) * wc, T::one()]),
        )?;
        let pi = RationalTf::new(Poly::new(vec![wc / T::c(10.0), T::one()]), Poly::s())?;
        let pd = RationalTf::new(
            Poly::new(vec![T::one(), three / wc]),
            Poly::new(vec![T::one(), T::one() / (three * wc)]),
        )?;
        Ok(lead.series(&pi).series(&pd).scale(self.k_p))
    }

    pub fn element(&self) -> Result<ResetElement<T>> {
        let a_rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![self.gamma1, self.gamma2]));
        ResetElement::gsore(self.omega_r, self.xi, a_rho)
    }

    /// Reset loop around `plant`.
    pub fn reset_loop(&self, plant: Plant<T>) -> Result<ResetLoop<T>> {
        let mut sys = ResetLoop::new(self.element()?, plant);
        sys.c_l2 = self.c_l2()?;
        Ok(sys)
    }

    /// Copy with `K_p` set so that the base linear loop has unit gain at
    /// `omega_c`.
    pub fn with_unity_crossover(&self, plant: &Plant<T>) -> Result<Self> {
        let mut out = self.clone();
        out.k_p = T::one();
        let l = out.reset_loop(plant.clone())?.samples(&[self.omega_c])?[0].l;
        out.k_p = T::one() / crate::scalar::cabs(l);
        Ok(out)
    }
}
