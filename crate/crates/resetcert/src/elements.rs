//! Reset element catalog: base dynamics, realizations and reset matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lti::{to_state_space, Form, Poly, RationalTf, StateSpace};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    /// Clegg integrator
    Ci,
    /// Proportional Clegg integrator
    Pci,
    Gfore,
    Gsore,
    /// GSORE with only the first state reset
    Sosre,
}

impl ElementKind {
    pub fn order(self) -> usize {
        match self {
            ElementKind::Ci | ElementKind::Pci | ElementKind::Gfore => 1,
            ElementKind::Gsore | ElementKind::Sosre => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    #[default]
    Controllable,
    Observable,
    TwoGfore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResetElement<T: Real> {
    pub kind: ElementKind,
    pub omega_r: T,
    pub xi: T,
    pub realization: Realization,
    pub a_rho: DMatrix<T>,
}

impl<T: Real> ResetElement<T> {
    fn checked(kind: ElementKind, omega_r: T, xi: T, a_rho: DMatrix<T>) -> Result<Self> {
        if kind != ElementKind::Ci && !(omega_r > T::zero()) {
            return Err(Error::Domain(format!("omega_r must be positive, got {omega_r}")));
        }
        if kind.order() == 2 && !(xi > T::zero()) {
            return Err(Error::Domain(format!("xi must be positive, got {xi}")));
        }
        let n = kind.order();
        if a_rho.nrows() != n || a_rho.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A_rho must be {n}x{n}")));
        }
        Ok(ResetElement {
            kind,
            omega_r,
            xi,
            realization: Realization::Controllable,
            a_rho,
        })
    }

    pub fn ci(gamma: T) -> Self {
        Self::checked(ElementKind::Ci, T::zero(), T::zero(), scalar(gamma)).expect("CI has no parameters")
    }

    pub fn pci(omega_r: T, gamma: T) -> Result<Self> {
        Self::checked(ElementKind::Pci, omega_r, T::zero(), scalar(gamma))
    }

    pub fn gfore(omega_r: T, gamma: T) -> Result<Self> {
        Self::checked(ElementKind::Gfore, omega_r, T::zero(), scalar(gamma))
    }

    pub fn gsore(omega_r: T, xi: T, a_rho: DMatrix<T>) -> Result<Self> {
        Self::checked(ElementKind::Gsore, omega_r, xi, a_rho)
    }

    /// GSORE with `A_rho = diag(gamma, 1)`.
    pub fn sosre(omega_r: T, xi: T, gamma: T) -> Result<Self> {
        let a_rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![gamma, T::one()]));
        Self::checked(ElementKind::Sosre, omega_r, xi, a_rho)
    }

    pub fn with_realization(mut self, realization: Realization) -> Self {
        self.realization = realization;
        self
    }

    pub fn order(&self) -> usize {
        self.kind.order()
    }

    /// `gamma` when `A_rho = gamma I`.
    pub fn uniform_gamma(&self) -> Option<T> {
        let g = self.a_rho[(0, 0)];
        (self.a_rho == DMatrix::identity(self.order(), self.order()) * g).then_some(g)
    }

    pub fn base_tf(&self) -> RationalTf<T> {
        let (w, xi) = (self.omega_r, self.xi);
        let two = T::c(2.0);
        let (num, den) = match self.kind {
            ElementKind::Ci => (Poly::one(), Poly::s()),
            ElementKind::Pci => (Poly::new(vec![w, T::one()]), Poly::s()),
            ElementKind::Gfore => (Poly::one(), Poly::new(vec![T::one(), T::one() / w])),
            ElementKind::Gsore | ElementKind::Sosre => {
                (Poly::one(), Poly::new(vec![w * w, two * xi * w, T::one()]))
            }
        };
        RationalTf::new(num, den).expect("catalog denominators are nonzero")
    }

    pub fn realization(&self) -> Result<StateSpace<T>> {
        match (self.realization, self.order()) {
            (Realization::TwoGfore, 2) => {
                let (w1, w2) = two_gfore_corners(self.omega_r, self.xi)?;
                let z = T::zero();
                let a = DMatrix::from_row_slice(2, 2, &[-w1, z, T::one(), -w2]);
                let b = DMatrix::from_row_slice(2, 1, &[T::one(), z]);
                let c = DMatrix::from_row_slice(1, 2, &[z, T::one()]);
                StateSpace::new(a, b, c, DMatrix::zeros(1, 1))
            }
            (Realization::Observable, _) => to_state_space(&self.base_tf(), Form::Observable),
            _ => to_state_space(&self.base_tf(), Form::Controllable),
        }
    }
}

fn scalar<T: Real>(g: T) -> DMatrix<T> {
    DMatrix::from_element(1, 1, g)
}

/// Corner frequencies with `w1 + w2 = 2 xi omega_r`, `w1 w2 = omega_r^2`,
/// `w1 >= w2`.
pub fn two_gfore_corners<T: Real>(omega_r: T, xi: T) -> Result<(T, T)> {
    if xi < T::one() {
        return Err(Error::RealizationUnavailable { xi: xi.f64() });
    }
    let disc = (xi * xi - T::one()).max(T::zero()).sqrt();
    let w1 = omega_r * (xi + disc);
    Ok((w1, omega_r * omega_r / w1))
}

/// Relative margin for the strict reset-matrix inequality.
pub const EIG_REL: f64 = 1e-9;

/// `A_rho^T rho A_rho - rho < 0`, strictly, with a margin relative to `||rho||`.
pub fn reset_matrix_condition<T: Real>(a_rho: &DMatrix<T>, rho: &DMatrix<T>) -> Result<bool> {
    let n = rho.nrows();
    if rho.ncols() != n || a_rho.nrows() != n || a_rho.ncols() != n {
        return Err(Error::DimensionMismatch("A_rho and rho must be square and equal size".into()));
    }
    let sym = (rho + rho.transpose()) * T::c(0.5);
    if sym.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let norm = sym.clone().symmetric_eigenvalues().iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    let m = a_rho.transpose() * &sym * a_rho - &sym;
    let m = (&m + m.transpose()) * T::c(0.5);
    let max = m.symmetric_eigenvalues().iter().fold(T::min_value().unwrap(), |a, &b| a.max(b));
    Ok(max < -T::c(EIG_REL) * norm)
}

/// Structural condition on `A_r` under partial reset.
///
/// States whose row and column of `A_rho` are those of the identity are the
/// non-reset states; the reset states' dynamics must not depend on them.
/// Pattern matching is exact.
pub fn partial_reset_structure_ok<T: Real>(a_r: &DMatrix<T>, a_rho: &DMatrix<T>) -> bool {
    let n = a_rho.nrows();
    let kept: Vec<bool> = (0..n)
        .map(|i| {
            (0..n).all(|j| {
                let id = if i == j { T::one() } else { T::zero() };
                a_rho[(i, j)] == id && a_rho[(j, i)] == id
            })
        })
        .collect();
    (0..n)
        .filter(|&i| !kept[i])
        .all(|i| (0..n).filter(|&j| kept[j]).all(|j| a_r[(i, j)] == T::zero()))
}
