use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ss::{to_state_space, Form, StateSpace};
use super::tf::RationalTf;
use crate::{Error, Real, Result};

/// Where the shaping filter sits relative to the reset element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// `C_s` filters the reset-element input to produce the reset trigger.
    #[default]
    Standard,
    /// `C_s` is in series before the reset element; the trigger is the
    /// output of `C_L1`.
    Modified,
}

/// Linear blocks surrounding the reset element: `C_L1 -> C_R -> C_L2 -> G`.
#[derive(Clone, Debug)]
pub struct LinearBlocks<T: Real> {
    pub c_l1: RationalTf<T>,
    pub c_l2: RationalTf<T>,
    pub plant: RationalTf<T>,
    pub c_s: RationalTf<T>,
}

impl<T: Real> LinearBlocks<T> {
    pub fn with_plant(plant: RationalTf<T>) -> Self {
        LinearBlocks {
            c_l1: RationalTf::one(),
            c_l2: RationalTf::one(),
            plant,
            c_s: RationalTf::one(),
        }
    }

    /// `C_L1 C_L2 G`
    pub fn linear_part(&self) -> RationalTf<T> {
        self.c_l1.series(&self.c_l2).series(&self.plant)
    }
}

/// Hybrid closed loop with state `x = [x_r; zeta]`.
///
/// Flow: `x' = A x + B w`, `w = [r; d]`. Jump: `x+ = A_rho x` when
/// `e_r = C_e x + d_e r` crosses zero.
#[derive(Clone, Debug)]
pub struct ClosedLoop<T: Real> {
    pub a_bar: DMatrix<T>,
    pub b_bar: DMatrix<T>,
    pub c_bar: DMatrix<T>,
    pub c_e_bar: DMatrix<T>,
    pub a_rho_bar: DMatrix<T>,
    pub d_e: T,
    /// Output feedthrough from `w`; zero for a loop closed around a strictly
    /// proper plant.
    pub d_y: [T; 2],
    pub n_r: usize,
}

struct Block<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: T,
}

fn block<T: Real>(tf: &RationalTf<T>) -> Result<Block<T>> {
    let ss = to_state_space(tf, Form::Controllable)?;
    Ok(Block {
        d: ss.d0(),
        a: ss.a,
        b: ss.b,
        c: ss.c,
    })
}

impl<T: Real> ClosedLoop<T> {
    pub fn order(&self) -> usize {
        self.a_bar.nrows()
    }

    /// Reset element driven directly by `r`: `e_r = r`, `y = u_r`.
    pub fn open_loop(reset: &StateSpace<T>, a_rho: &DMatrix<T>) -> Result<Self> {
        let n = reset.order();
        if a_rho.nrows() != n || a_rho.ncols() != n {
            return Err(Error::DimensionMismatch("A_rho must match the reset element order".into()));
        }
        let mut b_bar = DMatrix::<T>::zeros(n, 2);
        b_bar.column_mut(0).copy_from(&reset.b.column(0));
        Ok(ClosedLoop {
            a_bar: reset.a.clone(),
            b_bar,
            c_bar: reset.c.clone(),
            c_e_bar: DMatrix::zeros(1, n),
            a_rho_bar: a_rho.clone(),
            d_e: T::one(),
            d_y: [reset.d0(), T::zero()],
            n_r: n,
        })
    }

    /// The same loop with the jump map disabled.
    pub fn base_linear(&self) -> Self {
        let mut out = self.clone();
        out.a_rho_bar = DMatrix::identity(self.order(), self.order());
        out
    }

    /// `C_bar (sI - A_bar)^-1 B_bar[:, 0]`, the reference-to-output transfer
    /// function of the base linear system.
    pub fn reference_tf(&self) -> Result<RationalTf<T>> {
        let ss = StateSpace::new(
            self.a_bar.clone(),
            self.b_bar.columns(0, 1).into_owned(),
            self.c_bar.clone(),
            DMatrix::from_element(1, 1, self.d_y[0]),
        )?;
        ss.to_tf()
    }
}

/// Builds the closed-loop matrices for `reset` inside `blocks`.
///
/// The linear part has state `zeta = [x_L1; x_s; x_L2; x_G]`, realized in
/// controllable form block by block.
pub fn assemble_closed_loop<T: Real>(
    reset: &StateSpace<T>,
    a_rho: &DMatrix<T>,
    blocks: &LinearBlocks<T>,
    arch: Architecture,
) -> Result<ClosedLoop<T>> {
    let n_r = reset.order();
    if a_rho.nrows() != n_r || a_rho.ncols() != n_r {
        return Err(Error::DimensionMismatch(format!(
            "A_rho is {}x{}, reset element has order {n_r}",
            a_rho.nrows(),
            a_rho.ncols()
        )));
    }
    if !blocks.plant.is_strictly_proper() {
        return Err(Error::NonStrictlyProperPlant);
    }
    let l1 = block(&blocks.c_l1)?;
    let cs = block(&blocks.c_s)?;
    let l2 = block(&blocks.c_l2)?;
    let g = block(&blocks.plant)?;
    let (n1, ns, n2, ng) = (l1.a.nrows(), cs.a.nrows(), l2.a.nrows(), g.a.nrows());
    let np = n1 + ns + n2 + ng;
    let (o1, os, o2, og) = (0, n1, n1 + ns, n1 + ns + n2);

    // p = output of C_L1 = P zeta + D1 r
    let mut p = DMatrix::<T>::zeros(1, np);
    p.view_mut((0, o1), (1, n1)).copy_from(&l1.c);
    p.view_mut((0, og), (1, ng)).copy_from(&(&g.c * (-l1.d)));
    // q = output of C_s driven by p = Q zeta + Ds D1 r
    let mut q = &p * cs.d;
    q.view_mut((0, os), (1, ns)).copy_from(&cs.c);

    let mut a = DMatrix::<T>::zeros(np, np);
    a.view_mut((o1, o1), (n1, n1)).copy_from(&l1.a);
    a.view_mut((o1, og), (n1, ng)).copy_from(&(-(&l1.b * &g.c)));
    a.view_mut((os, 0), (ns, np)).copy_from(&(&cs.b * &p));
    let diag = a.view((os, os), (ns, ns)) + &cs.a;
    a.view_mut((os, os), (ns, ns)).copy_from(&diag);
    a.view_mut((o2, o2), (n2, n2)).copy_from(&l2.a);
    a.view_mut((og, o2), (ng, n2)).copy_from(&(&g.b * &l2.c));
    a.view_mut((og, og), (ng, ng)).copy_from(&g.a);

    let mut b_u = DMatrix::<T>::zeros(np, 1);
    b_u.view_mut((o2, 0), (n2, 1)).copy_from(&l2.b);
    b_u.view_mut((og, 0), (ng, 1)).copy_from(&(&g.b * l2.d));

    let mut b_w = DMatrix::<T>::zeros(np, 2);
    b_w.view_mut((o1, 0), (n1, 1)).copy_from(&l1.b);
    b_w.view_mut((os, 0), (ns, 1)).copy_from(&(&cs.b * l1.d));
    b_w.view_mut((og, 1), (ng, 1)).copy_from(&g.b);

    let mut c = DMatrix::<T>::zeros(1, np);
    c.view_mut((0, og), (1, ng)).copy_from(&g.c);

    let (c_u, d_1, c_e, d_e) = match arch {
        Architecture::Standard => (p.clone(), l1.d, q.clone(), cs.d * l1.d),
        Architecture::Modified => (q.clone(), cs.d * l1.d, p.clone(), l1.d),
    };

    let (ar, br, cr, dr) = (&reset.a, &reset.b, &reset.c, reset.d0());
    let n = n_r + np;
    let mut a_bar = DMatrix::<T>::zeros(n, n);
    a_bar.view_mut((0, 0), (n_r, n_r)).copy_from(ar);
    a_bar.view_mut((0, n_r), (n_r, np)).copy_from(&(br * &c_u));
    a_bar.view_mut((n_r, 0), (np, n_r)).copy_from(&(&b_u * cr));
    a_bar
        .view_mut((n_r, n_r), (np, np))
        .copy_from(&(&a + &b_u * &c_u * dr));

    let mut b_bar = DMatrix::<T>::zeros(n, 2);
    b_bar.view_mut((0, 0), (n_r, 1)).copy_from(&(br * d_1));
    b_bar.view_mut((n_r, 0), (np, 2)).copy_from(&b_w);
    let extra = &b_u * (dr * d_1);
    for i in 0..np {
        b_bar[(n_r + i, 0)] += extra[(i, 0)];
    }

    let mut c_bar = DMatrix::<T>::zeros(1, n);
    c_bar.view_mut((0, n_r), (1, np)).copy_from(&c);
    let mut c_e_bar = DMatrix::<T>::zeros(1, n);
    c_e_bar.view_mut((0, n_r), (1, np)).copy_from(&c_e);

    let mut a_rho_bar = DMatrix::<T>::identity(n, n);
    a_rho_bar.view_mut((0, 0), (n_r, n_r)).copy_from(a_rho);

    Ok(ClosedLoop {
        a_bar,
        b_bar,
        c_bar,
        c_e_bar,
        a_rho_bar,
        d_e,
        d_y: [T::zero(), T::zero()],
        n_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Poly;

    fn tf(n: &[f64], d: &[f64]) -> RationalTf<f64> {
        RationalTf::from_f64(n, d).unwrap()
    }

    fn gfore(wr: f64) -> StateSpace<f64> {
        StateSpace::from_rows(&[&[-wr]], &[1.0], &[wr], 0.0).unwrap()
    }

    #[test]
    fn dimensions_and_reset_map() {
        let blocks = LinearBlocks::with_plant(tf(&[1.0], &[1.0, 2.0, 1.0]));
        let a_rho = DMatrix::from_element(1, 1, 0.3);
        let cl = assemble_closed_loop(&gfore(1.0), &a_rho, &blocks, Architecture::Standard).unwrap();
        assert_eq!(cl.order(), 3);
        assert_eq!(cl.a_rho_bar, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, 1.0, 1.0])));
    }

    #[test]
    fn non_strictly_proper_plant_rejected() {
        let blocks = LinearBlocks::with_plant(tf(&[1.0, 1.0], &[2.0, 1.0]));
        let a_rho = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            assemble_closed_loop(&gfore(1.0), &a_rho, &blocks, Architecture::Standard),
            Err(Error::NonStrictlyProperPlant)
        ));
    }

    // Base closed loop y/r must equal L/(1+L) computed with polynomials.
    fn check_reference_tf(blocks: &LinearBlocks<f64>, reset_tf: &RationalTf<f64>, arch: Architecture) {
        let reset = to_state_space(reset_tf, Form::Controllable).unwrap();
        let n_r = reset.order();
        let cl = assemble_closed_loop(&reset, &DMatrix::identity(n_r, n_r), blocks, arch).unwrap();
        let got = cl.reference_tf().unwrap();
        let mut l = blocks.c_l1.series(reset_tf).series(&blocks.c_l2).series(&blocks.plant);
        if arch == Architecture::Modified {
            l = l.series(&blocks.c_s);
        }
        let want_num = l.num().clone();
        let want_den = l.return_difference_poly();
        for &w in &[0.1, 0.7, 1.3, 4.0, 20.0] {
            let s = num_complex::Complex::new(0.0, w);
            let a = got.eval(w).unwrap();
            let b = want_num.eval(s) / want_den.eval(s);
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1e-3), "w={w}: {a} vs {b}");
        }
    }

    #[test]
    fn matches_polynomial_interconnection() {
        let blocks = LinearBlocks {
            c_l1: tf(&[2.0, 1.0], &[5.0, 1.0]),
            c_l2: tf(&[0.5, 1.0], &[0.0, 1.0]),
            plant: tf(&[3.0], &[2.0, 3.0, 1.0]),
            c_s: tf(&[4.0, 2.0], &[1.0, 0.5]),
        };
        let gsore = RationalTf::new(Poly::one(), Poly::from_f64(&[1.0, 1.2, 1.0])).unwrap();
        check_reference_tf(&blocks, &gsore, Architecture::Standard);
        check_reference_tf(&blocks, &gsore, Architecture::Modified);
        let pci = tf(&[2.0, 1.0], &[0.0, 1.0]);
        check_reference_tf(&blocks, &pci, Architecture::Standard);
    }

    #[test]
    fn coupling_block_position() {
        // GSORE + third-order linear part: 5x5 with B_u C_r below the reset block.
        let blocks = LinearBlocks::with_plant(tf(&[1.0], &[1.0, 3.0, 3.0, 1.0]));
        let reset = to_state_space(&tf(&[1.0], &[1.0, 2.0, 1.0]), Form::Controllable).unwrap();
        let cl = assemble_closed_loop(&reset, &DMatrix::identity(2, 2), &blocks, Architecture::Standard).unwrap();
        assert_eq!(cl.order(), 5);
        // plant input b = e_1, C_r = [0, 1]
        assert_eq!(cl.a_bar[(2, 1)], 1.0);
        assert_eq!(cl.a_bar[(2, 0)], 0.0);
        // reset input driven by -y: B_r C_u with C_u = -C_G
        assert_eq!(cl.a_bar[(0, 4)], -1.0);
    }
}
