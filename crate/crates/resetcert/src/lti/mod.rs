//! Polynomials, transfer functions, realizations and closed-loop assembly.

mod closed_loop;
mod poly;
mod ss;
mod stability;
mod tf;

pub use closed_loop::{assemble_closed_loop, Architecture, ClosedLoop, LinearBlocks};
pub use poly::{Poly, TRIM_REL};
pub use ss::{char_poly, ctrb_obsv_rank, numeric_rank, to_state_space, Form, RankReport, StateSpace, RANK_REL};
pub use stability::{
    base_linear_stability, minimality_check, nyquist_stability, rational_band, LinearStability, Minimality,
    NyquistReport, CANCEL_REL,
};
pub use tf::{leading_coefficients, RationalTf, TfCoeffs};
