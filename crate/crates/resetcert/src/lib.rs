//! Stability certification of reset control systems from frequency-response data.
//!
//! The crate covers the whole path from a loop description to a verdict:
//!
//! * [`lti`]: polynomials, rational transfer functions, realizations and the
//!   hybrid closed-loop matrices.
//! * [`elements`]: CI, PCI, GFORE, GSORE and SOSRE reset elements.
//! * [`frf`]: measured frequency responses and loop composition.
//! * [`nsv`]: the Nyquist stability vector, Type I/II classification and the
//!   first-order verdict.
//! * [`hbeta`]: direct verification of the H-beta condition for a candidate.
//! * [`gsore`]: Type III/IV/V certification for second-order elements.
//! * [`sim`]: fixed-step hybrid simulation with zero-crossing resets.
//!
//! Numerical code is generic over [`Real`]; the `*64` aliases below fix it to
//! `f64`, which is what the file formats and the command-line tool use.

pub mod elements;
pub mod error;
pub mod frf;
pub mod gsore;
pub mod hbeta;
pub mod limits;
pub mod lti;
pub mod nsv;
pub mod sim;
pub mod system;
pub mod template;

mod scalar;

pub use error::{Error, Result};
pub use nalgebra;
pub use num_complex::Complex;
pub use scalar::Real;

pub type Poly64 = lti::Poly<f64>;
pub type RationalTf64 = lti::RationalTf<f64>;
pub type StateSpace64 = lti::StateSpace<f64>;
pub type ClosedLoop64 = lti::ClosedLoop<f64>;
pub type ResetElement64 = elements::ResetElement<f64>;
pub type FrfTable64 = frf::FrfTable<f64>;
pub type LoopSample64 = frf::LoopSample<f64>;
pub type NsvSample64 = nsv::NsvSample<f64>;
pub type GsoreProblem64 = gsore::GsoreProblem<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type SimTrace64 = sim::SimTrace<f64>;

pub type RationalTf32 = lti::RationalTf<f32>;
pub type StateSpace32 = lti::StateSpace<f32>;
