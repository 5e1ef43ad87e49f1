use nalgebra as na;
use num_traits as nt;

/// Floating-point scalar accepted by the numerical core.
pub trait Real:
    Copy
    + na::RealField
    + nt::FromPrimitive
    + nt::ToPrimitive
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        na::convert(x)
    }

    #[inline]
    fn f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|z|` without going through `num_traits::Float`.
#[inline]
pub(crate) fn cabs<T: Real>(z: num_complex::Complex<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub(crate) fn carg<T: Real>(z: num_complex::Complex<T>) -> T {
    z.im.atan2(z.re)
}
