//! Floating-point abstraction shared by every module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Real scalar usable by the analytical pipeline and the simulators.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    /// Draw from the unit-mean exponential distribution.
    fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Draw from the standard normal distribution.
    fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Draw uniformly from `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Complementary error function.
    fn erfc(self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }
            #[inline]
            fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }
            #[inline]
            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
            #[inline]
            fn erfc(self) -> Self {
                statrs::function::erf::erfc(self as f64) as $t
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Convert an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Convert a count into `T`.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
