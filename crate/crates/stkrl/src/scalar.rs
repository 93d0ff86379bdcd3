use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar every numeric routine in this crate is generic over.
///
/// `f32` and `f64` are the only intended implementors; checkpoints always
/// store `f64` on disk, so both widths round-trip exactly through the same
/// file format.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the active scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 must convert into the scalar type")
}

/// Converts the active scalar type back into `f64` (for reports and storage).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar must convert into f64")
}
