//! Scalar abstraction: the numeric kernels are generic over the floating
//! point type, with `f64` as the default used by the CLI and harness.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + fmt::Debug + fmt::Display + fmt::LowerExp + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; panics only for values outside the
    /// target type's range, which never occurs for the constants we feed it.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    fn of_u64(x: u64) -> Self {
        Self::from_u64(x).expect("u64 not representable")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize not representable")
    }

    fn two() -> Self {
        Self::of(2.0)
    }

    fn half() -> Self {
        Self::of(0.5)
    }

    /// Exact power of two, `2^e` (negative exponents allowed).
    fn exp2i(e: i32) -> Self {
        Self::two().powi(e)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Formats a scalar with 17 significant digits, the round-trip-exact width
/// for `f64`, used by every persisted file format.
pub fn fmt_g17<F: Real>(x: F) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp2i_is_exact() {
        assert_eq!(<f64 as Real>::exp2i(-3), 0.125);
        assert_eq!(<f32 as Real>::exp2i(4), 16.0f32);
    }

    #[test]
    fn g17_round_trips_f64() {
        let xs = [std::f64::consts::PI, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300];
        for &x in &xs {
            let s = fmt_g17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
