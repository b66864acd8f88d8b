//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All model, solver, asymptotic and isotonic code is written against
//! [`Scalar`], which is implemented for `f32`, `f64` and the extended
//! precision [`DoubleDouble`]. The latter carries roughly 32 significant
//! digits and is what the round-trip checks use when power sums must be
//! represented without the rounding that a plain `f64` imposes.

use std::cmp::Ordering;
use std::fmt::{self, Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Num, NumCast, One, ToPrimitive, Zero};

/// Real scalar usable by the estimation pipeline.
pub trait Scalar:
    Num
    + NumCast
    + Copy
    + PartialOrd
    + Debug
    + Display
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn epsilon() -> Self;
    fn is_finite(self) -> bool;

    /// Lossy conversion from an `f64` literal or measurement.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    fn powi(self, n: u32) -> Self {
        let mut base = self;
        let mut e = n;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    fn from_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Tolerance floor: `tol` or a few ulps of the type, whichever is larger.
    fn tolerance(tol: f64) -> Self {
        Self::of(tol).max(Self::epsilon() * Self::of(16.0))
    }
}

macro_rules! impl_scalar_float {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
            #[inline]
            fn powi(self, n: u32) -> Self {
                <$t>::powi(self, n as i32)
            }
        }
    };
}

impl_scalar_float!(f32);
impl_scalar_float!(f64);

/// Unevaluated sum `hi + lo` of two `f64` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Display::fmt(&self.hi, f)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        Self::renorm(p, e)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        // long division with three partial quotients
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Self::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 } + Self::from_f64(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        let q = (self / rhs).hi.trunc();
        self - rhs * Self::from_f64(q)
    }
}

macro_rules! dd_assign {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for DoubleDouble {
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}
dd_assign!(AddAssign, add_assign, +);
dd_assign!(SubAssign, sub_assign, -);
dd_assign!(MulAssign, mul_assign, *);
dd_assign!(DivAssign, div_assign, /);
dd_assign!(RemAssign, rem_assign, %);

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::from_f64)
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        self.hi.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.hi.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl NumCast for DoubleDouble {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        n.to_f64().map(Self::from_f64)
    }
}

impl Scalar for DoubleDouble {
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from_f64(self.hi.sqrt());
        }
        // one Newton step on top of the f64 root
        let x = Self::from_f64(self.hi.sqrt());
        let half = Self::from_f64(0.5);
        x + (self - x * x) / x * half
    }

    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    fn epsilon() -> Self {
        // 2^-104
        Self::from_f64(4.930_380_657_631_324e-32)
    }

    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn of(x: f64) -> Self {
        Self::from_f64(x)
    }

    fn to_f64_lossy(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_keeps_extra_digits() {
        let third = DoubleDouble::one() / DoubleDouble::of(3.0);
        let back = third * DoubleDouble::of(3.0);
        assert!((back - DoubleDouble::one()).abs() < DoubleDouble::of(1e-30));
        // 0.1 is not representable; the residual after subtracting the f64 value is tiny but nonzero
        let tenth = DoubleDouble::one() / DoubleDouble::of(10.0);
        assert!(tenth.lo() != 0.0);
    }

    #[test]
    fn sqrt_squares_back() {
        let two = DoubleDouble::of(2.0);
        let r = two.sqrt();
        assert!((r * r - two).abs() < DoubleDouble::of(1e-30));
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = DoubleDouble::of(0.7);
        let mut p = DoubleDouble::one();
        for _ in 0..9 {
            p *= x;
        }
        assert!((x.powi(9) - p).abs() < DoubleDouble::of(1e-30));
        assert_eq!(2.0f64.powi(0), 1.0);
    }

    #[test]
    fn ordering_uses_low_word() {
        let a = DoubleDouble::one();
        let b = a + DoubleDouble::of(1e-20);
        assert!(b > a);
        assert!(a < b);
    }

    #[test]
    fn tolerance_floor_depends_on_type() {
        assert_eq!(<f64 as Scalar>::tolerance(1e-12), 1e-12);
        assert!(<f32 as Scalar>::tolerance(1e-12) > 1e-7);
    }
}
