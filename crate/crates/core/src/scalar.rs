//! Scalar abstraction shared by the binary64 and software high-precision paths.
//!
//! Every dynamical routine in this crate is generic over [`Real`]. `f64` is the
//! default; [`MpFloat`] is a binary floating-point number whose mantissa width
//! is chosen per run and whose exponent range is effectively unbounded.

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::ops::BitTest;
use num_complex::Complex;
use num_traits::{Num, One, Zero};

pub type C<T> = Complex<T>;
pub type C64 = Complex<f64>;

/// Real scalar with enough structure for the map, Newton, series and metric code.
pub trait Real:
    Num + Clone + fmt::Debug + PartialOrd + Neg<Output = Self> + Send + Sync + 'static
{
    /// Exact conversion from binary64 (at the ambient working precision for [`MpFloat`]).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    /// Unit roundoff of the value's mantissa.
    fn unit_roundoff(&self) -> f64;
    fn mantissa_bits(&self) -> u32;
    /// Natural logarithm of `|x|`, valid outside the binary64 exponent range.
    fn ln_abs(&self) -> f64;
    fn is_finite(&self) -> bool;
    /// Ambient precision used by `from_f64` on the current thread.
    fn ambient_bits() -> u32;
    /// Runs `f` with the ambient precision set to `bits`.
    fn with_ambient_bits<R>(bits: u32, f: impl FnOnce() -> R) -> R;
    /// Exact conversion to software precision.
    fn to_mp(&self) -> MpFloat;
    /// Natural log of the smallest magnitude that is still safely representable,
    /// or `None` when the exponent range is effectively unbounded.
    fn ln_range_floor() -> Option<f64>;
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn unit_roundoff(&self) -> f64 {
        f64::EPSILON / 2.0
    }
    fn mantissa_bits(&self) -> u32 {
        53
    }
    #[inline]
    fn ln_abs(&self) -> f64 {
        f64::abs(*self).ln()
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn ambient_bits() -> u32 {
        53
    }
    fn with_ambient_bits<R>(_bits: u32, f: impl FnOnce() -> R) -> R {
        f()
    }
    fn to_mp(&self) -> MpFloat {
        MpFloat::from_f64_bits(*self, 53)
    }
    fn ln_range_floor() -> Option<f64> {
        Some(-640.0)
    }
}

type Big = FBig<HalfEven, 2>;

thread_local! {
    static AMBIENT_BITS: Cell<u32> = const { Cell::new(128) };
}

/// Software binary floating point with a per-value mantissa width.
///
/// Binary operations round to the wider of the two operand widths.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct MpFloat(Big);

impl MpFloat {
    pub fn from_f64_bits(x: f64, bits: u32) -> Self {
        assert!(x.is_finite(), "MpFloat from non-finite f64");
        let v = Big::try_from(x).expect("finite f64");
        MpFloat(v.with_precision(bits.max(53) as usize).value())
    }

    pub fn with_bits(&self, bits: u32) -> Self {
        MpFloat(self.0.clone().with_precision(bits as usize).value())
    }

    pub fn precision(&self) -> u32 {
        self.0.precision() as u32
    }
}

impl fmt::Debug for MpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}[{}b]", self.to_f64(), self.precision())
    }
}

macro_rules! mp_binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for MpFloat {
            type Output = MpFloat;
            #[inline]
            fn $m(self, rhs: MpFloat) -> MpFloat {
                MpFloat(self.0 $op rhs.0)
            }
        }
        impl<'a> $tr<&'a MpFloat> for &'a MpFloat {
            type Output = MpFloat;
            #[inline]
            fn $m(self, rhs: &'a MpFloat) -> MpFloat {
                MpFloat(&self.0 $op &rhs.0)
            }
        }
    };
}
mp_binop!(Add, add, +);
mp_binop!(Sub, sub, -);
mp_binop!(Mul, mul, *);
mp_binop!(Div, div, /);

impl Rem for MpFloat {
    type Output = MpFloat;
    fn rem(self, rhs: MpFloat) -> MpFloat {
        let q = (&self.0 / &rhs.0).trunc();
        MpFloat(self.0 - q * rhs.0)
    }
}

impl Neg for MpFloat {
    type Output = MpFloat;
    #[inline]
    fn neg(self) -> MpFloat {
        MpFloat(-self.0)
    }
}

impl Zero for MpFloat {
    fn zero() -> Self {
        MpFloat::from_f64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.0.repr().significand().is_zero()
    }
}

impl One for MpFloat {
    fn one() -> Self {
        MpFloat::from_f64(1.0)
    }
}

impl Num for MpFloat {
    type FromStrRadixErr = std::num::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        let _ = radix;
        s.parse::<f64>().map(MpFloat::from_f64)
    }
}

impl Real for MpFloat {
    fn from_f64(x: f64) -> Self {
        MpFloat::from_f64_bits(x, AMBIENT_BITS.with(|b| b.get()))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }
    fn sqrt(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        MpFloat(self.0.sqrt())
    }
    fn abs(&self) -> Self {
        if self.0 < Big::ZERO {
            MpFloat(-self.0.clone())
        } else {
            self.clone()
        }
    }
    fn unit_roundoff(&self) -> f64 {
        (-(self.precision() as f64)).exp2()
    }
    fn mantissa_bits(&self) -> u32 {
        self.precision()
    }
    fn ln_abs(&self) -> f64 {
        let repr = self.0.repr();
        let sig = repr.significand().clone().into_parts().1;
        if sig.is_zero() {
            return f64::NEG_INFINITY;
        }
        let len = sig.bit_len();
        let shift = len.saturating_sub(62);
        let top = (sig >> shift).to_f64().value();
        top.ln() + (repr.exponent() as f64 + shift as f64) * std::f64::consts::LN_2
    }
    fn is_finite(&self) -> bool {
        self.0.repr().is_finite()
    }
    fn ambient_bits() -> u32 {
        AMBIENT_BITS.with(|b| b.get())
    }
    fn with_ambient_bits<R>(bits: u32, f: impl FnOnce() -> R) -> R {
        let prev = AMBIENT_BITS.with(|b| b.replace(bits.max(53)));
        let out = f();
        AMBIENT_BITS.with(|b| b.set(prev));
        out
    }
    fn to_mp(&self) -> MpFloat {
        self.clone()
    }
    fn ln_range_floor() -> Option<f64> {
        None
    }
}

#[inline]
pub fn re<T: Real>(x: f64) -> T {
    T::from_f64(x)
}

#[inline]
pub fn cx<T: Real>(z: C64) -> C<T> {
    C::new(T::from_f64(z.re), T::from_f64(z.im))
}

#[inline]
pub fn to_c64<T: Real>(z: &C<T>) -> C64 {
    C64::new(z.re.to_f64(), z.im.to_f64())
}

#[inline]
pub fn cabs<T: Real>(z: &C<T>) -> T {
    z.norm_sqr().sqrt()
}

/// `|z|` as binary64 without intermediate overflow; `inf` only when `|z|` itself is.
pub fn cabs_f64<T: Real>(z: &C<T>) -> f64 {
    let v = cabs(z).to_f64();
    if v.is_finite() && (v == 0.0 || v > 1e-300) {
        return v;
    }
    let (a, b) = (z.re.abs(), z.im.abs());
    let m = if a > b { a.clone() } else { b.clone() };
    if m.is_zero() {
        return 0.0;
    }
    let (ra, rb) = (a / m.clone(), b / m.clone());
    let scaled = (ra.clone() * ra + rb.clone() * rb).sqrt().to_f64();
    let mf = m.to_f64();
    if mf.is_finite() && mf > 1e-300 {
        mf * scaled
    } else {
        (m.ln_abs() + scaled.ln()).exp()
    }
}

/// Principal square root, stable for either sign of the real part.
pub fn csqrt<T: Real>(z: &C<T>) -> C<T> {
    let r = cabs(z);
    if r.is_zero() {
        return C::new(T::zero(), T::zero());
    }
    let two = T::from_f64(2.0);
    if z.re >= T::zero() {
        let t = ((r + z.re.clone()) / two.clone()).sqrt();
        let im = z.im.clone() / (two * t.clone());
        C::new(t, im)
    } else {
        let t = ((r - z.re.clone()) / two.clone()).sqrt();
        let re = z.im.abs() / (two * t.clone());
        let im = if z.im < T::zero() { -t } else { t };
        C::new(re, im)
    }
}

/// Euclidean norm of a complex 2-vector.
pub fn norm2<T: Real>(v: &[C<T>; 2]) -> T {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

pub fn norm2_f64<T: Real>(v: &[C<T>; 2]) -> f64 {
    norm2(v).to_f64()
}

pub fn max_abs_f64<T: Real>(v: &[C<T>]) -> f64 {
    v.iter().map(cabs_f64).fold(0.0, f64::max)
}

/// Converts a binary64 complex value into `T`, keeping the exact binary64 value.
pub fn lift_c<T: Real>(z: C64) -> C<T> {
    cx(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mp_arithmetic_tracks_width() {
        let a = MpFloat::from_f64_bits(2.0, 200);
        let s = a.sqrt();
        assert_eq!(s.precision(), 200);
        let back = &s * &s;
        let err = (back - MpFloat::from_f64_bits(2.0, 200)).abs();
        assert!(err.to_f64() < 1e-58);
    }

    #[test]
    fn mp_ln_abs_beyond_binary64_range() {
        let mut x = MpFloat::from_f64_bits(1e300, 100);
        for _ in 0..4 {
            x = &x * &x;
        }
        let expect = 16.0 * 300.0 * std::f64::consts::LN_10;
        assert!((x.ln_abs() - expect).abs() < 1e-9 * expect);
        let tiny = MpFloat::one() / x;
        assert!((tiny.ln_abs() + expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn csqrt_matches_std() {
        for &(a, b) in &[(3.0, 4.0), (-3.0, 4.0), (-3.0, -4.0), (0.0, -2.0), (-1.0, 0.0)] {
            let z = C64::new(a, b);
            let s = csqrt(&z);
            let r = z.sqrt();
            assert!((s - r).norm() < 1e-15, "{z} {s} {r}");
        }
        let z: C<MpFloat> = MpFloat::with_ambient_bits(160, || cx(C64::new(-3.0, 4.0)));
        let s = csqrt(&z);
        assert!((to_c64(&s) - C64::new(1.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn ambient_bits_scope() {
        let v = MpFloat::with_ambient_bits(300, || MpFloat::from_f64(1.5));
        assert_eq!(v.precision(), 300);
        assert_eq!(MpFloat::ambient_bits(), 128);
    }
}
