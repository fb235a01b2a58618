//! Working-precision scalars.
//!
//! Covariance propagation is generic over [`Real`], implemented for plain
//! `f64` and for [`Big`], a thin wrapper over an arbitrary-precision binary
//! float whose exponent range is effectively unbounded.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, RoundingMode, Sign};

const RM: RoundingMode = RoundingMode::ToEven;

pub trait Real:
    Clone
    + Send
    + Sync
    + fmt::Debug
    + PartialOrd
    + 'static
    + Add<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + Sub<Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + Mul<Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + Div<Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + Neg<Output = Self>
{
    /// Largest binary exponent the type can hold, `None` if effectively unbounded.
    const MAX_EXP: Option<i64>;

    fn from_f64_bits(x: f64, bits: u32) -> Self;
    fn bits(&self) -> u32;
    fn with_bits(&self, bits: u32) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_finite(&self) -> bool;
    /// `x = m * 2^e` with `0.5 <= |m| < 1`; zero maps to `(0.0, 0)`.
    fn frexp(&self) -> (f64, i64);
    /// Multiply by `2^k` exactly.
    fn ldexp(&self, k: i64) -> Self;

    /// Constant at the precision of `self`.
    fn lift(&self, x: f64) -> Self {
        Self::from_f64_bits(x, self.bits())
    }

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }

    /// `log2 |x|`, valid outside the `f64` exponent range.
    fn log2_abs(&self) -> f64 {
        let (m, e) = self.frexp();
        m.abs().log2() + e as f64
    }

    fn is_negative(&self) -> bool {
        self.frexp().0 < 0.0
    }
}

/// `m * 2^e` without intermediate overflow.
pub fn ldexp_f64(m: f64, e: i64) -> f64 {
    let mut x = m;
    let mut k = e;
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(k as i32)
}

pub fn frexp_f64(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        let (m, e) = frexp_f64(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let e = raw - 1022;
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, e)
}

impl Real for f64 {
    const MAX_EXP: Option<i64> = Some(1024);

    fn from_f64_bits(x: f64, _bits: u32) -> Self {
        x
    }
    fn bits(&self) -> u32 {
        53
    }
    fn with_bits(&self, _bits: u32) -> Self {
        *self
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn frexp(&self) -> (f64, i64) {
        frexp_f64(*self)
    }
    fn ldexp(&self, k: i64) -> Self {
        ldexp_f64(*self, k)
    }
}

/// Arbitrary-precision float. Binary operations round to the wider operand.
#[derive(Clone)]
pub struct Big(BigFloat, usize);

impl Big {
    pub fn new(x: f64, bits: u32) -> Self {
        let p = (bits as usize).max(64);
        Big(BigFloat::from_f64(x, p), p)
    }

    fn prec(&self) -> usize {
        self.1
    }

    fn wider(&self, other: &Big) -> usize {
        self.1.max(other.1)
    }

    pub fn inner(&self) -> &BigFloat {
        &self.0
    }
}

impl fmt::Debug for Big {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, e) = self.frexp();
        write!(f, "Big({m}*2^{e}, {} bits)", self.prec())
    }
}

impl PartialEq for Big {
    fn eq(&self, other: &Self) -> bool {
        self.0.cmp(&other.0) == Some(0)
    }
}

impl PartialOrd for Big {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.cmp(&other.0).map(|c| c.cmp(&0))
    }
}

macro_rules! big_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for Big {
            type Output = Big;
            fn $method(self, rhs: Big) -> Big {
                let p = self.wider(&rhs);
                Big(self.0.$method(&rhs.0, p, RM), p)
            }
        }
        impl<'a> $tr<&'a Big> for Big {
            type Output = Big;
            fn $method(self, rhs: &'a Big) -> Big {
                let p = self.wider(rhs);
                Big(self.0.$method(&rhs.0, p, RM), p)
            }
        }
        impl<'a, 'b> $tr<&'b Big> for &'a Big {
            type Output = Big;
            fn $method(self, rhs: &'b Big) -> Big {
                let p = self.wider(rhs);
                Big(self.0.$method(&rhs.0, p, RM), p)
            }
        }
    };
}

big_binop!(Add, add);
big_binop!(Sub, sub);
big_binop!(Mul, mul);
big_binop!(Div, div);

impl Neg for Big {
    type Output = Big;
    fn neg(self) -> Big {
        Big(self.0.neg(), self.1)
    }
}

impl Real for Big {
    const MAX_EXP: Option<i64> = None;

    fn from_f64_bits(x: f64, bits: u32) -> Self {
        Big::new(x, bits)
    }
    fn bits(&self) -> u32 {
        self.prec() as u32
    }
    fn with_bits(&self, bits: u32) -> Self {
        let p = (bits as usize).max(64);
        let mut x = self.0.clone();
        // Widening is exact; narrowing rounds.
        let _ = x.set_precision(p, RM);
        Big(x, p)
    }
    fn to_f64(&self) -> f64 {
        let (m, e) = self.frexp();
        ldexp_f64(m, e)
    }
    fn sqrt(&self) -> Self {
        Big(self.0.sqrt(self.1, RM), self.1)
    }
    fn abs(&self) -> Self {
        Big(self.0.abs(), self.1)
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }
    fn frexp(&self) -> (f64, i64) {
        if self.0.is_zero() {
            return (0.0, 0);
        }
        if self.0.is_nan() {
            return (f64::NAN, 0);
        }
        if self.0.is_inf() {
            let s = if self.0.is_inf_pos() { 1.0 } else { -1.0 };
            return (s * f64::INFINITY, 0);
        }
        let (words, _, sign, e, _) = self.0.as_raw_parts().expect("finite value");
        let top = *words.last().expect("non-empty mantissa");
        let next = if words.len() > 1 { words[words.len() - 2] } else { 0 };
        // top word carries the leading bit; fold in the next word for rounding.
        let m = (top as f64 + next as f64 / 18446744073709551616.0) / 18446744073709551616.0;
        let m = if sign == Sign::Neg { -m } else { m };
        (m, e as i64)
    }
    fn ldexp(&self, k: i64) -> Self {
        if self.0.is_zero() || k == 0 || !Real::is_finite(self) {
            return self.clone();
        }
        let mut x = self.0.clone();
        let e = x.exponent().expect("finite value") as i64 + k;
        x.set_exponent(e as astro_float::Exponent);
        Big(x, self.1)
    }
}
