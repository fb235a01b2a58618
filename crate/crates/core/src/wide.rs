//! Positive or signed magnitudes that may leave the `f64` exponent range.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::real::{frexp_f64, ldexp_f64, Real};

/// `mantissa * 2^exp2` with `0.5 <= |mantissa| < 1` (or zero).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wide {
    pub mantissa: f64,
    pub exp2: i64,
}

impl Wide {
    pub const ZERO: Wide = Wide { mantissa: 0.0, exp2: 0 };

    pub fn from_f64(x: f64) -> Self {
        let (mantissa, exp2) = frexp_f64(x);
        Wide { mantissa, exp2 }
    }

    /// Value of `x * 2^shift`.
    pub fn from_real<T: Real>(x: &T, shift: i64) -> Self {
        let (mantissa, e) = x.frexp();
        if mantissa == 0.0 || !mantissa.is_finite() {
            return Wide { mantissa, exp2: 0 };
        }
        Wide { mantissa, exp2: e + shift }
    }

    pub fn new(mantissa: f64, exp2: i64) -> Self {
        let (m, e) = frexp_f64(mantissa);
        if m == 0.0 || !m.is_finite() {
            return Wide { mantissa: m, exp2: 0 };
        }
        Wide { mantissa: m, exp2: e + exp2 }
    }

    /// Nearest `f64`; saturates to infinity or zero outside the range.
    pub fn to_f64(self) -> f64 {
        ldexp_f64(self.mantissa, self.exp2)
    }

    pub fn log2_abs(self) -> f64 {
        self.mantissa.abs().log2() + self.exp2 as f64
    }

    pub fn log10_abs(self) -> f64 {
        self.log2_abs() * std::f64::consts::LOG10_2
    }

    pub fn is_finite(self) -> bool {
        self.mantissa.is_finite()
    }

    pub fn abs(self) -> Self {
        Wide { mantissa: self.mantissa.abs(), exp2: self.exp2 }
    }

    pub fn mul(self, other: Wide) -> Wide {
        Wide::new(self.mantissa * other.mantissa, self.exp2 + other.exp2)
    }

    pub fn scale(self, factor: f64) -> Wide {
        Wide::new(self.mantissa * factor, self.exp2)
    }

    /// `2^l`.
    pub fn from_log2(l: f64) -> Wide {
        if !l.is_finite() {
            return if l < 0.0 { Wide::ZERO } else { Wide { mantissa: f64::INFINITY, exp2: 0 } };
        }
        let e = l.floor();
        Wide::new(2f64.powf(l - e), e as i64)
    }

    pub fn add(self, other: Wide) -> Wide {
        if self.mantissa == 0.0 {
            return other;
        }
        if other.mantissa == 0.0 {
            return self;
        }
        let e = self.exp2.max(other.exp2);
        let m = ldexp_f64(self.mantissa, self.exp2 - e) + ldexp_f64(other.mantissa, other.exp2 - e);
        Wide::new(m, e)
    }

    pub fn representable(self) -> bool {
        self.mantissa == 0.0 || (self.exp2 > -1020 && self.exp2 < 1024)
    }
}

impl fmt::Display for Wide {
    /// Shortest round-trip `f64` text when representable, otherwise decimal
    /// scientific notation with 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.mantissa.is_finite() {
            return write!(f, "{}", format_f64(self.mantissa));
        }
        if self.representable() {
            return write!(f, "{}", format_f64(self.to_f64()));
        }
        let l = self.log10_abs();
        let mut d = l.floor();
        let mut m = 10f64.powf(l - d);
        if m >= 10.0 {
            m /= 10.0;
            d += 1.0;
        }
        let sign = if self.mantissa < 0.0 { "-" } else { "" };
        write!(f, "{sign}{:.16}e{}", m, d as i64)
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
