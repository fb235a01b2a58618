use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PrecisionPolicy {
    /// IEEE double throughout.
    Double,
    /// Fixed mantissa width in bits.
    Extended { bits: u32 },
    /// Width grows as `base_bits + growth * log2(max|V| / (1/2))`.
    Adaptive {
        #[serde(default = "default_base")]
        base_bits: u32,
        #[serde(default = "default_growth")]
        growth: f64,
        #[serde(default = "default_cap")]
        max_bits: u32,
    },
}

fn default_base() -> u32 {
    64
}
fn default_growth() -> f64 {
    1.0
}
fn default_cap() -> u32 {
    1 << 16
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy::adaptive()
    }
}

impl PrecisionPolicy {
    pub fn adaptive() -> Self {
        PrecisionPolicy::Adaptive {
            base_bits: default_base(),
            growth: default_growth(),
            max_bits: default_cap(),
        }
    }

    /// Width needed to resolve order-one structure under entries of size `2^log2_max`.
    pub fn required_bits(base_bits: u32, growth: f64, log2_max: f64) -> u32 {
        // The smallest symplectic scale is bounded below by 1/2.
        let span = (log2_max + 1.0).max(0.0);
        base_bits + (growth * span).ceil() as u32
    }
}

/// Round up to a whole number of 64-bit words.
pub fn round_bits(bits: u32) -> u32 {
    bits.div_ceil(64) * 64
}

impl fmt::Display for PrecisionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionPolicy::Double => write!(f, "double"),
            PrecisionPolicy::Extended { bits } => write!(f, "ext:{bits}"),
            PrecisionPolicy::Adaptive { .. } => write!(f, "adaptive"),
        }
    }
}

impl FromStr for PrecisionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "double" => Ok(PrecisionPolicy::Double),
            "adaptive" => Ok(PrecisionPolicy::adaptive()),
            _ => {
                let bits = s
                    .strip_prefix("ext:")
                    .and_then(|b| b.parse::<u32>().ok())
                    .filter(|&b| b >= 64)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "precision `{s}`: expected double, ext:<bits> (bits >= 64) or adaptive"
                        ))
                    })?;
                Ok(PrecisionPolicy::Extended { bits })
            }
        }
    }
}
