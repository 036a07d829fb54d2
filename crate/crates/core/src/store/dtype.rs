use std::fmt;
use std::str::FromStr;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

/// On-disk element type of a tensor. Payloads are always widened to `f64`
/// in memory and narrowed back on save.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F64,
    F32,
    F16,
    BF16,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::F64, DType::F32, DType::F16, DType::BF16];

    pub fn size_bytes(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
            DType::F16 | DType::BF16 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F64 => "F64",
            DType::F32 => "F32",
            DType::F16 => "F16",
            DType::BF16 => "BF16",
        }
    }

    /// Decodes one little-endian element. `bytes.len()` must equal
    /// [`DType::size_bytes`].
    pub fn decode(self, bytes: &[u8]) -> f64 {
        match self {
            DType::F64 => f64::from_le_bytes(bytes.try_into().expect("8 bytes")),
            DType::F32 => f32::from_le_bytes(bytes.try_into().expect("4 bytes")) as f64,
            DType::F16 => f16::from_bits(u16::from_le_bytes(bytes.try_into().expect("2 bytes"))).to_f64(),
            DType::BF16 => bf16::from_bits(u16::from_le_bytes(bytes.try_into().expect("2 bytes"))).to_f64(),
        }
    }

    /// Narrows a finite `f64` with round-to-nearest-even and appends its
    /// little-endian bytes. Returns `None` when the rounded value does not
    /// fit the format's finite range.
    pub fn encode(self, value: f64, out: &mut Vec<u8>) -> Option<()> {
        match self {
            DType::F64 => out.extend_from_slice(&value.to_le_bytes()),
            DType::F32 => {
                let x = value as f32;
                if x.is_infinite() {
                    return None;
                }
                out.extend_from_slice(&x.to_le_bytes());
            }
            DType::F16 => {
                let bits = narrow_rne(value, 5, 10)? as u16;
                out.extend_from_slice(&bits.to_le_bytes());
            }
            DType::BF16 => {
                let bits = narrow_rne(value, 8, 7)? as u16;
                out.extend_from_slice(&bits.to_le_bytes());
            }
        }
        Some(())
    }

    /// The value `value` becomes after a save/load cycle in this dtype.
    pub fn quantize(self, value: f64) -> Option<f64> {
        let mut buf = Vec::with_capacity(8);
        self.encode(value, &mut buf)?;
        Some(self.decode(&buf))
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F64" => Ok(DType::F64),
            "F32" => Ok(DType::F32),
            "F16" => Ok(DType::F16),
            "BF16" => Ok(DType::BF16),
            other => Err(format!("unsupported dtype {other:?}")),
        }
    }
}

/// Rounds a finite `f64` to the nearest binary floating-point value with
/// `exp_bits` exponent bits and `man_bits` stored mantissa bits (ties to
/// even) and returns its bit pattern. `None` on overflow.
///
/// Works on the exact integer significand, so no intermediate rounding
/// happens (a two-step `f64 → f32 → bf16` conversion can double-round).
pub(crate) fn narrow_rne(value: f64, exp_bits: u32, man_bits: u32) -> Option<u64> {
    debug_assert!(value.is_finite());
    let bits = value.to_bits();
    let sign = bits >> 63;
    let sign_out = sign << (exp_bits + man_bits);
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 && frac == 0 {
        return Some(sign_out);
    }
    // value = sig * 2^exp exactly.
    let (sig, exp) = if biased == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    let lead = exp + (63 - sig.leading_zeros() as i64);
    let bias = (1i64 << (exp_bits - 1)) - 1;
    let emin = 1 - bias;
    let mut quantum = lead.max(emin) - man_bits as i64;

    let mut n = if exp >= quantum {
        sig << (exp - quantum) as u32
    } else {
        let shift = (quantum - exp) as u32;
        if shift > 60 {
            0
        } else {
            let kept = sig >> shift;
            let rem = sig & ((1u64 << shift) - 1);
            let half = 1u64 << (shift - 1);
            if rem > half || (rem == half && kept & 1 == 1) {
                kept + 1
            } else {
                kept
            }
        }
    };
    if n == 1u64 << (man_bits + 1) {
        n >>= 1;
        quantum += 1;
    }
    let implicit = 1u64 << man_bits;
    let (exp_field, man_field) = if n < implicit {
        (0u64, n)
    } else {
        let e = quantum + man_bits as i64 + bias;
        if e >= (1i64 << exp_bits) - 1 {
            return None;
        }
        (e as u64, n - implicit)
    };
    Some(sign_out | (exp_field << man_bits) | man_field)
}
