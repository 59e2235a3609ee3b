//! IEEE 754 binary16 storage type with round-to-nearest-even conversion.
//!
//! Conversion is done with integer bit manipulation so results do not depend
//! on the host FPU rounding mode.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Half(u16);

impl Half {
    pub const ZERO: Half = Half(0);
    pub const ONE: Half = Half(0x3C00);
    pub const INFINITY: Half = Half(0x7C00);
    pub const NEG_INFINITY: Half = Half(0xFC00);
    /// Largest finite value, 65504.
    pub const MAX: Half = Half(0x7BFF);

    pub const fn from_bits(bits: u16) -> Half {
        Half(bits)
    }

    pub const fn to_bits(self) -> u16 {
        self.0
    }

    pub fn is_nan(self) -> bool {
        self.0 & 0x7C00 == 0x7C00 && self.0 & 0x03FF != 0
    }

    pub fn is_finite(self) -> bool {
        self.0 & 0x7C00 != 0x7C00
    }

    pub fn from_f32(x: f32) -> Half {
        to_half(x)
    }

    pub fn to_f32(self) -> f32 {
        to_single(self)
    }
}

/// Rounds a binary32 value to binary16, ties to even, overflowing to infinity.
pub fn to_half(x: f32) -> Half {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xFF) as i32;
    let man = bits & 0x007F_FFFF;

    if exp == 0xFF {
        if man == 0 {
            return Half(sign | 0x7C00);
        }
        // Keep the top payload bits and force the quiet bit.
        return Half(sign | 0x7E00 | (man >> 13) as u16);
    }

    // Re-biased exponent for binary16.
    let e = exp - 127 + 15;
    if e >= 0x1F {
        return Half(sign | 0x7C00);
    }

    if e <= 0 {
        // Subnormal (or zero) result; binary32 subnormals are far below the
        // binary16 range and fall through to zero here.
        let shift = (14 - e) as u32;
        if shift > 24 {
            return Half(sign);
        }
        let full = man | 0x0080_0000;
        let q = full >> shift;
        let rem = full & ((1 << shift) - 1);
        let halfway = 1 << (shift - 1);
        let rounded = if rem > halfway || (rem == halfway && q & 1 == 1) {
            q + 1
        } else {
            q
        };
        // A carry into bit 10 yields the smallest normal, which is the
        // correct encoding.
        return Half(sign | rounded as u16);
    }

    let q = ((e as u32) << 10) | (man >> 13);
    let rem = man & 0x1FFF;
    let rounded = if rem > 0x1000 || (rem == 0x1000 && q & 1 == 1) {
        q + 1
    } else {
        q
    };
    // Mantissa carry propagates into the exponent; 0x7C00 is infinity.
    Half(sign | rounded as u16)
}

/// Exact binary16 to binary32 widening.
pub fn to_single(h: Half) -> f32 {
    let h = h.0 as u32;
    let sign = (h & 0x8000) << 16;
    let exp = (h >> 10) & 0x1F;
    let man = h & 0x03FF;
    let bits = match (exp, man) {
        (0, 0) => sign,
        (0, _) => {
            // Normalise the subnormal.
            let lead = man.leading_zeros() - 22; // zeros within the 10-bit field
            let man = (man << (lead + 1)) & 0x03FF;
            let exp = 127 - 15 - lead;
            sign | (exp << 23) | (man << 13)
        }
        (0x1F, 0) => sign | 0x7F80_0000,
        (0x1F, _) => sign | 0x7FC0_0000 | (man << 13),
        _ => sign | ((exp + 127 - 15) << 23) | (man << 13),
    };
    f32::from_bits(bits)
}

/// Rounds through binary16 and back.
pub fn round_half(x: f32) -> f32 {
    to_single(to_half(x))
}

pub fn round_slice(values: &mut [f32]) {
    for v in values {
        *v = round_half(*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert_eq!(to_half(1.0).to_bits(), 0x3C00);
        assert_eq!(to_half(-2.0).to_bits(), 0xC000);
        assert_eq!(to_half(65504.0), Half::MAX);
        assert_eq!(to_half(0.0).to_bits(), 0);
        assert_eq!(to_half(-0.0).to_bits(), 0x8000);
        // Smallest subnormal.
        assert_eq!(to_half(2f32.powi(-24)).to_bits(), 0x0001);
    }

    #[test]
    fn ties_go_to_even() {
        // 1 + 2^-11 sits exactly between 0x3C00 and 0x3C01.
        assert_eq!(to_half(2049.0 / 2048.0).to_bits(), 0x3C00);
        // 1 + 3 * 2^-11 sits between 0x3C01 and 0x3C02.
        assert_eq!(to_half(1.0 + 3.0 / 2048.0).to_bits(), 0x3C02);
        // Half the smallest subnormal rounds to zero, 1.5x rounds up to 2.
        assert_eq!(to_half(2f32.powi(-25)).to_bits(), 0x0000);
        assert_eq!(to_half(3.0 * 2f32.powi(-25)).to_bits(), 0x0002);
    }

    #[test]
    fn overflow_and_specials() {
        assert_eq!(to_half(70000.0), Half::INFINITY);
        assert_eq!(to_half(-70000.0), Half::NEG_INFINITY);
        // 65520 is the midpoint between MAX and the next (infinite) step.
        assert_eq!(to_half(65519.0), Half::MAX);
        assert_eq!(to_half(65520.0), Half::INFINITY);
        assert_eq!(to_half(f32::INFINITY), Half::INFINITY);
        assert!(to_half(f32::NAN).is_nan());
        assert!(to_single(to_half(f32::NAN)).is_nan());
        assert_eq!(to_half(f32::MIN_POSITIVE).to_bits(), 0);
    }

    #[test]
    fn widening_is_exact_for_every_pattern() {
        for bits in 0..=u16::MAX {
            let h = Half::from_bits(bits);
            let x = to_single(h);
            if h.is_nan() {
                assert!(x.is_nan());
            } else {
                assert_eq!(to_half(x).to_bits(), bits, "pattern {bits:#06x}");
            }
        }
    }
}
