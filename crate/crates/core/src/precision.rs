//! Working precision handling.
//!
//! Every numeric kernel in this crate takes an explicit [`Prec`] — there is
//! no global mutable precision. Values are [`rug::Float`]s; `Prec` is the
//! number of mantissa bits used when a new value is created. The default of
//! 256 bits leaves ~77 decimal digits, enough headroom for truncation
//! levels around `N ≈ 20` where the Gram/Vandermonde conditioning reaches
//! `e^{cN}`.

use rug::{float::Constant, ops::Pow, Float};

use crate::error::{Error, Result};

/// Default working precision in bits.
pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// Working precision in mantissa bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Prec(u32);

impl Default for Prec {
    fn default() -> Self {
        Prec(DEFAULT_PRECISION_BITS)
    }
}

impl Prec {
    pub fn new(bits: u32) -> Self {
        assert!(bits >= 32, "precision below 32 bits is not supported");
        Prec(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Elevated precision used for factorizations of ill-conditioned systems.
    pub fn doubled(self) -> Self {
        Prec(self.0 * 2)
    }

    /// Unit roundoff `2^-bits` at this precision.
    pub fn eps(self) -> Float {
        Float::with_val(self.0, Float::i_exp(1, -(self.0 as i32)))
    }

    pub fn zero(self) -> Float {
        Float::with_val(self.0, 0)
    }

    pub fn one(self) -> Float {
        Float::with_val(self.0, 1)
    }

    pub fn from_f64(self, v: f64) -> Float {
        Float::with_val(self.0, v)
    }

    pub fn from_usize(self, v: usize) -> Float {
        Float::with_val(self.0, v as u64)
    }

    pub fn pi(self) -> Float {
        Float::with_val(self.0, Constant::Pi)
    }

    /// Parses a decimal string at this precision.
    pub fn parse(self, s: &str) -> Result<Float> {
        let incomplete = Float::parse(s)
            .map_err(|e| Error::InvalidParameter(format!("cannot parse `{s}` as a real: {e}")))?;
        Ok(Float::with_val(self.0, incomplete))
    }

    /// `base^exponent` with both operands lifted to this precision.
    pub fn powf(self, base: &Float, exponent: f64) -> Float {
        Float::with_val(self.0, base.pow(&self.from_f64(exponent)))
    }
}

/// Number of decimal digits that guarantee value-exact round-trips for a
/// binary precision of `bits`.
pub fn roundtrip_digits(bits: u32) -> usize {
    (bits as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
}

/// Formats a float as a decimal string with enough digits to reparse to the
/// identical value at the same precision.
pub fn to_decimal_string(x: &Float) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x.is_sign_negative() {
            "-inf".to_string()
        } else {
            "inf".to_string()
        };
    }
    if x.is_zero() {
        return "0".to_string();
    }
    let digits = roundtrip_digits(x.prec());
    let (sign, mantissa, exp) = to_parts(x, digits);
    // Scientific notation: d.ddd...e<exp-1>, exponent relative to first digit.
    let point = format!("{}.{}", &mantissa[..1], &mantissa[1..]);
    format!("{}{}e{}", sign, point, exp - 1)
}

fn to_parts(x: &Float, digits: usize) -> (&'static str, String, i64) {
    let (mantissa, exp) = x.to_string_radix(10, Some(digits)).split_at_exp();
    (if x.is_sign_negative() { "-" } else { "" }, mantissa, exp)
}

trait SplitExp {
    fn split_at_exp(&self) -> (String, i64);
}

impl SplitExp for String {
    // rug renders as e.g. "-1.234e-5" or "3.500"; normalize to digit string + exponent.
    fn split_at_exp(&self) -> (String, i64) {
        let s = self.trim_start_matches('-');
        let (body, exp) = match s.split_once(['e', 'E']) {
            Some((b, e)) => (b, e.parse::<i64>().expect("exponent")),
            None => (s, 0),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let digits: String = int_part.chars().chain(frac_part.chars()).collect();
        // Exponent of the first digit: position of the decimal point plus e-exponent.
        (digits, int_part.len() as i64 + exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_roundtrip_is_exact() {
        let p = Prec::new(256);
        for v in ["1.5", "-0.001234", "3.14159", "1e-30"] {
            let x = p.parse(v).unwrap();
            let s = to_decimal_string(&x);
            let back = p.parse(&s).unwrap();
            assert_eq!(x, back, "value {v} failed round-trip via {s}");
        }
        let third = Float::with_val(256, 1) / Float::with_val(256, 3);
        let back = p.parse(&to_decimal_string(&third)).unwrap();
        assert_eq!(third, back);
    }

    #[test]
    fn eps_matches_bits() {
        let p = Prec::new(64);
        let eps = p.eps();
        assert_eq!(eps, Float::with_val(64, 2f64.powi(-64)));
    }
}
