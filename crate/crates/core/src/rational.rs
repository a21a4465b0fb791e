//! Exact rational helpers: parsing user-facing decimal strings and printing
//! values back without loss.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn pow10(exp: u32) -> BigInt {
    BigInt::from(10u32).pow(exp)
}

/// Parses `"3.3"`, `"-0.25"`, `"27/16"`, `"2"` or `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(invalid("empty number"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_rational(num)?;
        let d = parse_rational(den)?;
        if d.is_zero() {
            return Err(invalid(format!("zero denominator in {text:?}")));
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..]
                .parse()
                .map_err(|_| invalid(format!("bad exponent in {text:?}")))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(invalid(format!("not a number: {text:?}")));
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(invalid(format!("not an exact decimal: {text:?}")));
    }
    let all: String = format!("{whole}{frac}");
    let mut value = BigRational::new(
        all.parse::<BigInt>().unwrap_or_else(|_| BigInt::zero()),
        pow10(frac.len() as u32),
    );
    if exponent >= 0 {
        value *= BigRational::from_integer(pow10(exponent as u32));
    } else {
        value /= BigRational::from_integer(pow10((-exponent) as u32));
    }
    Ok(if negative { -value } else { value })
}

/// Prints a rational as a terminating decimal when possible, else as `p/q`.
/// The output always parses back to the same value.
pub fn format_exact(value: &Rational) -> String {
    let den = value.denom();
    let mut rest = den.clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let (mut twos, mut fives) = (0u32, 0u32);
    while rest.is_even() && !rest.is_zero() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return format!("{}/{}", value.numer(), den);
    }
    let digits = twos.max(fives);
    if digits == 0 {
        return value.numer().to_string();
    }
    let scaled = value * BigRational::from_integer(pow10(digits));
    let n = scaled.to_integer();
    let negative = n.is_negative();
    let s = n.abs().to_string();
    let s = if s.len() <= digits as usize {
        format!("{}{}", "0".repeat(digits as usize + 1 - s.len()), s)
    } else {
        s
    };
    let (w, f) = s.split_at(s.len() - digits as usize);
    format!("{}{}.{}", if negative { "-" } else { "" }, w, f)
}

/// Fixed-point decimal with exactly `scale` fractional digits.
pub fn format_fixed(numerator: &BigUint, scale: u32) -> String {
    let s = numerator.to_string();
    let width = scale as usize + 1;
    let s = if s.len() < width {
        format!("{}{}", "0".repeat(width - s.len()), s)
    } else {
        s
    };
    let (w, f) = s.split_at(s.len() - scale as usize);
    if scale == 0 {
        w.to_string()
    } else {
        format!("{w}.{f}")
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Nearest rational with denominator `10^digits` (round half away from zero).
pub fn round_to_decimal(value: f64, digits: u32) -> Rational {
    let scale = 10f64.powi(digits as i32);
    let scaled = (value * scale).round();
    let n = BigInt::from(scaled as i128);
    BigRational::new(n, pow10(digits))
}

/// Rounds a rational to `digits` significant decimal digits (toward +infinity for
/// positive values, so that a positive input stays positive).
pub fn round_up_significant(value: f64, digits: u32) -> Rational {
    if value <= 0.0 || !value.is_finite() {
        return Rational::zero();
    }
    let magnitude = value.log10().floor() as i32;
    let shift = digits as i32 - 1 - magnitude;
    let scaled = (value * 10f64.powi(shift)).ceil();
    let n = BigInt::from(scaled as i128);
    if shift >= 0 {
        BigRational::new(n, pow10(shift as u32))
    } else {
        BigRational::from_integer(n * pow10((-shift) as u32))
    }
}

pub fn floor_div(num: &BigInt, den: &BigInt) -> BigInt {
    num.div_floor(den)
}

pub fn ceil_div(num: &BigInt, den: &BigInt) -> BigInt {
    -((-num).div_floor(den))
}
