//! Lossless text encoding of `f64` in C99 `%a` style.
//!
//! Normal numbers print as `±0x1.<hex>p±e` with trailing zero digits
//! dropped, subnormals as `±0x0.<hex>p-1022`. Parsing accepts exactly what
//! [`format`] emits plus the usual variations (upper case, missing sign,
//! missing fraction), and `inf`/`nan` spelled as Rust prints them.

use std::fmt::Write;

const MANTISSA_BITS: u32 = 52;
const EXP_BIAS: i64 = 1023;

pub fn format(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> MANTISSA_BITS) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << MANTISSA_BITS) - 1);
    if biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, 1 - EXP_BIAS) } else { (1, biased - EXP_BIAS) };
    let mut out = format!("{sign}0x{lead}");
    if mantissa != 0 {
        let mut digits = format!("{mantissa:013x}");
        while digits.ends_with('0') {
            digits.pop();
        }
        out.push('.');
        out.push_str(&digits);
    }
    write!(out, "p{exp:+}").expect("writing to a String");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed hexadecimal float `{0}`")]
pub struct ParseHexError(pub String);

pub fn parse(text: &str) -> Result<f64, ParseHexError> {
    let bad = || ParseHexError(text.to_string());
    let s = text.trim();
    match s {
        "NaN" | "nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, rest) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (digits, exp) = rest.split_once(['p', 'P']).ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.len() != 1 || frac_part.len() > 13 {
        return Err(bad());
    }
    let lead = u64::from_str_radix(int_part, 16).map_err(|_| bad())?;
    let frac = if frac_part.is_empty() {
        0
    } else {
        if !frac_part.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        u64::from_str_radix(frac_part, 16).map_err(|_| bad())? << (4 * (13 - frac_part.len()))
    };
    let bits = match lead {
        0 if frac == 0 => 0,
        0 if exp == 1 - EXP_BIAS => frac,
        1 if (1 - EXP_BIAS..=EXP_BIAS).contains(&exp) => (((exp + EXP_BIAS) as u64) << MANTISSA_BITS) | frac,
        _ => return Err(bad()),
    };
    let sign = if negative { 1u64 << 63 } else { 0 };
    Ok(f64::from_bits(sign | bits))
}
