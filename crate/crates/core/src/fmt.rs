//! Stable text rendering of floating-point values.
//!
//! Every number written to a grid, CSV, or JSON artifact goes through
//! [`sig6`] so output bytes do not depend on the platform's shortest-repr
//! algorithm. Rounding is exact-decimal, ties to even.

/// Renders `x` with at most six significant digits in `%g` style.
///
/// Trailing zeros are trimmed; magnitudes below `1e-4` or at least `1e6`
/// switch to exponent notation (`1.5e-7`). Non-finite values render as
/// `inf`, `-inf` and `nan`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

/// Rounds `x` to the value [`sig6`] would print.
pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        sig6(x).parse().expect("sig6 output parses")
    } else {
        x
    }
}

/// Renders an optional value, using `undefined` for `None`.
pub fn sig6_opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "undefined".to_string())
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
