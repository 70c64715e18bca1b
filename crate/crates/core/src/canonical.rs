//! Canonical decimal formatting shared by twin documents and query results.

/// Fractional digits kept in canonical numbers.
pub const FRACTION_DIGITS: usize = 6;

/// Formats `value` with at most six fractional digits, rounding half to even
/// on the exact binary value. Trailing zeros are trimmed but one fractional
/// digit is always kept, so floats never render like integers.
pub fn format_decimal(value: f64) -> String {
    let mut text = format!("{:.*}", FRACTION_DIGITS, value);
    while text.ends_with('0') && !text.ends_with(".0") {
        text.pop();
    }
    if text == "-0.0" {
        text.remove(0);
    }
    text
}

/// Rounds `value` to the nearest number representable in canonical form.
pub fn quantize(value: f64) -> f64 {
    let q: f64 = format!("{:.*}", FRACTION_DIGITS, value)
        .parse()
        .expect("formatted float parses");
    if q == 0.0 {
        0.0
    } else {
        q
    }
}
