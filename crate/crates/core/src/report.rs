//! Deterministic float formatting for reports.

/// Significant digits used for every float in emitted reports.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats with 12 significant digits, trimming trailing zeros.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..16).contains(&exp) {
        return format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" { "0".into() } else { s }
}

/// Rounds to 12 significant digits so that serialized JSON is stable.
pub fn round_float(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_float(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(-0.5), "-0.5");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1e-7), "1.00000000000e-7");
    }
}
