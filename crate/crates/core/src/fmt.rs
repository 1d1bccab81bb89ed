//! Deterministic number formatting for CSV artifacts.

/// Formats `x` with 15 significant digits in the style of C's `%.15g`:
/// fixed notation for decimal exponents in `[-5, 15)`, scientific
/// otherwise, trailing zeros stripped.
pub fn sig15(x: f64) -> String {
    sig(x, 15)
}

pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { "-" } else { "+" };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig15(0.0), "0");
        assert_eq!(sig15(2.02), "2.02");
        assert_eq!(sig15(101.0), "101");
        assert_eq!(sig15(-0.5), "-0.5");
        assert_eq!(sig15(1.0 / 3.0), "0.333333333333333");
        assert_eq!(sig15(1e-7), "1e-07");
        assert_eq!(sig15(1.5e20), "1.5e+20");
        assert_eq!(sig15(123456789012345.0), "123456789012345");
        assert_eq!(sig15(1234567890123456.0), "1.23456789012346e+15");
        assert_eq!(sig15(0.0001), "0.0001");
    }
}
