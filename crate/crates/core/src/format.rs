//! Number formatting and CSV helpers shared by the exporters.

use std::fmt::Write as _;

/// Formats with 17 significant digits, `%.17g` style: trailing zeros are
/// dropped and an exponent is used only for very small or large magnitudes.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();

    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if !(-5..17).contains(&exp) {
        let trimmed = digits.trim_end_matches('0');
        out.push_str(&trimmed[..1]);
        if trimmed.len() > 1 {
            out.push('.');
            out.push_str(&trimmed[1..]);
        }
        let _ = write!(out, "e{exp}");
        return out;
    }
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let point = exp as usize + 1;
        format!("{}.{}", &digits[..point], &digits[point..])
    };
    let body = body.trim_end_matches('0').trim_end_matches('.');
    out.push_str(body);
    out
}

/// Joins formatted fields with commas and terminates the row with LF.
pub fn csv_row(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(2.0 / 3.0), "0.66666666666666663");
        assert_eq!(fmt17(1.0), "1");
        assert_eq!(fmt17(-1.0), "-1");
        assert_eq!(fmt17(0.0), "0");
        assert_eq!(fmt17(-2.5), "-2.5");
        assert_eq!(fmt17(0.1), "0.10000000000000001");
        assert_eq!(fmt17(123456.0), "123456");
        assert_eq!(fmt17(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt17(1e20), "1e20");
        assert_eq!(fmt17(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt17(0.0001), "0.0001");
    }

    #[test]
    fn round_trips() {
        for x in [1.0 / 3.0, -7.25e-3, 6.02214076e23, 5e-324, f64::MAX, 0.43233235838169365] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
