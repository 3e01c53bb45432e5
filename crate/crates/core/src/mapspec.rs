//! Text form of a map: `p = z^2 - 6; a = 0.5`.
//!
//! Polynomials are sums of terms `c`, `c*z`, `c z^k` or `z^k`, where a coefficient is a
//! real literal, an imaginary literal such as `2i`, or a parenthesized complex number
//! `(1-0.5i)`. Complex numbers elsewhere use the same forms.

use crate::error::{HenonError, Result};
use crate::henon::{HenonMap, Polynomial};
use crate::scalar::C64;

fn parse_err(msg: String) -> HenonError {
    HenonError::Parse(msg)
}

fn parse_real(s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| parse_err(format!("malformed number {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(format!("non-finite number {s:?}")))
    }
}

/// A single real or imaginary literal with optional sign: `-2.5`, `3i`, `-i`.
fn parse_part(s: &str) -> Result<C64> {
    if let Some(body) = s.strip_suffix('i') {
        let v = match body {
            "" | "+" => 1.0,
            "-" => -1.0,
            b => parse_real(b)?,
        };
        Ok(C64::new(0.0, v))
    } else {
        Ok(C64::new(parse_real(s)?, 0.0))
    }
}

/// Byte offsets where a top-level `+`/`-` starts a new summand.
fn split_points(s: &str) -> Vec<usize> {
    let b = s.as_bytes();
    let mut depth = 0i32;
    let mut out = Vec::new();
    for (k, &ch) in b.iter().enumerate() {
        match ch {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'+' | b'-' if depth == 0 && k > 0 && !matches!(b[k - 1], b'e' | b'E' | b'^' | b'*' | b'(') => out.push(k),
            _ => {}
        }
    }
    out
}

fn summands(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    for k in split_points(s) {
        parts.push(&s[start..k]);
        start = k;
    }
    parts.push(&s[start..]);
    parts
}

/// Parses `a`, `bi`, `a+bi`, `a-bi`, optionally in parentheses.
pub fn parse_complex(text: &str) -> Result<C64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')).unwrap_or(&s);
    if s.is_empty() {
        return Err(parse_err("empty complex number".into()));
    }
    let mut total = C64::new(0.0, 0.0);
    let parts = summands(s);
    if parts.len() > 2 {
        return Err(parse_err(format!("malformed complex number {text:?}")));
    }
    for p in parts {
        total += parse_part(p).map_err(|_| parse_err(format!("malformed complex number {text:?}")))?;
    }
    Ok(total)
}

/// Parses a polynomial in `z`; returns coefficients from the constant term upwards.
pub fn parse_polynomial(text: &str) -> Result<Vec<C64>> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(parse_err("empty polynomial".into()));
    }
    let mut coeffs: Vec<C64> = Vec::new();
    for term in summands(&s) {
        let (sign, body) = match term.as_bytes().first() {
            Some(b'-') => (-1.0, &term[1..]),
            Some(b'+') => (1.0, &term[1..]),
            _ => (1.0, term),
        };
        if body.is_empty() {
            return Err(parse_err(format!("dangling sign in {text:?}")));
        }
        let (coef_text, power) = match body.find('z') {
            None => (body, 0usize),
            Some(k) => {
                let rest = &body[k + 1..];
                let power = if rest.is_empty() {
                    1
                } else {
                    let exp = rest.strip_prefix('^').ok_or_else(|| parse_err(format!("unexpected {rest:?} after z")))?;
                    exp.parse().map_err(|_| parse_err(format!("malformed exponent {exp:?}")))?
                };
                (body[..k].strip_suffix('*').unwrap_or(&body[..k]), power)
            }
        };
        let coef = if coef_text.is_empty() {
            C64::new(1.0, 0.0)
        } else if coef_text.starts_with('(') {
            parse_complex(coef_text)?
        } else {
            parse_part(coef_text)?
        };
        if coeffs.len() <= power {
            coeffs.resize(power + 1, C64::new(0.0, 0.0));
        }
        coeffs[power] += coef * sign;
    }
    while coeffs.len() > 1 && coeffs.last() == Some(&C64::new(0.0, 0.0)) {
        coeffs.pop();
    }
    Ok(coeffs)
}

/// Parses `p = <polynomial>; a = <complex>` into a validated map.
pub fn parse_map(text: &str) -> Result<HenonMap<f64>> {
    let mut p = None;
    let mut a = None;
    for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').ok_or_else(|| parse_err(format!("expected key=value, got {item:?}")))?;
        match key.trim() {
            "p" => p = Some(parse_polynomial(value)?),
            "a" => a = Some(parse_complex(value)?),
            other => return Err(parse_err(format!("unknown map field {other:?}"))),
        }
    }
    let p = p.ok_or_else(|| parse_err("map spec lacks p".into()))?;
    let a = a.ok_or_else(|| parse_err("map spec lacks a".into()))?;
    HenonMap::new(Polynomial::new(p)?, a)
}

/// Inverse of [`parse_map`] for display.
pub fn format_map(map: &HenonMap<f64>) -> String {
    let p = crate::gallery::poly_text(map.p().coeffs());
    let a = map.a();
    if a.im == 0.0 {
        format!("p={p}; a={}", a.re)
    } else {
        format!("p={p}; a=({}{:+}i)", a.re, a.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn default_map_text() {
        let f = parse_map("p=z^2-6; a=0.5").unwrap();
        assert_eq!(f, HenonMap::default_test_map());
        assert_eq!(f.degree(), 2);
        assert_eq!(parse_map(" p = z^2 - 6 ; a = 0.5 ").unwrap(), f);
    }

    #[test]
    fn zero_jacobian_is_rejected() {
        let e = parse_map("p=z^2-6; a=0").unwrap_err();
        assert_eq!(e.code(), "invalid-map");
        assert!(e.is_usage());
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["p=z^2-6", "a=0.5", "p=z^; a=1", "p=z^2-6; a=x", "p=z^2-6; b=1", "p=z^2--; a=1", "p=2z^2; a=1", "p=z; a=1"] {
            let e = parse_map(bad).unwrap_err();
            assert!(e.is_usage(), "{bad}: {e}");
        }
    }

    #[test]
    fn polynomial_forms() {
        assert_eq!(parse_polynomial("z^3 - 2z + 1").unwrap(), vec![c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(parse_polynomial("(1+2i)*z^2 + 3i").unwrap(), vec![c(0.0, 3.0), c(0.0, 0.0), c(1.0, 2.0)]);
        assert_eq!(parse_polynomial("z^2 + 1e-3z").unwrap(), vec![c(0.0, 0.0), c(1e-3, 0.0), c(1.0, 0.0)]);
        assert_eq!(parse_polynomial("-z + z^2 + z").unwrap(), vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("0.5").unwrap(), c(0.5, 0.0));
        assert_eq!(parse_complex("-0.3+0.1i").unwrap(), c(-0.3, 0.1));
        assert_eq!(parse_complex("(2-i)").unwrap(), c(2.0, -1.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-2e-2i").unwrap(), c(1e-3, -2e-2));
        assert!(parse_complex("1+2+3i").is_err());
        assert!(parse_complex("").is_err());
    }

    proptest! {
        #[test]
        fn quadratic_maps_round_trip(cr in -10.0f64..10.0, ci in -10.0f64..10.0, ar in -2.0f64..2.0, ai in -2.0f64..2.0) {
            prop_assume!(ar != 0.0 || ai != 0.0);
            let f = HenonMap::quadratic(c(cr, ci), c(ar, ai)).unwrap();
            let text = format!("p=z^2+({cr:e}{ci:+e}i); a=({ar:e}{ai:+e}i)");
            prop_assert_eq!(parse_map(&text).unwrap(), f.clone());
            prop_assert_eq!(parse_map(&format_map(&f)).unwrap(), f);
        }
    }
}
