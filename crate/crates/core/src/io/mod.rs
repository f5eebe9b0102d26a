//! Text formats and artifact writers.

pub mod config;
pub mod frames;

pub use config::{GradientConfig, RunConfig, SCHEMA_VERSION};
pub use frames::{frame_line, parse_frame_line, read_frames, write_frames, FrameFile, FrameHeader};

use std::io::Write;

use crate::error::Result;

/// Formats `x` with 9 significant digits in the shortest of fixed or
/// scientific notation, trailing zeros trimmed (C's `%.9g`).
pub fn fmt_g(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= DIGITS {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

/// Binary 8-bit PGM of a row-major grid whose row 0 is the bottom of the
/// image; values are min-max scaled to 0..=255 (a flat grid maps to 0).
pub fn write_pgm<W: Write>(mut w: W, grid: &[f64], rows: usize, cols: usize) -> Result<()> {
    assert_eq!(grid.len(), rows * cols);
    let finite = grid.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let mut bytes = Vec::with_capacity(rows * cols);
    for r in (0..rows).rev() {
        for v in &grid[r * cols..(r + 1) * cols] {
            let t = if v.is_finite() { (v - lo) / span } else { 0.0 };
            bytes.push((t * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
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
    use super::fmt_g;

    #[test]
    fn matches_printf_g() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.5), "0.5");
        assert_eq!(fmt_g(-2.25), "-2.25");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g(1e-9), "1e-09");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(0.99999999999), "1");
    }

    #[test]
    fn round_trips_to_nine_digits() {
        for &x in &[std::f64::consts::PI, 6.02214076e23, -1.602e-19, 0.163265306] {
            let y: f64 = fmt_g(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-8);
        }
    }
}
