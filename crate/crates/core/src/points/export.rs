//! Text and binary serialization of point sets, plus `%.17g` formatting.

use std::io::{Read, Write};

use super::PointSet;
use crate::error::{Error, Result};

/// Formats a float the way C's `printf("%.17g", x)` does.
pub fn format_g17(x: f64) -> String {
    const P: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..P).contains(&exp) {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl PointSet {
    /// One point per row, comma separated, `%.17g`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> = self.point(i).iter().map(|&x| format_g17(x)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Little-endian dump: `n: u64`, `s: u64`, `digits: u32` (0 when no
    /// digit view), then the `n * s` coordinates row-major as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.s() as u64).to_le_bytes())?;
        let digits = self.digits().map_or(0, |d| d.bits);
        w.write_all(&digits.to_le_bytes())?;
        for x in self.coords() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary dump back. The digit view is rebuilt from the
    /// coordinates when the header records a digit depth.
    pub fn read_binary<R: Read>(mut r: R) -> Result<PointSet> {
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let s = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b4)?;
        let digits = u32::from_le_bytes(b4);
        let mut coords = Vec::with_capacity(n * s);
        for _ in 0..n * s {
            r.read_exact(&mut b8)?;
            coords.push(f64::from_le_bytes(b8));
        }
        if digits == 0 {
            PointSet::from_coords(n, s, coords)
        } else {
            if digits > 53 {
                return Err(Error::Unsupported(format!(
                    "cannot recover {digits} exact digits from f64 coordinates"
                )));
            }
            let scale = (1u64 << digits) as f64;
            let values = coords.iter().map(|&x| (x * scale) as u64).collect();
            PointSet::from_digits(n, s, digits, values)
        }
    }
}
