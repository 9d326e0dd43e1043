//! Regularizing divider.
//!
//! Operands are split into `2^e · (1 + f)`. The quotient mantissa is taken
//! in the log domain, `1 + fa − fb` (or `2 + fa − fb` one octave lower when
//! `fa < fb`), using only the top `m_bits` of each fraction. A 64-entry
//! table indexed by the top three fraction bits of both operands holds the
//! mean relative residual of that bucket in units of 2^-10. A companion
//! estimate, the largest residual magnitude seen in the bucket, decides
//! whether the correction is applied: only when it exceeds `error_trigger`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TABLE_LEN: usize = 64;
const TABLE_SCALE: f64 = 1024.0;
const SAMPLE_CAP: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivConfig {
    pub m_bits: u32,
    pub error_trigger: f64,
    pub table: Vec<i8>,
    /// Worst relative residual magnitude per bucket, units of 2^-10.
    pub estimate: Vec<u8>,
}

impl DivConfig {
    pub fn new(m_bits: u32) -> Result<Self> {
        let (table, estimate) = sample_buckets(m_bits)?;
        Ok(Self { m_bits, error_trigger: 0.01, table, estimate })
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.m_bits) {
            return Err(Error::InvalidParams(format!("m_bits {} outside 4..=16", self.m_bits)));
        }
        if self.table.len() != TABLE_LEN || self.estimate.len() != TABLE_LEN {
            return Err(Error::InvalidParams("correction table must have 64 entries".into()));
        }
        Ok(())
    }

    fn correction(&self, idx: usize) -> Option<i64> {
        (self.estimate[idx] as f64 / TABLE_SCALE > self.error_trigger).then_some(self.table[idx] as i64)
    }
}

impl Default for DivConfig {
    fn default() -> Self {
        Self::new(8).expect("8 mantissa bits are valid")
    }
}

fn bucket(fa_q: u64, fb_q: u64, m: u32) -> usize {
    (((fa_q >> (m - 3)) << 3) | (fb_q >> (m - 3))) as usize
}

/// Log-domain quotient of two normalized mantissas given as `m`-bit
/// truncated fractions. Returns the mantissa in units of 2^-m and the
/// exponent adjustment (0 or −1).
fn mitchell(fa_q: u64, fb_q: u64, m: u32) -> (u64, i32) {
    if fa_q >= fb_q {
        ((1 << m) + fa_q - fb_q, 0)
    } else {
        ((2 << m) + fa_q - fb_q, -1)
    }
}

/// Mean relative residual `exact / approx − 1` per bucket, sampled at the
/// midpoints of every truncation interval (at most 2^7 per dimension).
pub fn build_table(m_bits: u32) -> Result<Vec<i8>> {
    Ok(sample_buckets(m_bits)?.0)
}

/// Mean signed residual and worst residual magnitude per bucket.
fn sample_buckets(m_bits: u32) -> Result<(Vec<i8>, Vec<u8>)> {
    if !(4..=16).contains(&m_bits) {
        return Err(Error::InvalidParams(format!("m_bits {m_bits} outside 4..=16")));
    }
    let per_bucket_bits = m_bits - 3;
    let sample_bits = per_bucket_bits.min(SAMPLE_CAP);
    let step = 1u64 << (per_bucket_bits - sample_bits);
    let unit = (1u64 << m_bits) as f64;
    let mut table = Vec::with_capacity(TABLE_LEN);
    let mut estimate = Vec::with_capacity(TABLE_LEN);
    for ia in 0..8u64 {
        for ib in 0..8u64 {
            let (mut sum, mut worst, mut count) = (0.0, 0.0, 0u64);
            for sa in 0..1u64 << sample_bits {
                let fa_q = (ia << per_bucket_bits) + sa * step;
                for sb in 0..1u64 << sample_bits {
                    let fb_q = (ib << per_bucket_bits) + sb * step;
                    if fa_q == fb_q {
                        continue;
                    }
                    let a = 1.0 + (fa_q as f64 + 0.5) / unit;
                    let b = 1.0 + (fb_q as f64 + 0.5) / unit;
                    let (mant, e) = mitchell(fa_q, fb_q, m_bits);
                    let approx = mant as f64 / unit * 2f64.powi(e);
                    let res = (a / b) / approx - 1.0;
                    sum += res;
                    worst = f64::max(worst, res.abs());
                    count += 1;
                }
            }
            let n = count.max(1) as f64;
            table.push((sum / n * TABLE_SCALE).round().clamp(i8::MIN as f64, i8::MAX as f64) as i8);
            estimate.push((worst * TABLE_SCALE).round().min(u8::MAX as f64) as u8);
        }
    }
    Ok((table, estimate))
}

fn shift_round(v: u128, s: i32) -> Result<u128> {
    if s >= 0 {
        if s >= 127 || v.leading_zeros() < s as u32 {
            return Err(Error::Overflow("divider"));
        }
        Ok(v << s)
    } else if -s >= 128 {
        Ok(0)
    } else {
        let s = (-s) as u32;
        Ok((v + (1u128 << (s - 1))) >> s)
    }
}

fn to_signed(mag: u128, negative: bool) -> Result<i64> {
    let v = i64::try_from(mag).map_err(|_| Error::Overflow("divider"))?;
    Ok(if negative { -v } else { v })
}

/// `a / b` for fixed-point operands sharing `frac_bits` fractional bits;
/// the quotient is returned on the same grid.
pub fn approx_divide(a: i64, b: i64, frac_bits: u32, cfg: &DivConfig) -> Result<i64> {
    if b == 0 {
        return Err(Error::DivisionByZero);
    }
    if a == 0 {
        return Ok(0);
    }
    let negative = (a < 0) != (b < 0);
    let (ua, ub) = (a.unsigned_abs(), b.unsigned_abs());
    let ea = 63 - ua.leading_zeros() as i32;
    let eb = 63 - ub.leading_zeros() as i32;
    if ub.is_power_of_two() {
        let mag = shift_round(ua as u128, frac_bits as i32 - eb)?;
        return to_signed(mag, negative);
    }
    let m = cfg.m_bits;
    let frac = |u: u64, e: i32| -> u64 {
        let f = u & !(1u64 << e);
        let q = if e as u32 >= m { f >> (e as u32 - m) } else { f << (m - e as u32) };
        q & ((1 << m) - 1)
    };
    let (fa_q, fb_q) = (frac(ua, ea), frac(ub, eb));
    let (mant, adj) = mitchell(fa_q, fb_q, m);
    let mut mant = (mant as u128) << 10;
    if fa_q != fb_q {
        if let Some(c) = cfg.correction(bucket(fa_q, fb_q, m)) {
            let delta = (mant as i128 * c as i128) >> 10;
            mant = (mant as i128 + delta) as u128;
        }
    }
    let s = ea - eb + adj + frac_bits as i32 - m as i32 - 10;
    to_signed(shift_round(mant, s)?, negative)
}

/// Round-to-nearest exact fixed-point division, the reference the
/// approximation is measured against.
pub fn exact_divide(a: i64, b: i64, frac_bits: u32) -> Result<i64> {
    if b == 0 {
        return Err(Error::DivisionByZero);
    }
    let negative = (a < 0) != (b < 0);
    let num = (a.unsigned_abs() as u128) << frac_bits;
    let den = b.unsigned_abs() as u128;
    to_signed((num + den / 2) / den, negative)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape_and_determinism() {
        let t = build_table(8).unwrap();
        assert_eq!(t.len(), 64);
        assert_eq!(t, build_table(8).unwrap());
        // the log-domain estimate over-shoots the true quotient
        assert!(t.iter().all(|c| *c <= 0));
        assert!(build_table(3).is_err());
        let cfg = DivConfig::default();
        // a mean can never exceed the worst case
        assert!(cfg.table.iter().zip(&cfg.estimate).all(|(t, e)| t.unsigned_abs() <= *e));
    }

    #[test]
    fn identity_and_equal_operands() {
        let cfg = DivConfig::default();
        for a in [1i64, -7, 12345, -32768, 999_999] {
            assert_eq!(approx_divide(a, 256, 8, &cfg).unwrap(), a);
            let q = approx_divide(a, a, 8, &cfg).unwrap();
            assert!((q - 256).abs() <= 1, "{a}: {q}");
        }
    }

    #[test]
    fn errors_and_signs() {
        let cfg = DivConfig::default();
        assert_eq!(approx_divide(1, 0, 8, &cfg), Err(Error::DivisionByZero));
        assert!(approx_divide(-300, 7, 8, &cfg).unwrap() < 0);
        assert!(approx_divide(300, -7, 8, &cfg).unwrap() < 0);
        assert!(approx_divide(-300, -7, 8, &cfg).unwrap() > 0);
        assert_eq!(approx_divide(0, 5, 8, &cfg).unwrap(), 0);
    }

    #[test]
    fn close_to_exact() {
        let cfg = DivConfig::default();
        for (a, b) in [(900i64, 300i64), (1000, 3), (5, 7), (40_000, 123)] {
            let q = approx_divide(a, b, 20, &cfg).unwrap() as f64 / (1 << 20) as f64;
            let exact = a as f64 / b as f64;
            assert!((q / exact - 1.0).abs() < 0.05, "{a}/{b}: {q} vs {exact}");
        }
        assert_eq!(exact_divide(9, 4, 8).unwrap(), 576);
        assert_eq!(exact_divide(-7, 3, 8).unwrap(), -597);
    }
}
