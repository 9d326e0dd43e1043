//! Shared fixtures for the criterion benches.

use spark_core::generate::{gen_instance, InstanceKind};
use spark_core::pim::{self, BankState, CacheGeometry, Mapping, XFormat};
use spark_core::sle::SquareSystem;
use spark_core::{IlpProblem, Rational};

/// Cheap deterministic stream; benches only need spread, not quality.
fn lcg(state: &mut u64) -> u64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    *state >> 33
}

/// A length-`n` coefficient row in signed 16-bit range and a non-negative
/// 8-bit operand vector.
pub fn mac_operands(n: usize, seed: u64) -> (Vec<i64>, Vec<i64>) {
    let mut s = seed;
    let coeffs = (0..n).map(|_| (lcg(&mut s) % 65536) as i64 - 32768).collect();
    let x = (0..n).map(|_| (lcg(&mut s) % 256) as i64).collect();
    (coeffs, x)
}

pub const X8: XFormat = XFormat { width: 8, signed: false };

/// `row` stored alone in a default-geometry array.
pub fn stored_row(row: &[i64]) -> (Mapping, BankState) {
    pim::store_coefficients(&[row.to_vec()], &CacheGeometry::default()).expect("row fits")
}

/// Strictly diagonally dominant `k x k` system with integer rhs.
pub fn dominant_system(k: usize, seed: u64) -> SquareSystem {
    let mut s = seed;
    let mut m = vec![vec![0i64; k]; k];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = (lcg(&mut s) % 7) as i64 - 3;
            }
        }
        let off: i64 = row.iter().map(|v| v.abs()).sum();
        row[i] = off + 1 + (lcg(&mut s) % 5) as i64;
    }
    let rhs = (0..k).map(|_| Rational::from_integer((lcg(&mut s) % 40) as i128)).collect();
    SquareSystem::from_dense(m, rhs).expect("square")
}

/// Dividend/divisor pairs with non-zero divisors.
pub fn div_pairs(count: usize, seed: u64) -> Vec<(i64, i64)> {
    let mut s = seed;
    (0..count)
        .map(|_| {
            let a = (lcg(&mut s) % 1_000_000) as i64 - 500_000;
            let b = (lcg(&mut s) % 4095) as i64 + 1;
            (a, b)
        })
        .collect()
}

pub fn sparse_instance(n: usize) -> IlpProblem {
    gen_instance(&InstanceKind::Investment { n }, 7).expect("generator")
}

pub fn dense_instance(seed: u64) -> IlpProblem {
    spark_core::generate::dense_family(seed)
}
