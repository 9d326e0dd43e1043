//! Ground truth for tests and the `verify` command.
//!
//! Deliberately shares nothing with the engines beyond the problem type:
//! arithmetic is arbitrary precision throughout and the enumeration is a
//! plain odometer over the integer box.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::problem::{IlpProblem, Sense, Solution, Status};
use crate::rational::Rational;
use crate::sle::SquareSystem;

pub const BOX_CAP: u128 = 10_000_000;

/// Per-variable enumeration limit: the smallest `floor(D_i / C_ij)` over
/// rows whose coefficients are all non-negative. A negative entry means
/// the box is empty.
pub fn derive_box(problem: &IlpProblem) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(problem.n());
    for j in 0..problem.n() {
        let mut best: Option<i64> = None;
        for c in &problem.constraints {
            if c.coeffs[j] <= 0 || c.coeffs.iter().any(|v| *v < 0) {
                continue;
            }
            let q = c.rhs.div_euclid(c.coeffs[j]);
            best = Some(best.map_or(q, |b| b.min(q)));
        }
        out.push(best.ok_or(Error::UnboundedBox { var: j })?);
    }
    Ok(out)
}

pub fn box_points(bx: &[i64]) -> u128 {
    if bx.iter().any(|b| *b < 0) {
        return 0;
    }
    bx.iter().fold(1u128, |acc, b| acc.saturating_mul(*b as u128 + 1))
}

fn big(v: i64) -> BigInt {
    BigInt::from(v)
}

fn to_rational(v: &BigInt) -> Rational {
    Rational::from_integer(v.to_i128().expect("oracle values fit in i128"))
}

fn improves(sense: Sense, a: &BigInt, b: &BigInt) -> bool {
    match sense {
        Sense::Max => a > b,
        Sense::Min => a < b,
    }
}

/// Exhaustive scan of `0 <= x_j <= bx[j]`. The first optimum met in
/// odometer order (variable 0 turning fastest) is returned.
pub fn brute_force_ilp(problem: &IlpProblem, bx: &[i64]) -> Result<Solution> {
    brute_force_capped(problem, bx, BOX_CAP)
}

pub fn brute_force_capped(problem: &IlpProblem, bx: &[i64], cap: u128) -> Result<Solution> {
    let n = problem.n();
    if bx.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: bx.len() });
    }
    let points = box_points(bx);
    if points > cap {
        return Err(Error::BoxTooLarge { points, cap });
    }
    if points == 0 {
        return Ok(Solution::empty(Status::Infeasible));
    }
    let m = problem.m();
    let coeff: Vec<Vec<BigInt>> = problem.constraints.iter().map(|c| c.coeffs.iter().map(|v| big(*v)).collect()).collect();
    let rhs: Vec<BigInt> = problem.constraints.iter().map(|c| big(c.rhs)).collect();
    let cost: Vec<BigInt> = problem.cost.iter().map(|v| big(*v)).collect();
    let mut x = vec![0i64; n];
    let mut lhs = vec![BigInt::zero(); m];
    let mut obj = BigInt::zero();
    let mut best: Option<(Vec<i64>, BigInt)> = None;
    loop {
        if lhs.iter().zip(&rhs).all(|(l, r)| l <= r)
            && best.as_ref().map_or(true, |(_, b)| improves(problem.sense, &obj, b))
        {
            best = Some((x.clone(), obj.clone()));
        }
        // advance the odometer
        let mut j = 0;
        loop {
            if j == n {
                return Ok(finish(problem, best));
            }
            if x[j] < bx[j] {
                x[j] += 1;
                for i in 0..m {
                    lhs[i] += &coeff[i][j];
                }
                obj += &cost[j];
                break;
            }
            let back = big(x[j]);
            for i in 0..m {
                lhs[i] -= &coeff[i][j] * &back;
            }
            obj -= &cost[j] * &back;
            x[j] = 0;
            j += 1;
        }
    }
}

fn finish(problem: &IlpProblem, best: Option<(Vec<i64>, BigInt)>) -> Solution {
    let Some((x, obj)) = best else {
        return Solution::empty(Status::Infeasible);
    };
    // recompute from scratch: the incremental sums must agree
    let xb: Vec<BigInt> = x.iter().map(|v| big(*v)).collect();
    let direct: BigInt = problem.cost.iter().zip(&xb).map(|(c, v)| big(*c) * v).sum();
    assert_eq!(direct, obj, "oracle objective drifted");
    for c in &problem.constraints {
        let l: BigInt = c.coeffs.iter().zip(&xb).map(|(a, v)| big(*a) * v).sum();
        assert!(l <= big(c.rhs), "oracle optimum violates a row");
    }
    Solution { status: Status::Optimal, x: xb.iter().map(to_rational).collect(), objective: Some(to_rational(&obj)) }
}

/// Box derivation followed by the exhaustive scan.
pub fn brute_force(problem: &IlpProblem) -> Result<Solution> {
    brute_force_ilp(problem, &derive_box(problem)?)
}

fn big_ratio(r: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Exact solve of a square system by Gauss-Jordan elimination.
pub fn lp_reference(sys: &SquareSystem) -> Result<Vec<BigRational>> {
    let k = sys.k();
    let mut a: Vec<Vec<BigRational>> = sys
        .matrix
        .iter()
        .zip(&sys.rhs)
        .map(|(row, b)| {
            let mut r: Vec<BigRational> = row.iter().map(|v| BigRational::from_integer(big(*v))).collect();
            r.push(big_ratio(b));
            r
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).find(|&r| !a[r][col].is_zero()).ok_or(Error::Singular)?;
        a.swap(col, pivot);
        let inv = BigRational::one() / &a[col][col];
        for v in a[col].iter_mut() {
            *v = &*v * &inv;
        }
        for r in 0..k {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in col..=k {
                let d = &a[col][c] * &f;
                a[r][c] -= d;
            }
        }
    }
    Ok(a.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

/// `lp_reference` narrowed back to engine rationals.
pub fn lp_reference_small(sys: &SquareSystem) -> Result<Vec<Rational>> {
    lp_reference(sys)?
        .iter()
        .map(|v| {
            let n = v.numer().to_i128().ok_or(Error::Overflow("oracle"))?;
            let d = v.denom().to_i128().ok_or(Error::Overflow("oracle"))?;
            Ok(Rational::new(n, d))
        })
        .collect()
}

/// `‖Mx − b‖∞` computed exactly for an `f64` iterate.
pub fn residual_inf(sys: &SquareSystem, x: &[f64]) -> f64 {
    let xs: Vec<BigRational> = x.iter().map(|v| BigRational::from_float(*v).unwrap_or_else(BigRational::zero)).collect();
    sys.matrix
        .iter()
        .zip(&sys.rhs)
        .map(|(row, b)| {
            let s: BigRational = row.iter().zip(&xs).map(|(a, v)| BigRational::from_integer(big(*a)) * v).sum();
            (s - big_ratio(b)).abs().to_f64().unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Constraint;
    use crate::rational::int;

    fn ilp(sense: Sense, cost: Vec<i64>, rows: Vec<(Vec<i64>, i64)>) -> IlpProblem {
        let cs = rows.into_iter().map(|(c, d)| Constraint::new(c, d)).collect();
        IlpProblem::new(sense, cost, cs, true).unwrap()
    }

    #[test]
    fn textbook_instance() {
        let p = ilp(Sense::Max, vec![3, 2], vec![(vec![1, 1], 4), (vec![2, 1], 6)]);
        assert_eq!(derive_box(&p).unwrap(), vec![3, 4]);
        let s = brute_force(&p).unwrap();
        assert_eq!(s.objective, Some(int(10)));
        assert_eq!(s.x, vec![int(2), int(2)]);
    }

    #[test]
    fn empty_and_degenerate() {
        let p = ilp(Sense::Max, vec![1], vec![(vec![1], -1)]);
        assert_eq!(brute_force(&p).unwrap().status, Status::Infeasible);
        let p = ilp(Sense::Min, vec![0, 0], vec![(vec![1, 1], 3)]);
        let s = brute_force(&p).unwrap();
        assert_eq!(s.objective, Some(int(0)));
        let p = ilp(Sense::Max, vec![1, 1], vec![(vec![1, -1], 3)]);
        assert_eq!(derive_box(&p), Err(Error::UnboundedBox { var: 0 }));
        assert!(matches!(brute_force_ilp(&p, &[9999, 9999]), Err(Error::BoxTooLarge { .. })));
    }

    #[test]
    fn gauss_jordan_reference() {
        let id = SquareSystem::from_dense(vec![vec![1, 0], vec![0, 1]], vec![int(3), int(-2)]).unwrap();
        assert_eq!(lp_reference_small(&id).unwrap(), vec![int(3), int(-2)]);
        let s = SquareSystem::from_dense(vec![vec![4, 1], vec![1, 3]], vec![int(9), int(7)]).unwrap();
        // 4x + y = 9, x + 3y = 7 → x = 20/11, y = 19/11
        assert_eq!(lp_reference_small(&s).unwrap(), vec![Rational::new(20, 11), Rational::new(19, 11)]);
        let sing = SquareSystem::from_dense(vec![vec![1, 1], vec![1, 1]], vec![int(1), int(1)]).unwrap();
        assert_eq!(lp_reference(&sing), Err(Error::Singular));
        assert_eq!(residual_inf(&s, &[20.0 / 11.0, 19.0 / 11.0]) < 1e-12, true);
    }
}
