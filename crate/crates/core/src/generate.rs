//! Seeded instance generators.
//!
//! Every generator is a pure function of its parameters and seed
//! (ChaCha8 stream), so regenerated instances are byte-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Constraint, IlpProblem, RawProblem, RawRow, Relation, Sense, DEFAULT_COEFF_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceKind {
    Transportation { sources: usize, dests: usize },
    Investment { n: usize },
    #[serde(rename = "random")]
    RandomDense { n: usize, m: usize },
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gen_instance(kind: &InstanceKind, seed: u64) -> Result<IlpProblem> {
    let mut r = rng(seed);
    match *kind {
        InstanceKind::Transportation { sources, dests } => {
            if sources == 0 || dests == 0 {
                return Err(Error::InvalidParams("transportation needs sources and dests".into()));
            }
            let demands: Vec<i64> = (0..dests).map(|_| r.gen_range(2..=10)).collect();
            let mut supplies: Vec<i64> = (0..sources).map(|_| r.gen_range(2..=10)).collect();
            let deficit = demands.iter().sum::<i64>() - supplies.iter().sum::<i64>();
            if deficit > 0 {
                supplies[sources - 1] += deficit;
            }
            let costs: Vec<Vec<i64>> = (0..sources)
                .map(|_| (0..dests).map(|_| r.gen_range(1..=9)).collect())
                .collect();
            transportation(&supplies, &demands, &costs)
        }
        InstanceKind::Investment { n } => {
            if n == 0 {
                return Err(Error::InvalidParams("investment needs n >= 1".into()));
            }
            let returns: Vec<i64> = (0..n).map(|_| r.gen_range(1..=9)).collect();
            let prices: Vec<i64> = (0..n).map(|_| r.gen_range(1..=9)).collect();
            let limits: Vec<i64> = (0..n).map(|_| r.gen_range(1..=6)).collect();
            let full: i64 = prices.iter().zip(&limits).map(|(p, l)| p * l).sum();
            let budget = r.gen_range((full / 2).max(1)..=full);
            investment(&returns, &prices, &limits, budget)
        }
        InstanceKind::RandomDense { n, m } => random_dense_with(&mut r, n, m),
    }
}

/// Minimum-cost transportation from `supplies.len()` sources to
/// `demands.len()` destinations; `x[i][j]` is flattened row-major.
pub fn transportation(supplies: &[i64], demands: &[i64], costs: &[Vec<i64>]) -> Result<IlpProblem> {
    let (s, d) = (supplies.len(), demands.len());
    if s == 0 || d == 0 || costs.len() != s || costs.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidParams("transportation dimensions disagree".into()));
    }
    if supplies.iter().sum::<i64>() < demands.iter().sum::<i64>() {
        return Err(Error::InvalidParams("total supply is below total demand".into()));
    }
    let n = s * d;
    let mut rows = Vec::with_capacity(s + d);
    for (i, &supply) in supplies.iter().enumerate() {
        let mut coeffs = vec![0; n];
        coeffs[i * d..(i + 1) * d].fill(1);
        rows.push(RawRow { coeffs, relation: Relation::Le, rhs: supply });
    }
    for (j, &demand) in demands.iter().enumerate() {
        let mut coeffs = vec![0; n];
        for i in 0..s {
            coeffs[i * d + j] = 1;
        }
        rows.push(RawRow { coeffs, relation: Relation::Ge, rhs: demand });
    }
    RawProblem {
        sense: Sense::Min,
        cost: costs.iter().flatten().copied().collect(),
        rows,
        integral: true,
        coeff_width: DEFAULT_COEFF_WIDTH,
    }
    .normalize()
}

/// Maximize total return under per-asset limits and one budget row.
pub fn investment(returns: &[i64], prices: &[i64], limits: &[i64], budget: i64) -> Result<IlpProblem> {
    let n = returns.len();
    if n == 0 || prices.len() != n || limits.len() != n {
        return Err(Error::InvalidParams("investment dimensions disagree".into()));
    }
    if budget <= 0 {
        return Err(Error::InvalidParams("budget must be positive".into()));
    }
    let mut constraints: Vec<Constraint> = limits
        .iter()
        .enumerate()
        .map(|(j, &limit)| {
            let mut c = vec![0; n];
            c[j] = 1;
            Constraint::new(c, limit)
        })
        .collect();
    constraints.push(Constraint::new(prices.to_vec(), budget));
    IlpProblem::new(Sense::Max, returns.to_vec(), constraints, true)
}

pub fn random_dense(n: usize, m: usize, seed: u64) -> Result<IlpProblem> {
    random_dense_with(&mut rng(seed), n, m)
}

/// Row 0 is a positive capacity row that keeps every variable inside
/// `[0, 8]`; the remaining rows draw coefficients from `[-9, 9]` with at
/// least two non-zeros when `n >= 2`.
fn random_dense_with(r: &mut ChaCha8Rng, n: usize, m: usize) -> Result<IlpProblem> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParams("random instances need n, m >= 1".into()));
    }
    let cap: Vec<i64> = (0..n).map(|_| r.gen_range(1..=9)).collect();
    let min_c = *cap.iter().min().unwrap();
    let cap_rhs = r.gen_range(min_c..=8 * min_c);
    let mut constraints = vec![Constraint::new(cap, cap_rhs)];
    while constraints.len() < m {
        let coeffs: Vec<i64> = (0..n).map(|_| r.gen_range(-9..=9)).collect();
        let nnz = coeffs.iter().filter(|c| **c != 0).count();
        if nnz < n.min(2) {
            continue;
        }
        constraints.push(Constraint::new(coeffs, r.gen_range(-4..=30)));
    }
    let cost = (0..n).map(|_| r.gen_range(-9..=9)).collect();
    let sense = if r.gen_bool(0.5) { Sense::Max } else { Sense::Min };
    IlpProblem::new(sense, cost, constraints, true)
}

/// The dense verification family: `n <= 5`, `m <= 7`, `|coeff| <= 9`,
/// every variable boxed within `[0, 8]`.
pub fn dense_family(seed: u64) -> IlpProblem {
    let mut r = rng(seed ^ 0xD15E_A5E0);
    let n = r.gen_range(1..=5);
    let m = r.gen_range(1..=7);
    random_dense_with(&mut r, n, m).expect("family parameters are valid")
}

/// The cardinality-constrained family: one upper-bound row per variable
/// (bounds `<= 6`, coefficient 1 or 2) plus one or two budget rows whose
/// right-hand side covers between half and all of the full allocation.
pub fn cardinality_family(seed: u64) -> IlpProblem {
    let mut r = rng(seed ^ 0xCA4D_0000);
    let n = r.gen_range(1..=5);
    let generals = r.gen_range(1..=2);
    let mut constraints = Vec::with_capacity(n + generals);
    let mut bounds = Vec::with_capacity(n);
    for j in 0..n {
        let scale = if r.gen_bool(0.25) { 2 } else { 1 };
        let bound = r.gen_range(1..=6);
        let mut c = vec![0; n];
        c[j] = scale;
        constraints.push(Constraint::new(c, bound * scale + r.gen_range(0..scale)));
        bounds.push(bound);
    }
    for _ in 0..generals {
        let coeffs: Vec<i64> = (0..n).map(|_| r.gen_range(1..=9)).collect();
        let full: i64 = coeffs.iter().zip(&bounds).map(|(c, b)| c * b).sum();
        let rhs = r.gen_range((full / 2).max(1)..=full);
        constraints.push(Constraint::new(coeffs, rhs));
    }
    let cost = (0..n).map(|_| r.gen_range(1..=9)).collect();
    IlpProblem::new(Sense::Max, cost, constraints, true).expect("family parameters are valid")
}
