//! Jacobi engine for the square system picked out of the constraint set.
//!
//! Two numeric modes share the same update rule. The reference mode runs
//! in `f64`. The PIM mode keeps X on a fixed-point grid, computes every
//! off-diagonal dot product on the array model and divides with the
//! regularizing divider (or an exact divider), charging each step to a
//! [`Meter`]. Iter1/Iter2 are kept as two buffers that swap after a step.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::cost::{EventKind, MacBatch, Meter};
use crate::divider::{approx_divide, exact_divide, DivConfig};
use crate::error::{Error, Result};
use crate::pim::{self, CacheGeometry, XFormat};
use crate::problem::{IlpProblem, Status};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareSystem {
    pub matrix: Vec<Vec<i64>>,
    #[serde(with = "crate::rational::serde_rational_vec")]
    pub rhs: Vec<Rational>,
    /// Original constraint behind each system row.
    pub rows: Vec<usize>,
    /// Variable behind each system column; column `i` is row `i`'s diagonal.
    pub vars: Vec<usize>,
    /// Constraints left out of the system, to be verified afterwards.
    pub rest: Vec<usize>,
}

impl SquareSystem {
    /// A bare system; rows and columns map to themselves.
    pub fn from_dense(matrix: Vec<Vec<i64>>, rhs: Vec<Rational>) -> Result<Self> {
        let k = matrix.len();
        if rhs.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: rhs.len() });
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            if row[i] == 0 {
                return Err(Error::NoDiagonal { var: i });
            }
        }
        Ok(Self { matrix, rhs, rows: (0..k).collect(), vars: (0..k).collect(), rest: Vec::new() })
    }

    pub fn k(&self) -> usize {
        self.matrix.len()
    }

    pub fn rhs_f64(&self) -> Vec<f64> {
        self.rhs.iter().map(rational::to_f64).collect()
    }

    /// `‖M·x − b‖∞`.
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        self.matrix
            .iter()
            .zip(self.rhs_f64())
            .map(|(row, b)| (row.iter().zip(x).map(|(m, v)| *m as f64 * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    /// Strict row diagonal dominance.
    pub fn is_diagonally_dominant(&self) -> bool {
        self.matrix.iter().enumerate().all(|(i, row)| {
            let off: i64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
            row[i].abs() > off
        })
    }
}

fn fold_rhs(problem: &IlpProblem, row: usize, fixed: &BTreeMap<usize, Rational>) -> Rational {
    let c = &problem.constraints[row];
    fixed
        .iter()
        .fold(rational::int(c.rhs), |acc, (&j, v)| acc - v * c.coeffs[j] as i128)
}

/// Pick one constraint per free variable, greedily taking the unused row
/// with the largest coefficient on that variable. Fixed variables are
/// folded into the right-hand side.
pub fn select_square_system(problem: &IlpProblem, fixed: &BTreeMap<usize, Rational>) -> Result<SquareSystem> {
    let vars: Vec<usize> = (0..problem.n()).filter(|j| !fixed.contains_key(j)).collect();
    let coeff = |i: usize, j: usize| problem.constraints[i].coeffs[j];
    let m = problem.m();
    let mut used = vec![false; m];
    let mut pick = vec![usize::MAX; vars.len()];
    let mut greedy_ok = true;
    for (slot, &j) in vars.iter().enumerate() {
        let best = (0..m)
            .filter(|&i| !used[i] && coeff(i, j) != 0)
            .max_by_key(|&i| (coeff(i, j).abs(), std::cmp::Reverse(i)));
        match best {
            Some(i) => {
                used[i] = true;
                pick[slot] = i;
            }
            None => {
                greedy_ok = false;
                break;
            }
        }
    }
    if !greedy_ok {
        pick = matching(m, &vars, |i, j| coeff(i, j) != 0)?;
    }
    let rows = pick;
    let matrix = rows
        .iter()
        .map(|&i| vars.iter().map(|&j| coeff(i, j)).collect())
        .collect();
    let rhs = rows.iter().map(|&i| fold_rhs(problem, i, fixed)).collect();
    let rest = (0..m).filter(|i| !rows.contains(i)).collect();
    Ok(SquareSystem { matrix, rhs, rows, vars, rest })
}

/// Bipartite matching of variables to rows (augmenting paths).
fn matching(m: usize, vars: &[usize], ok: impl Fn(usize, usize) -> bool) -> Result<Vec<usize>> {
    fn augment(
        slot: usize,
        vars: &[usize],
        m: usize,
        ok: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        row_owner: &mut [Option<usize>],
    ) -> bool {
        for i in 0..m {
            if ok(i, vars[slot]) && !seen[i] {
                seen[i] = true;
                if row_owner[i].map_or(true, |s| augment(s, vars, m, ok, seen, row_owner)) {
                    row_owner[i] = Some(slot);
                    return true;
                }
            }
        }
        false
    }
    let mut row_owner = vec![None; m];
    for slot in 0..vars.len() {
        let mut seen = vec![false; m];
        if !augment(slot, vars, m, &ok, &mut seen, &mut row_owner) {
            return Err(Error::NoDiagonal { var: vars[slot] });
        }
    }
    let mut pick = vec![0; vars.len()];
    for (i, owner) in row_owner.iter().enumerate() {
        if let Some(s) = owner {
            pick[*s] = i;
        }
    }
    Ok(pick)
}

/// Square system over the given rows and variables, with rows ordered so
/// that the product of `|diagonal|` is maximal (exhaustive up to six rows,
/// greedy beyond).
pub fn build_system(
    problem: &IlpProblem,
    rows: &[usize],
    vars: &[usize],
    fixed: &BTreeMap<usize, Rational>,
) -> Result<SquareSystem> {
    let k = vars.len();
    if rows.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: rows.len() });
    }
    let coeff = |i: usize, j: usize| problem.constraints[i].coeffs[j];
    let order = if k <= 6 {
        best_permutation(k, |r, c| coeff(rows[r], vars[c]).unsigned_abs())
    } else {
        let sub: Vec<usize> = rows.to_vec();
        let mut used = vec![false; k];
        let mut order = Vec::with_capacity(k);
        for &j in vars {
            let r = (0..k)
                .filter(|&r| !used[r] && coeff(sub[r], j) != 0)
                .max_by_key(|&r| (coeff(sub[r], j).abs(), std::cmp::Reverse(r)));
            match r {
                Some(r) => {
                    used[r] = true;
                    order.push(r);
                }
                None => None.ok_or(Error::NoDiagonal { var: j })?,
            }
        }
        Some(order)
    };
    let order = order.ok_or(Error::NoDiagonal { var: vars.first().copied().unwrap_or(0) })?;
    let rows: Vec<usize> = order.iter().map(|&r| rows[r]).collect();
    let matrix = rows.iter().map(|&i| vars.iter().map(|&j| coeff(i, j)).collect()).collect();
    let rhs = rows.iter().map(|&i| fold_rhs(problem, i, fixed)).collect();
    let rest = (0..problem.m()).filter(|i| !rows.contains(i)).collect();
    Ok(SquareSystem { matrix, rhs, rows, vars: vars.to_vec(), rest })
}

/// Assignment of rows to columns maximizing the product of `w(row, col)`;
/// `None` when every assignment hits a zero.
fn best_permutation(k: usize, w: impl Fn(usize, usize) -> u64) -> Option<Vec<usize>> {
    fn go(
        col: usize,
        k: usize,
        w: &dyn Fn(usize, usize) -> u64,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        prod: f64,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if col == k {
            if best.as_ref().map_or(true, |(b, _)| prod > *b) {
                *best = Some((prod, cur.clone()));
            }
            return;
        }
        for r in 0..k {
            let v = w(r, col);
            if used[r] || v == 0 {
                continue;
            }
            used[r] = true;
            cur.push(r);
            go(col + 1, k, w, used, cur, prod * v as f64, best);
            cur.pop();
            used[r] = false;
        }
    }
    let mut best = None;
    go(0, k, &w, &mut vec![false; k], &mut Vec::with_capacity(k), 1.0, &mut best);
    best.map(|(_, p)| p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiState<T> {
    pub iter1: Vec<T>,
    pub iter2: Vec<T>,
    pub iteration: u64,
    pub l1: T,
}

impl<T: Clone + Default> JacobiState<T> {
    pub fn new(k: usize) -> Self {
        Self { iter1: vec![T::default(); k], iter2: vec![T::default(); k], iteration: 0, l1: T::default() }
    }

    pub fn from_start(x0: Vec<T>) -> Self {
        let k = x0.len();
        Self { iter1: x0, iter2: vec![T::default(); k], iteration: 0, l1: T::default() }
    }

    /// End of iteration: Iter2 becomes the next Iter1.
    pub fn commit(&mut self) {
        std::mem::swap(&mut self.iter1, &mut self.iter2);
    }
}

/// One reference step: `iter2_j = (b_j − Σ_{k≠j} M_jk·iter1_k) / M_jj`.
pub fn jacobi_step(state: &mut JacobiState<f64>, sys: &SquareSystem) {
    let order: Vec<usize> = (0..sys.k()).collect();
    jacobi_step_ordered(state, sys, &order);
}

/// [`jacobi_step`] visiting the rows in `order`.
pub fn jacobi_step_ordered(state: &mut JacobiState<f64>, sys: &SquareSystem, order: &[usize]) {
    let b = sys.rhs_f64();
    for &j in order {
        let row = &sys.matrix[j];
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(k, m)| *m as f64 * state.iter1[k])
            .sum();
        state.iter2[j] = (b[j] - off) / row[j] as f64;
    }
    state.l1 = state.iter2.iter().zip(&state.iter1).map(|(a, b)| (a - b).abs()).sum();
    state.iteration += 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleOutcome {
    pub status: Status,
    pub x: Vec<f64>,
    pub iterations: u64,
    pub l1: f64,
}

const DIVERGED: f64 = 1e30;

/// Iterate until the L1 change drops below `epsilon` or `max_iters` steps.
pub fn solve_sle(sys: &SquareSystem, epsilon: f64, max_iters: u64) -> Result<SleOutcome> {
    solve_sle_from(sys, vec![0.0; sys.k()], epsilon, max_iters)
}

pub fn solve_sle_from(sys: &SquareSystem, x0: Vec<f64>, epsilon: f64, max_iters: u64) -> Result<SleOutcome> {
    if !(epsilon > 0.0) || max_iters == 0 {
        return Err(Error::InvalidParams("epsilon must be positive and max_iters at least 1".into()));
    }
    let mut st = JacobiState::from_start(x0);
    loop {
        jacobi_step(&mut st, sys);
        if st.l1 < epsilon {
            return Ok(SleOutcome { status: Status::Optimal, x: st.iter2, iterations: st.iteration, l1: st.l1 });
        }
        if st.iteration >= max_iters || !st.l1.is_finite() || st.l1 > DIVERGED {
            return Ok(SleOutcome { status: Status::NotConverged, x: st.iter2, iterations: st.iteration, l1: st.l1 });
        }
        st.commit();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimSolveConfig {
    pub frac_bits: u32,
    pub x_width: u32,
    pub max_iters: u64,
    /// Convergence threshold on the L1 change, in grid units.
    pub eps_ulps: u64,
    /// Iterations without a new L1 minimum before a near-converged run is
    /// declared stalled (and accepted).
    pub stall_window: u64,
    /// `None` divides exactly.
    pub divider: Option<DivConfig>,
    /// Walk the bit-level array model instead of the popcount shortcut.
    pub bit_accurate: bool,
    pub geometry: CacheGeometry,
}

impl Default for PimSolveConfig {
    fn default() -> Self {
        Self {
            frac_bits: 8,
            x_width: 32,
            max_iters: 100_000,
            eps_ulps: 1,
            stall_window: 64,
            divider: Some(DivConfig::default()),
            bit_accurate: false,
            geometry: CacheGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimOutcome {
    pub status: Status,
    /// Values on the `2^-frac_bits` grid.
    pub x_q: Vec<i64>,
    pub frac_bits: u32,
    pub iterations: u64,
    pub l1_q: u64,
    pub overflow: bool,
    pub stalled: bool,
}

impl PimOutcome {
    pub fn x_f64(&self) -> Vec<f64> {
        let s = (1u64 << self.frac_bits) as f64;
        self.x_q.iter().map(|v| *v as f64 / s).collect()
    }
}

/// Round-to-nearest fixed-point encoding of `r`.
pub fn quantize(r: &Rational, frac_bits: u32) -> Result<i64> {
    let scaled = r * (1i128 << frac_bits);
    let q = rational::floor(&(scaled + Rational::new(1, 2)));
    i64::try_from(q).map_err(|_| Error::Quantization { value: q, width: 64 })
}

/// Fixed-point Jacobi on the array model. Dot products skip the diagonal
/// by driving a zero X bit on it; each step is charged as one MAC batch,
/// three ALU ops and one division per row, and one Iter1 read plus one
/// Iter2 write per row.
pub fn solve_sle_pim(
    sys: &SquareSystem,
    cfg: &PimSolveConfig,
    x0: Option<&[i64]>,
    mut meter: Option<&mut Meter>,
) -> Result<PimOutcome> {
    let k = sys.k();
    let f = cfg.frac_bits;
    let fmt = XFormat { width: cfg.x_width, signed: true };
    if cfg.max_iters == 0 || f >= cfg.x_width || cfg.x_width > 62 {
        return Err(Error::InvalidParams("bad fixed-point solver configuration".into()));
    }
    if let Some(d) = &cfg.divider {
        d.validate()?;
    }
    let b_q: Vec<i64> = sys.rhs.iter().map(|r| quantize(r, f)).collect::<Result<_>>()?;
    let stored = if cfg.bit_accurate {
        Some(pim::store_coefficients(&sys.matrix, &cfg.geometry)?)
    } else {
        None
    };
    let word_bits = cfg.geometry.word_bits;
    let mut st = JacobiState::<i64>::from_start(x0.map_or_else(|| vec![0; k], <[i64]>::to_vec));
    let mut best = u64::MAX;
    let mut since_best = 0u64;
    let stall_tol = 8 * k as u64 * cfg.eps_ulps.max(1);
    let done = |st: JacobiState<i64>, status, overflow, stalled| PimOutcome {
        status,
        x_q: st.iter2,
        frac_bits: f,
        iterations: st.iteration,
        l1_q: st.l1 as u64,
        overflow,
        stalled,
    };
    loop {
        let mut discharges = 0u64;
        let mut masked = st.iter1.clone();
        for j in 0..k {
            let saved = masked[j];
            masked[j] = 0;
            let mac = match &stored {
                Some((mapping, bank)) => pim::mac_vector(bank, mapping, j, &masked, fmt)?,
                None => pim::mac_fast(&sys.matrix[j], &masked, fmt, word_bits, cfg.geometry.x_bits)?,
            };
            masked[j] = saved;
            discharges += mac.discharges;
            let num = b_q[j] as i128 - mac.value;
            let diag = sys.matrix[j][j];
            let next = match i64::try_from(num) {
                Ok(num) => {
                    let den = diag << f;
                    match &cfg.divider {
                        Some(d) => approx_divide(num, den, f, d),
                        None => exact_divide(num, den, f),
                    }
                }
                Err(_) => Err(Error::Overflow("jacobi numerator")),
            };
            match next {
                Ok(v) if fmt.check(v).is_ok() => st.iter2[j] = v,
                Ok(_) | Err(Error::Overflow(_)) => {
                    st.iteration += 1;
                    return Ok(done(st, Status::NotConverged, true, false));
                }
                Err(e) => return Err(e),
            }
        }
        st.iteration += 1;
        let l1: u64 = st.iter2.iter().zip(&st.iter1).map(|(a, b)| a.abs_diff(*b)).sum();
        st.l1 = l1 as i64;
        if let Some(m) = meter.as_deref_mut() {
            let lanes = cfg.geometry.banks as u64;
            m.record_mac(MacBatch {
                rows: k as u64,
                products: (k * k) as u64,
                discharges,
                slices: fmt.slices(cfg.geometry.x_bits),
                x_width: cfg.x_width as u64,
            });
            m.record_parallel(EventKind::SubOp, 3 * k as u64, lanes);
            let div = if cfg.divider.is_some() { EventKind::DivOp } else { EventKind::ExactDivOp };
            m.record_parallel(div, k as u64, lanes);
            let q = m.config().queue_lanes;
            m.record_parallel(EventKind::QueueRw, 2 * k as u64, q);
        }
        if l1 < cfg.eps_ulps {
            return Ok(done(st, Status::Optimal, false, false));
        }
        if l1 < best {
            best = l1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.stall_window && best <= stall_tol {
                return Ok(done(st, Status::Optimal, false, true));
            }
        }
        if st.iteration >= cfg.max_iters {
            return Ok(done(st, Status::NotConverged, false, false));
        }
        st.commit();
    }
}

/// Fraction-free (Bareiss) determinant.
pub fn determinant(matrix: &[Vec<i64>]) -> Result<i128> {
    let k = matrix.len();
    if k == 0 {
        return Ok(1);
    }
    let mut a: Vec<Vec<i128>> = matrix.iter().map(|r| r.iter().map(|v| *v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for p in 0..k {
        if a[p][p] == 0 {
            match (p + 1..k).find(|&r| a[r][p] != 0) {
                Some(r) => {
                    a.swap(p, r);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in p + 1..k {
            for j in p + 1..k {
                let v = a[i][j]
                    .checked_mul(a[p][p])
                    .zip(a[i][p].checked_mul(a[p][j]))
                    .and_then(|(x, y)| x.checked_sub(y))
                    .ok_or(Error::Overflow("determinant"))?;
                a[i][j] = v / prev;
            }
            a[i][p] = 0;
        }
        prev = a[p][p];
    }
    Ok(sign * a[k - 1][k - 1])
}

/// Exact inverse by Gauss-Jordan elimination over rationals.
pub fn inverse(matrix: &[Vec<i64>]) -> Result<Vec<Vec<Rational>>> {
    let k = matrix.len();
    let mut a: Vec<Vec<Rational>> = matrix
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row: Vec<Rational> = r.iter().map(|v| rational::int(*v)).collect();
            row.extend((0..k).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            row
        })
        .collect();
    gauss_jordan(&mut a, k)?;
    Ok(a.into_iter().map(|r| r[k..].to_vec()).collect())
}

fn gauss_jordan(a: &mut [Vec<Rational>], k: usize) -> Result<()> {
    for p in 0..k {
        let r = (p..k).find(|&r| !a[r][p].is_zero()).ok_or(Error::Singular)?;
        a.swap(p, r);
        let piv = a[p][p];
        for v in a[p].iter_mut() {
            *v /= piv;
        }
        let pivot_row = a[p].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == p || row[p].is_zero() {
                continue;
            }
            let factor = row[p];
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
    }
    Ok(())
}

/// Direct exact solve, the fallback when Jacobi cannot produce a point.
pub fn solve_direct(sys: &SquareSystem) -> Result<Vec<Rational>> {
    let k = sys.k();
    let mut a: Vec<Vec<Rational>> = sys
        .matrix
        .iter()
        .zip(&sys.rhs)
        .map(|(r, b)| r.iter().map(|v| rational::int(*v)).chain([*b]).collect())
        .collect();
    gauss_jordan(&mut a, k)?;
    Ok(a.into_iter().map(|r| r[k]).collect())
}

/// Charge a direct solve: `k³/3` eliminations as subtract/divide pairs.
pub fn charge_direct(meter: &mut Meter, k: usize) {
    let ops = ((k * k * k) as u64).div_ceil(3).max(1);
    let lanes = 1;
    meter.record_parallel(EventKind::SubOp, ops, lanes);
    meter.record_parallel(EventKind::ExactDivOp, (k * k) as u64, lanes);
}

/// Snap approximate values to the `1/den` grid and check `M·x = b`
/// exactly. Returns the snapped point when it satisfies the system.
pub fn snap_to_grid(sys: &SquareSystem, x: &[f64], den: i128) -> Option<Vec<Rational>> {
    let den = den.abs();
    if den == 0 {
        return None;
    }
    let snapped: Vec<Rational> = x
        .iter()
        .map(|v| {
            let s = (v * den as f64).round();
            (s.is_finite() && s.abs() < 1e30).then(|| Rational::new(s as i128, den))
        })
        .collect::<Option<_>>()?;
    let ok = sys
        .matrix
        .iter()
        .zip(&sys.rhs)
        .all(|(row, b)| rational::dot(row, &snapped) == *b);
    ok.then_some(snapped)
}

/// Least common multiple of the rhs denominators.
pub fn rhs_denominator(sys: &SquareSystem) -> i128 {
    sys.rhs.iter().fold(1i128, |acc, r| acc.lcm(r.denom()))
}

/// True when the system is singular or numerically unusable.
pub fn is_singular(sys: &SquareSystem) -> bool {
    determinant(&sys.matrix).map_or(true, |d| d.is_zero())
}

pub fn abs_det(sys: &SquareSystem) -> Result<i128> {
    Ok(determinant(&sys.matrix)?.abs())
}
