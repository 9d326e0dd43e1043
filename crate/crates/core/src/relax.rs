//! LP relaxation for the dense path.
//!
//! The optimum of a bounded LP sits on a vertex: `k` free variables pinned
//! by `k` general rows while every other variable rests on one of its
//! bounds. The relaxation walks those active sets in exact integer
//! arithmetic (Cramer numerators over a common determinant), keeps the best
//! feasible vertex, and then hands the vertex's square system to the Jacobi
//! engine. The Jacobi answer is snapped to the `1/det` grid and accepted
//! only if it satisfies the system exactly; otherwise it is refined on a
//! finer grid, and as a last resort solved directly.
//!
//! Variables without any upper bound get an artificial one of 2^40; an
//! optimum resting on it means the LP is unbounded.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::cost::{EventKind, MacBatch, Meter};
use crate::error::{Error, Result};
use crate::pim::{self, XFormat};
use crate::problem::{IlpProblem, Sense, Status};
use crate::rational::{self, Rational};
use crate::sle::{self, PimSolveConfig, SquareSystem};

const BIG: i128 = 1 << 40;
const REFINE_FRAC_BITS: u32 = 24;
const REFINE_WIDTH: u32 = 60;
/// Active sets the relaxation is willing to visit.
pub const ACTIVE_SET_CAP: f64 = 5e7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBounds {
    pub lower: Vec<Rational>,
    pub upper: Vec<Option<Rational>>,
}

impl VarBounds {
    /// Bounds implied by single-variable rows and `x >= 0`. `None` when an
    /// all-zero row has a negative right-hand side.
    pub fn from_problem(problem: &IlpProblem) -> Option<Self> {
        let n = problem.n();
        let mut b = Self { lower: vec![Rational::zero(); n], upper: vec![None; n] };
        for c in &problem.constraints {
            let mut nz = c.nonzeros();
            match (nz.next(), nz.next()) {
                (None, _) if c.rhs < 0 => return None,
                (Some((j, a)), None) => {
                    let v = Rational::new(c.rhs as i128, a as i128);
                    if a > 0 {
                        b.restrict_upper(j, v);
                    } else {
                        b.restrict_lower(j, v);
                    }
                }
                _ => {}
            }
        }
        if problem.integral {
            b.round_inward();
        }
        Some(b)
    }

    pub fn restrict_upper(&mut self, j: usize, v: Rational) {
        if self.upper[j].map_or(true, |u| v < u) {
            self.upper[j] = Some(v);
        }
    }

    pub fn restrict_lower(&mut self, j: usize, v: Rational) {
        if v > self.lower[j] {
            self.lower[j] = v;
        }
    }

    pub fn round_inward(&mut self) {
        for l in &mut self.lower {
            *l = Rational::from_integer(rational::ceil(l));
        }
        for u in self.upper.iter_mut().flatten() {
            *u = Rational::from_integer(rational::floor(u));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| u.is_some_and(|u| *l > u))
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v >= l && u.map_or(true, |u| *v <= u))
    }
}

/// Rows with two or more non-zero coefficients.
pub fn general_rows(problem: &IlpProblem) -> Vec<usize> {
    problem
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.nonzeros().nth(1).is_some())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxConfig {
    pub pim: PimSolveConfig,
    /// Solve on the array model; otherwise the `f64` reference Jacobi.
    pub use_pim: bool,
    pub epsilon: f64,
    pub max_iters: u64,
    /// Solve directly when Jacobi cannot produce the vertex.
    pub direct_fallback: bool,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            pim: PimSolveConfig::default(),
            use_pim: true,
            epsilon: 1e-6,
            max_iters: 100_000,
            direct_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Every variable sits on a bound; no system to solve.
    None,
    Jacobi,
    Refined,
    Direct,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxStats {
    pub vertices: u64,
    pub system_size: usize,
    pub iterations: u64,
    pub method: SolveMethod,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxOutcome {
    pub status: Status,
    #[serde(with = "crate::rational::serde_rational_vec")]
    pub x: Vec<Rational>,
    #[serde(with = "crate::rational::serde_rational_opt")]
    pub objective: Option<Rational>,
    pub stats: RelaxStats,
}

impl RelaxOutcome {
    fn without_point(status: Status, stats: RelaxStats) -> Self {
        Self { status, x: Vec::new(), objective: None, stats }
    }
}

struct Best {
    free: Vec<usize>,
    rows: Vec<usize>,
    /// Scaled values of the non-free variables; Cramer numerators of the
    /// free ones.
    y: Vec<i128>,
    det: i128,
    obj: i128,
    big: bool,
}

#[derive(Default)]
struct Work {
    vertices: u64,
    fold_rows: u64,
    fold_products: u64,
    fold_discharges: u64,
    cramer_ops: u64,
    checks: u64,
}

fn ck(v: Option<i128>) -> Result<i128> {
    v.ok_or(Error::Overflow("relaxation"))
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + items.len() - k) else {
            return out;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// `det · M⁻¹` as integers, with `det > 0`.
fn adjugate(m: &[Vec<i64>]) -> Result<Option<(i128, Vec<Vec<i128>>)>> {
    let det = sle::determinant(m)?;
    if det == 0 {
        return Ok(None);
    }
    let inv = sle::inverse(m)?;
    let adj = inv
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| {
                    let s = v * det.abs();
                    debug_assert!(s.is_integer());
                    s.to_integer()
                })
                .collect()
        })
        .collect();
    Ok(Some((det.abs(), adj)))
}

/// Is `a/da` better than `b/db` (denominators positive)?
fn better(sense: Sense, a: i128, da: i128, b: i128, db: i128) -> Result<bool> {
    let l = ck(a.checked_mul(db))?;
    let r = ck(b.checked_mul(da))?;
    Ok(match sense {
        Sense::Max => l > r,
        Sense::Min => l < r,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Upper estimate of `(free set, row set, bound pattern)` triples.
fn active_set_count(movable: usize, general: usize) -> f64 {
    (0..=movable.min(general))
        .map(|k| binomial(movable, k) * binomial(general, k) * 2f64.powi((movable - k) as i32))
        .sum()
}

fn enumerate(problem: &IlpProblem, bounds: &VarBounds, work: &mut Work) -> Result<(Option<Best>, i128)> {
    let n = problem.n();
    let scale = bounds
        .lower
        .iter()
        .chain(bounds.upper.iter().flatten())
        .fold(1i128, |acc, r| acc.lcm(r.denom()));
    let lo: Vec<i128> = bounds.lower.iter().map(|l| (l * scale).to_integer()).collect();
    let hi: Vec<Option<i128>> = bounds.upper.iter().map(|u| u.map(|u| (u * scale).to_integer())).collect();
    let general = general_rows(problem);
    let coeff = |i: usize, j: usize| problem.constraints[i].coeffs[j] as i128;
    let d: Vec<i128> = problem.constraints.iter().map(|c| c.rhs as i128 * scale).collect();
    let movable: Vec<usize> = (0..n).filter(|&j| hi[j] != Some(lo[j])).collect();
    let pinned: Vec<usize> = (0..n).filter(|&j| hi[j] == Some(lo[j])).collect();
    let active_sets = active_set_count(movable.len(), general.len());
    if active_sets > ACTIVE_SET_CAP {
        return Err(Error::CapExceeded(format!("relaxation would visit {active_sets:.3e} active sets")));
    }
    let mut best: Option<Best> = None;
    for k in 0..=movable.len().min(general.len()) {
        for free in combinations(&movable, k) {
            let mut systems = Vec::new();
            for rows in combinations(&general, k) {
                let m: Vec<Vec<i64>> = rows
                    .iter()
                    .map(|&i| free.iter().map(|&j| problem.constraints[i].coeffs[j]).collect())
                    .collect();
                if let Some(sys) = adjugate(&m)? {
                    systems.push((rows, sys));
                }
            }
            if systems.is_empty() {
                continue;
            }
            let others: Vec<usize> = movable.iter().copied().filter(|j| !free.contains(j)).collect();
            let is_free: Vec<bool> = (0..n).map(|j| free.contains(&j)).collect();
            let touches: Vec<bool> = general
                .iter()
                .map(|&i| free.iter().any(|&j| coeff(i, j) != 0))
                .collect();
            for mask in 0u64..1 << others.len() {
                let mut y = vec![0i128; n];
                let mut big = false;
                for &j in &pinned {
                    y[j] = lo[j];
                }
                for (b, &j) in others.iter().enumerate() {
                    y[j] = if mask >> b & 1 == 0 {
                        lo[j]
                    } else {
                        hi[j].unwrap_or_else(|| {
                            big = true;
                            BIG
                        })
                    };
                }
                // partial sums over the variables resting on bounds, one
                // array dot product per general row
                let mut partial = vec![0i128; problem.m()];
                for &i in &general {
                    let mut s = 0i128;
                    for j in (0..n).filter(|&j| !is_free[j]) {
                        s = ck(s.checked_add(ck(coeff(i, j).checked_mul(y[j]))?))?;
                        work.fold_discharges += coeff(i, j).unsigned_abs().count_ones() as u64 * (y[j] as u64).count_ones() as u64;
                    }
                    partial[i] = s;
                }
                work.fold_rows += general.len() as u64;
                work.fold_products += (general.len() * (n - free.len())) as u64;
                if general.iter().zip(&touches).any(|(&i, &t)| !t && partial[i] > d[i]) {
                    continue;
                }
                let fixed_obj = (0..n)
                    .filter(|&j| !is_free[j])
                    .try_fold(0i128, |acc, j| ck(acc.checked_add(ck((problem.cost[j] as i128).checked_mul(y[j]))?)))?;
                for (rows, (det, adj)) in &systems {
                    work.vertices += 1;
                    work.fold_rows += k as u64;
                    work.fold_products += (k * (n - k)) as u64;
                    work.cramer_ops += (k * k) as u64;
                    work.checks += (general.len() - k + k) as u64;
                    for &i in rows {
                        for j in (0..n).filter(|&j| !is_free[j]) {
                            let w = problem.constraints[i].coeffs[j].unsigned_abs().count_ones() as u64;
                            work.fold_discharges += w * (y[j] as u64).count_ones() as u64;
                        }
                    }
                    let rhs: Vec<i128> = rows.iter().map(|&i| d[i] - partial[i]).collect();
                    let mut num = Vec::with_capacity(k);
                    for r in adj {
                        let mut s = 0i128;
                        for (a, b) in r.iter().zip(&rhs) {
                            s = ck(s.checked_add(ck(a.checked_mul(*b))?))?;
                        }
                        num.push(s);
                    }
                    let mut ok = true;
                    for (&j, &v) in free.iter().zip(&num) {
                        if v < ck(lo[j].checked_mul(*det))? {
                            ok = false;
                            break;
                        }
                        let cap = hi[j].unwrap_or(BIG);
                        if v > ck(cap.checked_mul(*det))? {
                            ok = false;
                            break;
                        }
                    }
                    if !ok {
                        continue;
                    }
                    for &i in &general {
                        if rows.contains(&i) {
                            continue;
                        }
                        let mut s = ck(partial[i].checked_mul(*det))?;
                        for (&j, &v) in free.iter().zip(&num) {
                            s = ck(s.checked_add(ck(coeff(i, j).checked_mul(v))?))?;
                        }
                        if s > ck(d[i].checked_mul(*det))? {
                            ok = false;
                            break;
                        }
                    }
                    if !ok {
                        continue;
                    }
                    let mut obj = ck(fixed_obj.checked_mul(*det))?;
                    for (&j, &v) in free.iter().zip(&num) {
                        obj = ck(obj.checked_add(ck((problem.cost[j] as i128).checked_mul(v))?))?;
                    }
                    let take = match &best {
                        None => true,
                        Some(b) => {
                            better(problem.sense, obj, *det, b.obj, b.det)?
                                || (b.big && !big && !better(problem.sense, b.obj, b.det, obj, *det)?)
                        }
                    };
                    if take {
                        let mut yy = y.clone();
                        for (&j, &v) in free.iter().zip(&num) {
                            yy[j] = v;
                        }
                        best = Some(Best { free: free.clone(), rows: rows.clone(), y: yy, det: *det, obj, big });
                    }
                }
            }
        }
    }
    Ok((best, scale))
}

/// Solve the LP relaxation of `problem` restricted to `bounds`.
pub fn solve_relaxation(
    problem: &IlpProblem,
    bounds: &VarBounds,
    cfg: &RelaxConfig,
    mut meter: Option<&mut Meter>,
) -> Result<RelaxOutcome> {
    let mut stats = RelaxStats { vertices: 0, system_size: 0, iterations: 0, method: SolveMethod::None, stalled: false };
    if bounds.is_empty() {
        return Ok(RelaxOutcome::without_point(Status::Infeasible, stats));
    }
    let mut work = Work::default();
    let (best, scale) = enumerate(problem, bounds, &mut work)?;
    stats.vertices = work.vertices;
    if let Some(m) = meter.as_deref_mut() {
        let x_width = cfg.pim.x_width as u64;
        m.record_mac(MacBatch {
            rows: work.fold_rows,
            products: work.fold_products,
            discharges: work.fold_discharges,
            slices: x_width.div_ceil(cfg.pim.geometry.x_bits as u64),
            x_width,
        });
        let lanes = cfg.pim.geometry.banks as u64;
        m.record_parallel(EventKind::SubOp, work.cramer_ops, lanes);
        let q = m.config().queue_lanes;
        m.record_parallel(EventKind::QueueRw, work.checks, q);
    }
    let Some(best) = best else {
        return Ok(RelaxOutcome::without_point(Status::Infeasible, stats));
    };
    if best.big {
        return Ok(RelaxOutcome::without_point(Status::Unbounded, stats));
    }
    let n = problem.n();
    let mut x: Vec<Rational> = (0..n)
        .map(|j| {
            if best.free.contains(&j) {
                Rational::new(best.y[j], best.det * scale)
            } else {
                Rational::new(best.y[j], scale)
            }
        })
        .collect();
    if !best.free.is_empty() {
        let fixed: BTreeMap<usize, Rational> = (0..n).filter(|j| !best.free.contains(j)).map(|j| (j, x[j])).collect();
        let sys = sle::build_system(problem, &best.rows, &best.free, &fixed)?;
        stats.system_size = sys.k();
        let solved = solve_square(&sys, cfg, meter.as_deref_mut(), &mut stats)?;
        match solved {
            Some(v) => {
                for (&j, val) in sys.vars.iter().zip(v) {
                    debug_assert_eq!(x[j], val);
                    x[j] = val;
                }
            }
            None => {
                stats.method = SolveMethod::Failed;
                return Ok(RelaxOutcome::without_point(Status::NotConverged, stats));
            }
        }
    }
    // near-memory check of every constraint and bound
    if let Some(m) = meter.as_deref_mut() {
        let nnz: u64 = problem.constraints.iter().map(|c| c.nonzeros().count() as u64).sum();
        let x_width = cfg.pim.x_width as u64;
        let g = &cfg.pim.geometry;
        let fmt = XFormat { width: cfg.pim.x_width, signed: true };
        let xq: Option<Vec<i64>> = x.iter().map(|v| sle::quantize(v, cfg.pim.frac_bits).ok()).collect();
        let discharges = xq.map_or(0, |xq| {
            problem
                .constraints
                .iter()
                .filter_map(|c| pim::mac_fast(&c.coeffs, &xq, fmt, g.word_bits, g.x_bits).ok())
                .map(|r| r.discharges)
                .sum()
        });
        m.record_mac(MacBatch {
            rows: problem.m() as u64,
            products: nnz,
            discharges,
            slices: x_width.div_ceil(g.x_bits as u64),
            x_width,
        });
        let q = m.config().queue_lanes;
        m.record_parallel(EventKind::QueueRw, nnz + n as u64, q);
        for i in 0..problem.m() {
            m.touch(i);
        }
    }
    let feasible = bounds.contains(&x)
        && problem
            .constraints
            .iter()
            .all(|c| rational::dot(&c.coeffs, &x) <= rational::int(c.rhs));
    if !feasible {
        return Ok(RelaxOutcome::without_point(Status::Infeasible, stats));
    }
    let objective = Some(rational::dot(&problem.cost, &x));
    Ok(RelaxOutcome { status: Status::Optimal, x, objective, stats })
}

/// Jacobi (array model or reference), then a finer-grid refinement, then
/// the direct solve. Each stage must reproduce the system exactly.
fn solve_square(
    sys: &SquareSystem,
    cfg: &RelaxConfig,
    mut meter: Option<&mut Meter>,
    stats: &mut RelaxStats,
) -> Result<Option<Vec<Rational>>> {
    let den = sle::abs_det(sys)? * sle::rhs_denominator(sys);
    if let Some(m) = meter.as_deref_mut() {
        for &r in &sys.rows {
            m.touch(r);
        }
    }
    let first = if cfg.use_pim {
        let mut pim = cfg.pim.clone();
        pim.max_iters = cfg.max_iters;
        let out = sle::solve_sle_pim(sys, &pim, None, meter.as_deref_mut())?;
        stats.iterations += out.iterations;
        stats.stalled |= out.stalled;
        (out.status == Status::Optimal).then(|| {
            let start: Vec<i64> = out
                .x_q
                .iter()
                .map(|v| v.saturating_mul(1 << (REFINE_FRAC_BITS - out.frac_bits)))
                .collect();
            (out.x_f64(), start)
        })
    } else {
        let out = sle::solve_sle(sys, cfg.epsilon, cfg.max_iters)?;
        stats.iterations += out.iterations;
        (out.status == Status::Optimal).then(|| {
            let s = (1u64 << REFINE_FRAC_BITS) as f64;
            let start = out.x.iter().map(|v| (v * s).round() as i64).collect();
            (out.x, start)
        })
    };
    if let Some((x, start)) = first {
        if let Some(v) = sle::snap_to_grid(sys, &x, den) {
            stats.method = SolveMethod::Jacobi;
            return Ok(Some(v));
        }
        let fine = PimSolveConfig {
            frac_bits: REFINE_FRAC_BITS,
            x_width: REFINE_WIDTH,
            max_iters: cfg.max_iters,
            divider: None,
            bit_accurate: false,
            ..cfg.pim.clone()
        };
        let out = sle::solve_sle_pim(sys, &fine, Some(&start), meter.as_deref_mut())?;
        stats.iterations += out.iterations;
        if out.status == Status::Optimal {
            if let Some(v) = sle::snap_to_grid(sys, &out.x_f64(), den) {
                stats.method = SolveMethod::Refined;
                return Ok(Some(v));
            }
        }
    }
    if cfg.direct_fallback {
        if let Some(m) = meter.as_deref_mut() {
            sle::charge_direct(m, sys.k());
        }
        stats.method = SolveMethod::Direct;
        return sle::solve_direct(sys).map(Some);
    }
    Ok(None)
}

/// `x` rounded down (Max) or up (Min) componentwise.
pub fn round_for(sense: Sense, x: &[Rational]) -> Vec<Rational> {
    x.iter()
        .map(|v| {
            Rational::from_integer(match sense {
                Sense::Max => rational::floor(v),
                Sense::Min => rational::ceil(v),
            })
        })
        .collect()
}

pub fn is_integral(x: &[Rational]) -> bool {
    x.iter().all(|v| v.is_integer())
}

pub fn has_negative(x: &[Rational]) -> bool {
    x.iter().any(|v| v.is_negative())
}
