//! Sparsity-aware path.
//!
//! Every variable is boxed by a CC row. A potential solution keeps all but
//! one variable at its CC bound and solves one general row for the
//! remaining one; the box corner itself is also a candidate. Candidates are
//! costed, fully re-checked against every constraint, and the best feasible
//! one wins.

use serde::{Deserialize, Serialize};

use crate::cost::{EventKind, MacBatch, Meter};
use crate::error::{Error, Result};
use crate::fc::SparsityPartition;
use crate::pim::{self, CacheGeometry, XFormat};
use crate::problem::{check_feasibility, IlpProblem, Solution, Status};
use crate::rational::{self, Rational};
use crate::sle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsEntry {
    #[serde(with = "crate::rational::serde_rational_vec")]
    pub x: Vec<Rational>,
    /// `(general row, substituted variable)`; `None` for the box corner.
    pub source: Option<(usize, usize)>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcEntry {
    pub ps_index: usize,
    #[serde(with = "crate::rational::serde_rational")]
    pub cost: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub geometry: CacheGeometry,
    pub frac_bits: u32,
    pub x_width: u32,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { geometry: CacheGeometry::default(), frac_bits: 8, x_width: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaOutcome {
    pub solution: Solution,
    pub candidates: Vec<PsEntry>,
    pub costs: Vec<PcEntry>,
    pub best: Option<usize>,
}

/// CC bounds of a sparse partition, one per variable.
fn cc_bounds(partition: &SparsityPartition, n: usize) -> Result<Vec<Rational>> {
    partition
        .bounds(n)
        .into_iter()
        .enumerate()
        .map(|(j, b)| b.ok_or(Error::UnboundedBox { var: j }))
        .collect()
}

/// Candidate vectors: the box corner first, then one per `(general row,
/// variable)` pair with a non-zero coefficient, in row then variable order.
pub fn pot_soln(partition: &SparsityPartition, problem: &IlpProblem) -> Result<Vec<PsEntry>> {
    let n = problem.n();
    let corner = cc_bounds(partition, n)?;
    let mut out = Vec::with_capacity(partition.general.len() * n + 1);
    let mut push = |x: Vec<Rational>, source| {
        let feasible = check_feasibility(problem, &x).map(|f| f.feasible).unwrap_or(false);
        out.push(PsEntry { x, source, feasible });
    };
    push(corner.clone(), None);
    for &i in &partition.general {
        let row = &problem.constraints[i];
        let full = rational::dot(&row.coeffs, &corner);
        for (k, c) in row.nonzeros() {
            let rest = full - corner[k] * Rational::from_integer(c as i128);
            let mut v = (rational::int(row.rhs) - rest) / Rational::from_integer(c as i128);
            if problem.integral {
                v = Rational::from_integer(rational::floor(&v));
            }
            let mut x = corner.clone();
            x[k] = v;
            push(x, Some((i, k)));
        }
    }
    Ok(out)
}

/// Costs of the feasible candidates and the index of the best one; the
/// first candidate wins ties.
pub fn pot_costs(candidates: &[PsEntry], problem: &IlpProblem) -> (Vec<PcEntry>, Option<usize>) {
    let mut costs = Vec::new();
    let mut best: Option<(usize, Rational)> = None;
    for (idx, c) in candidates.iter().enumerate() {
        if !c.feasible {
            continue;
        }
        let cost = rational::dot(&problem.cost, &c.x);
        costs.push(PcEntry { ps_index: idx, cost });
        if best.as_ref().map_or(true, |(_, b)| problem.sense.better(&cost, b)) {
            best = Some((idx, cost));
        }
    }
    (costs, best.map(|(i, _)| i))
}

fn discharges(coeffs: &[i64], x: &[Rational], cfg: &SaConfig) -> Result<u64> {
    let fmt = XFormat { width: cfg.x_width, signed: true };
    let xq: Vec<i64> = x.iter().map(|v| sle::quantize(v, cfg.frac_bits)).collect::<Result<_>>()?;
    Ok(pim::mac_fast(coeffs, &xq, fmt, cfg.geometry.word_bits, cfg.geometry.x_bits)?.discharges)
}

/// Full sparse solve. `NoCandidate` when no candidate is feasible.
pub fn solve_sparse(
    problem: &IlpProblem,
    partition: &SparsityPartition,
    cfg: &SaConfig,
    meter: Option<&mut Meter>,
) -> Result<SaOutcome> {
    if !partition.is_sparse {
        return Err(Error::InvalidParams("sparse solve on a dense partition".into()));
    }
    let candidates = pot_soln(partition, problem)?;
    let (costs, best) = pot_costs(&candidates, problem);
    if let Some(m) = meter {
        let n = problem.n() as u64;
        let g = partition.general.len() as u64;
        let corner = &candidates[0].x;
        let mut dis = 0;
        for &i in &partition.general {
            dis += discharges(&problem.constraints[i].coeffs, corner, cfg)?;
        }
        for c in &candidates {
            dis += discharges(&problem.cost, &c.x, cfg)?;
        }
        let cands = candidates.len() as u64;
        let x_width = cfg.x_width as u64;
        // row sums at the corner, then one cost dot product per candidate
        m.record_mac(MacBatch {
            rows: g + cands,
            products: g * n + cands * n,
            discharges: dis,
            slices: x_width.div_ceil(cfg.geometry.x_bits as u64),
            x_width,
        });
        let lanes = cfg.geometry.banks as u64;
        m.record_parallel(EventKind::SubOp, cands - 1, lanes);
        m.record_parallel(EventKind::ExactDivOp, cands - 1, lanes);
        let nnz: u64 = problem.constraints.iter().map(|c| c.nonzeros().count() as u64).sum();
        let q = m.config().queue_lanes;
        m.record_parallel(EventKind::QueueRw, cands * (nnz + n), q);
        for i in 0..problem.m() {
            m.touch(i);
        }
    }
    let solution = match best {
        Some(b) => Solution::with_point(Status::Optimal, problem, candidates[b].x.clone()),
        None => Solution::empty(Status::NoCandidate),
    };
    Ok(SaOutcome { solution, candidates, costs, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fc::detect_sparsity;
    use crate::generate::investment;
    use crate::rational::int;

    fn pts(v: &[&[i64]]) -> Vec<Vec<Rational>> {
        v.iter().map(|r| r.iter().map(|x| int(*x)).collect()).collect()
    }

    #[test]
    fn investment_candidates() {
        let p = investment(&[4, 5], &[2, 3], &[3, 2], 10).unwrap();
        let part = detect_sparsity(&p);
        let c = pot_soln(&part, &p).unwrap();
        let xs: Vec<Vec<Rational>> = c.iter().map(|e| e.x.clone()).collect();
        assert_eq!(xs, pts(&[&[3, 2], &[2, 2], &[3, 1]]));
        assert!(!c[0].feasible);
        assert_eq!(c[1].source, Some((2, 0)));
        let (costs, best) = pot_costs(&c, &p);
        assert_eq!(costs.iter().map(|e| e.cost).collect::<Vec<_>>(), vec![int(18), int(17)]);
        assert_eq!(best, Some(1));
        let out = solve_sparse(&p, &part, &SaConfig::default(), None).unwrap();
        assert_eq!(out.solution.objective, Some(int(18)));
        assert!(c.len() <= part.general.len() * p.n() + 1);
    }

    #[test]
    fn slack_budget_keeps_corner() {
        let p = investment(&[4, 5], &[2, 3], &[3, 2], 20).unwrap();
        let out = solve_sparse(&p, &detect_sparsity(&p), &SaConfig::default(), None).unwrap();
        assert_eq!(out.best, Some(0));
        assert_eq!(out.solution.x, vec![int(3), int(2)]);
    }

    #[test]
    fn no_feasible_candidate() {
        // x, y <= 5 with x + y >= 11: nothing fits
        use crate::problem::{Constraint, Sense};
        let cs = vec![
            Constraint::new(vec![1, 0], 5),
            Constraint::new(vec![0, 1], 5),
            Constraint::new(vec![-1, -1], -11),
        ];
        let p = IlpProblem::new(Sense::Max, vec![1, 1], cs, true).unwrap();
        let out = solve_sparse(&p, &detect_sparsity(&p), &SaConfig::default(), None).unwrap();
        assert_eq!(out.solution.status, Status::NoCandidate);
        assert!(out.costs.is_empty());
    }

    #[test]
    fn dense_partition_is_rejected() {
        use crate::problem::{Constraint, Sense};
        let p = IlpProblem::new(Sense::Max, vec![1, 1], vec![Constraint::new(vec![1, 1], 3)], true).unwrap();
        assert!(solve_sparse(&p, &detect_sparsity(&p), &SaConfig::default(), None).is_err());
    }
}
