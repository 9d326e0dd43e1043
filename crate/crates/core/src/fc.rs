//! Fetch/control engine: non-zero counting and the CC / general split.

use serde::{Deserialize, Serialize};

use crate::problem::IlpProblem;
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowClass {
    /// Single positive coefficient: an upper bound on one variable.
    Cc {
        var: usize,
        #[serde(with = "crate::rational::serde_rational")]
        bound: Rational,
    },
    General,
    /// All-zero row with a non-negative right-hand side.
    Vacuous,
    /// All-zero row with a negative right-hand side.
    InfeasibleRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcEntry {
    pub var: usize,
    #[serde(with = "crate::rational::serde_rational")]
    pub bound: Rational,
    /// Constraint that supplied the (tightest) bound.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPartition {
    /// Tightest bound per covered variable, ordered by variable.
    pub cc: Vec<CcEntry>,
    /// Every constraint classified CC, in storage order.
    pub cc_rows: Vec<usize>,
    pub general: Vec<usize>,
    pub vacuous: Vec<usize>,
    pub nnz: Vec<u32>,
    pub is_sparse: bool,
    pub infeasible_row: Option<usize>,
}

impl SparsityPartition {
    /// Per-variable CC bound, `None` where the variable is uncovered.
    pub fn bounds(&self, n: usize) -> Vec<Option<Rational>> {
        let mut out = vec![None; n];
        for e in &self.cc {
            out[e.var] = Some(e.bound);
        }
        out
    }

    /// Storage order used by the PIM array: CC rows first, then general rows.
    pub fn storage_order(&self) -> Vec<usize> {
        self.cc_rows.iter().chain(&self.general).copied().collect()
    }
}

pub fn count_nonzeros(row: &[i64]) -> u32 {
    row.iter().filter(|c| **c != 0).count() as u32
}

pub fn classify_constraint(row: &[i64], rhs: i64, integral: bool) -> RowClass {
    let mut it = row.iter().enumerate().filter(|(_, c)| **c != 0);
    match (it.next(), it.next()) {
        (None, _) if rhs >= 0 => RowClass::Vacuous,
        (None, _) => RowClass::InfeasibleRow,
        (Some((var, &c)), None) if c > 0 => {
            let q = Rational::new(rhs as i128, c as i128);
            let bound = if integral {
                Rational::from_integer(rational::floor(&q))
            } else {
                q
            };
            RowClass::Cc { var, bound }
        }
        _ => RowClass::General,
    }
}

pub fn detect_sparsity(problem: &IlpProblem) -> SparsityPartition {
    let n = problem.n();
    let mut tightest: Vec<Option<CcEntry>> = vec![None; n];
    let mut part = SparsityPartition {
        cc: Vec::new(),
        cc_rows: Vec::new(),
        general: Vec::new(),
        vacuous: Vec::new(),
        nnz: Vec::with_capacity(problem.m()),
        is_sparse: false,
        infeasible_row: None,
    };
    for (i, c) in problem.constraints.iter().enumerate() {
        part.nnz.push(count_nonzeros(&c.coeffs));
        match classify_constraint(&c.coeffs, c.rhs, problem.integral) {
            RowClass::Cc { var, bound } => {
                part.cc_rows.push(i);
                let slot = &mut tightest[var];
                if slot.as_ref().map_or(true, |e| bound < e.bound) {
                    *slot = Some(CcEntry { var, bound, row: i });
                }
            }
            RowClass::General => part.general.push(i),
            RowClass::Vacuous => part.vacuous.push(i),
            RowClass::InfeasibleRow => {
                part.infeasible_row.get_or_insert(i);
            }
        }
    }
    part.cc = tightest.into_iter().flatten().collect();
    part.is_sparse = part.infeasible_row.is_none() && part.cc.len() == n;
    part
}
