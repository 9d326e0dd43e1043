//! Problem representation shared by every engine.
//!
//! Constraints are always stored in the canonical `C_i · x <= D_i` form with
//! implicit `x >= 0`. Rows written with `>=` or `=` are rewritten when a
//! [`RawProblem`] is normalized.

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub const DEFAULT_COEFF_WIDTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Max,
    Min,
}

impl Sense {
    /// True when `a` is strictly better than `b` under this sense.
    pub fn better(self, a: &Rational, b: &Rational) -> bool {
        match self {
            Sense::Max => a > b,
            Sense::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub coeffs: Vec<i64>,
    pub rhs: i64,
}

impl Constraint {
    pub fn new(coeffs: Vec<i64>, rhs: i64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.coeffs
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, c)| *c != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IlpProblem {
    pub sense: Sense,
    pub cost: Vec<i64>,
    pub constraints: Vec<Constraint>,
    pub integral: bool,
    pub coeff_width: u32,
}

impl IlpProblem {
    pub fn new(
        sense: Sense,
        cost: Vec<i64>,
        constraints: Vec<Constraint>,
        integral: bool,
    ) -> Result<Self> {
        let p = Self {
            sense,
            cost,
            constraints,
            integral,
            coeff_width: DEFAULT_COEFF_WIDTH,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_width(mut self, coeff_width: u32) -> Result<Self> {
        self.coeff_width = coeff_width;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.cost.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.is_empty() {
            return Err(Error::Empty("variables"));
        }
        if self.constraints.is_empty() {
            return Err(Error::Empty("constraints"));
        }
        if !(2..=63).contains(&self.coeff_width) {
            return Err(Error::InvalidParams(format!(
                "coefficient width {} outside 2..=63",
                self.coeff_width
            )));
        }
        let n = self.n();
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.coeffs.len(),
                });
            }
        }
        let limit = 1i64 << (self.coeff_width - 1);
        let values = self
            .cost
            .iter()
            .chain(self.constraints.iter().flat_map(|c| c.coeffs.iter().chain([&c.rhs])));
        for &v in values {
            if v <= -limit || v >= limit {
                return Err(Error::CoefficientOverflow {
                    value: v,
                    width: self.coeff_width,
                });
            }
        }
        Ok(())
    }

    /// The relation-annotated form of this problem (every row `<=`).
    pub fn to_raw(&self) -> RawProblem {
        RawProblem {
            sense: self.sense,
            cost: self.cost.clone(),
            rows: self
                .constraints
                .iter()
                .map(|c| RawRow {
                    coeffs: c.coeffs.clone(),
                    relation: Relation::Le,
                    rhs: c.rhs,
                })
                .collect(),
            integral: self.integral,
            coeff_width: self.coeff_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub coeffs: Vec<i64>,
    pub relation: Relation,
    pub rhs: i64,
}

/// A problem as written in a document, before canonicalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawProblem {
    pub sense: Sense,
    pub cost: Vec<i64>,
    pub rows: Vec<RawRow>,
    pub integral: bool,
    pub coeff_width: u32,
}

impl RawProblem {
    /// Rewrite every row into `<=` form: `>=` rows are negated and `=` rows
    /// become a `<=` pair.
    pub fn normalize(&self) -> Result<IlpProblem> {
        let mut constraints = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let neg = || Constraint::new(row.coeffs.iter().map(|c| -c).collect(), -row.rhs);
            match row.relation {
                Relation::Le => constraints.push(Constraint::new(row.coeffs.clone(), row.rhs)),
                Relation::Ge => constraints.push(neg()),
                Relation::Eq => {
                    constraints.push(Constraint::new(row.coeffs.clone(), row.rhs));
                    constraints.push(neg());
                }
            }
        }
        let p = IlpProblem {
            sense: self.sense,
            cost: self.cost.clone(),
            constraints,
            integral: self.integral,
            coeff_width: self.coeff_width,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn normalize(p: &IlpProblem) -> Result<IlpProblem> {
    p.to_raw().normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    NotConverged,
    Unbounded,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    #[serde(with = "crate::rational::serde_rational_vec")]
    pub x: Vec<Rational>,
    #[serde(with = "crate::rational::serde_rational_opt")]
    pub objective: Option<Rational>,
}

impl Solution {
    pub fn with_point(status: Status, problem: &IlpProblem, x: Vec<Rational>) -> Self {
        let objective = Some(rational::dot(&problem.cost, &x));
        Self {
            status,
            x,
            objective,
        }
    }

    pub fn empty(status: Status) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: None,
        }
    }
}

pub fn evaluate_objective(problem: &IlpProblem, x: &[Rational]) -> Result<Rational> {
    check_dim(problem, x)?;
    Ok(rational::dot(&problem.cost, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    /// `C_i · x > D_i`
    Constraint(usize),
    /// `x_j < 0`
    Negative(usize),
    /// `x_j` fractional in an integral problem
    Fractional(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    pub violated: Vec<Violation>,
}

pub fn check_feasibility(problem: &IlpProblem, x: &[Rational]) -> Result<Feasibility> {
    check_dim(problem, x)?;
    let mut violated = Vec::new();
    for (i, c) in problem.constraints.iter().enumerate() {
        if rational::dot(&c.coeffs, x) > rational::int(c.rhs) {
            violated.push(Violation::Constraint(i));
        }
    }
    for (j, v) in x.iter().enumerate() {
        if v.is_negative() {
            violated.push(Violation::Negative(j));
        }
        if problem.integral && !v.is_integer() {
            violated.push(Violation::Fractional(j));
        }
    }
    Ok(Feasibility {
        feasible: violated.is_empty(),
        violated,
    })
}

pub fn is_feasible(problem: &IlpProblem, x: &[Rational]) -> bool {
    check_feasibility(problem, x).map(|f| f.feasible).unwrap_or(false)
}

fn check_dim(problem: &IlpProblem, x: &[Rational]) -> Result<()> {
    if x.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected: problem.n(),
            got: x.len(),
        });
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    fn two_var() -> IlpProblem {
        IlpProblem::new(
            Sense::Max,
            vec![3, 2],
            vec![Constraint::new(vec![1, 1], 4)],
            true,
        )
        .unwrap()
    }

    #[test]
    fn objective_values() {
        let p = two_var();
        assert_eq!(evaluate_objective(&p, &[int(0), int(0)]).unwrap(), int(0));
        assert_eq!(evaluate_objective(&p, &[int(1), int(1)]).unwrap(), int(5));
        let p3 = IlpProblem::new(
            Sense::Max,
            vec![5, 4, 3],
            vec![Constraint::new(vec![1, 1, 1], 9)],
            true,
        )
        .unwrap();
        assert_eq!(
            evaluate_objective(&p3, &[int(2), int(0), int(1)]).unwrap(),
            int(13)
        );
        assert!(matches!(
            evaluate_objective(&p, &[int(1)]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn feasibility_markers() {
        let p = two_var();
        assert!(check_feasibility(&p, &[int(0), int(0)]).unwrap().feasible);
        let f = check_feasibility(&p, &[int(3), int(2)]).unwrap();
        assert_eq!(f.violated, vec![Violation::Constraint(0)]);
        let f = check_feasibility(&p, &[Rational::new(3, 2), int(0)]).unwrap();
        assert!(!f.feasible);
        assert_eq!(f.violated, vec![Violation::Fractional(0)]);
        let f = check_feasibility(&p, &[int(-1), int(0)]).unwrap();
        assert_eq!(f.violated, vec![Violation::Negative(0)]);
    }

    #[test]
    fn ge_and_eq_rows_are_rewritten() {
        let raw = RawProblem {
            sense: Sense::Min,
            cost: vec![1, 1],
            rows: vec![
                RawRow { coeffs: vec![1, -2], relation: Relation::Ge, rhs: 5 },
                RawRow { coeffs: vec![1, 1], relation: Relation::Eq, rhs: 3 },
            ],
            integral: false,
            coeff_width: 16,
        };
        let p = raw.normalize().unwrap();
        assert_eq!(p.constraints[0], Constraint::new(vec![-1, 2], -5));
        assert_eq!(p.constraints[1], Constraint::new(vec![1, 1], 3));
        assert_eq!(p.constraints[2], Constraint::new(vec![-1, -1], -3));
        assert_eq!(normalize(&p).unwrap(), p);
    }

    #[test]
    fn width_is_enforced() {
        let err = IlpProblem::new(
            Sense::Max,
            vec![1],
            vec![Constraint::new(vec![1], 40_000)],
            true,
        )
        .unwrap_err();
        assert_eq!(err, Error::CoefficientOverflow { value: 40_000, width: 16 });
        assert!(IlpProblem::new(Sense::Max, vec![1], vec![Constraint::new(vec![1], 32_767)], true).is_ok());
        assert!(IlpProblem::new(Sense::Max, vec![1], vec![Constraint::new(vec![-32_768], 0)], true).is_err());
    }

    #[test]
    fn empty_problems_rejected() {
        assert_eq!(
            IlpProblem::new(Sense::Max, vec![], vec![], true).unwrap_err(),
            Error::Empty("variables")
        );
        assert_eq!(
            IlpProblem::new(Sense::Max, vec![1], vec![], true).unwrap_err(),
            Error::Empty("constraints")
        );
    }
}
