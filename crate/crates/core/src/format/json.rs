//! Native JSON problem schema.
//!
//! ```json
//! {"sense": "max", "cost": [3, 2],
//!  "constraints": [{"coeffs": [1, 1], "rhs": 4}],
//!  "integral": true}
//! ```
//!
//! Each constraint may carry `"relation": "<=" | ">=" | "="` (default `<=`).
//! `coeff_width` is optional and defaults to 16.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{IlpProblem, RawProblem, RawRow, Relation, Sense, DEFAULT_COEFF_WIDTH};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    coeffs: Vec<i64>,
    rhs: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation: Option<Relation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonProblem {
    sense: Sense,
    cost: Vec<i64>,
    constraints: Vec<JsonRow>,
    #[serde(default = "default_integral")]
    integral: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeff_width: Option<u32>,
}

fn default_integral() -> bool {
    true
}

pub fn parse_json(text: &str) -> Result<IlpProblem> {
    let doc: JsonProblem = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let raw = RawProblem {
        sense: doc.sense,
        cost: doc.cost,
        rows: doc
            .constraints
            .into_iter()
            .map(|r| RawRow {
                coeffs: r.coeffs,
                relation: r.relation.unwrap_or(Relation::Le),
                rhs: r.rhs,
            })
            .collect(),
        integral: doc.integral,
        coeff_width: doc.coeff_width.unwrap_or(DEFAULT_COEFF_WIDTH),
    };
    raw.normalize()
}

/// Canonical JSON: every row is written in `<=` form.
pub fn to_json(problem: &IlpProblem) -> String {
    let doc = JsonProblem {
        sense: problem.sense,
        cost: problem.cost.clone(),
        constraints: problem
            .constraints
            .iter()
            .map(|c| JsonRow {
                coeffs: c.coeffs.clone(),
                rhs: c.rhs,
                relation: None,
            })
            .collect(),
        integral: problem.integral,
        coeff_width: (problem.coeff_width != DEFAULT_COEFF_WIDTH).then_some(problem.coeff_width),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("problem serializes");
    s.push('\n');
    s
}
