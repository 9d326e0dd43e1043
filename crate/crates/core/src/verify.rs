//! Engine-versus-oracle comparison behind the `verify` command.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::generate::dense_family;
use crate::oracle;
use crate::problem::{IlpProblem, Status};
use crate::rational::{self, Rational};
use crate::sim::{self, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The engine hit a cap or failed to converge; reported, not judged.
    NotConverged,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub name: String,
    pub verdict: Verdict,
    pub engine_status: Option<Status>,
    #[serde(with = "crate::rational::serde_rational_opt")]
    pub engine_objective: Option<Rational>,
    pub oracle_status: Option<Status>,
    #[serde(with = "crate::rational::serde_rational_opt")]
    pub oracle_objective: Option<Rational>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub not_converged: usize,
    pub skipped: usize,
}

/// Solve `problem` with the simulator and with the oracle. `corrupt`
/// shifts the engine objective by one, a fixture for the failure path.
pub fn verify_instance(name: &str, problem: &IlpProblem, cfg: &SimConfig, corrupt: bool, box_cap: u128) -> VerifyRow {
    let mut row = VerifyRow {
        name: name.to_string(),
        verdict: Verdict::Skipped,
        engine_status: None,
        engine_objective: None,
        oracle_status: None,
        oracle_objective: None,
        note: String::new(),
    };
    if !problem.integral {
        row.note = "continuous problem".into();
        return row;
    }
    let truth = match oracle::derive_box(problem).and_then(|bx| oracle::brute_force_capped(problem, &bx, box_cap)) {
        Ok(t) => t,
        Err(e @ (Error::UnboundedBox { .. } | Error::BoxTooLarge { .. })) => {
            row.note = e.to_string();
            return row;
        }
        Err(e) => {
            row.verdict = Verdict::Fail;
            row.note = format!("oracle: {e}");
            return row;
        }
    };
    row.oracle_status = Some(truth.status);
    row.oracle_objective = truth.objective;
    let report = match sim::run(problem, cfg) {
        Ok(r) => r,
        Err(e @ Error::CapExceeded(_)) => {
            row.verdict = Verdict::NotConverged;
            row.note = e.to_string();
            return row;
        }
        Err(e) => {
            row.verdict = Verdict::Fail;
            row.note = format!("engine: {e}");
            return row;
        }
    };
    let mut objective = report.solution.objective;
    if corrupt {
        objective = Some(objective.unwrap_or_default() + Rational::from_integer(1));
    }
    row.engine_status = Some(report.solution.status);
    row.engine_objective = objective;
    row.verdict = match report.solution.status {
        Status::NotConverged => Verdict::NotConverged,
        s if s == truth.status && objective == truth.objective => Verdict::Pass,
        _ => {
            row.note = format!("engine {} vs oracle {}", show(&objective), show(&truth.objective));
            Verdict::Fail
        }
    };
    row
}

fn show(v: &Option<Rational>) -> String {
    v.as_ref().map_or_else(|| "-".into(), rational::format)
}

/// The bundled dense family, seeds `0..count`. Some members are sparse;
/// their SA answers are cross-checked by the dense engines, since SA only
/// sees vertices next to the bound corner.
pub fn verify_suite(count: u64, cfg: &SimConfig, corrupt: bool, box_cap: u128) -> Vec<VerifyRow> {
    let cfg = &SimConfig { verify_sa: true, ..cfg.clone() };
    (0..count)
        .into_par_iter()
        .map(|s| verify_instance(&format!("dense-{s}"), &dense_family(s), cfg, corrupt, box_cap))
        .collect()
}

pub fn tally(rows: &[VerifyRow]) -> Tally {
    let mut t = Tally::default();
    for r in rows {
        match r.verdict {
            Verdict::Pass => t.pass += 1,
            Verdict::Fail => t.fail += 1,
            Verdict::NotConverged => t.not_converged += 1,
            Verdict::Skipped => t.skipped += 1,
        }
    }
    t
}

pub fn format_table(rows: &[VerifyRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:<13} {:>10} {:>10}  note", "instance", "verdict", "engine", "oracle");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:<13} {:>10} {:>10}  {}",
            r.name,
            format!("{:?}", r.verdict).to_lowercase(),
            show(&r.engine_objective),
            show(&r.oracle_objective),
            r.note
        );
    }
    let t = tally(rows);
    let _ = writeln!(
        s,
        "pass {}  fail {}  not_converged {}  skipped {}",
        t.pass, t.fail, t.not_converged, t.skipped
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Constraint, Sense};

    #[test]
    fn corrupted_objective_fails() {
        let p = dense_family(3);
        let ok = verify_instance("a", &p, &SimConfig::default(), false, oracle::BOX_CAP);
        assert_eq!(ok.verdict, Verdict::Pass);
        let bad = verify_instance("a", &p, &SimConfig::default(), true, oracle::BOX_CAP);
        assert_eq!(bad.verdict, Verdict::Fail);
        assert!(bad.note.contains("vs oracle"));
    }

    #[test]
    fn bundled_suite_passes() {
        let rows = verify_suite(200, &SimConfig::default(), false, oracle::BOX_CAP);
        let t = tally(&rows);
        assert_eq!((t.pass, t.fail), (200, 0), "{}", format_table(&rows));
    }

    #[test]
    fn unbounded_box_is_skipped() {
        let p = IlpProblem::new(Sense::Min, vec![1, 1], vec![Constraint::new(vec![1, -1], 3)], true).unwrap();
        let r = verify_instance("u", &p, &SimConfig::default(), false, oracle::BOX_CAP);
        assert_eq!(r.verdict, Verdict::Skipped);
        assert!(format_table(&[r]).contains("skipped 1"));
    }
}
