//! Reader and writer for a small free-format MPS subset.
//!
//! Supported: `NAME`, `OBJSENSE` (`MAX`/`MIN`, default `MIN`), `ROWS` with
//! `N`/`L`/`G`/`E` rows, `COLUMNS` with `INTORG`/`INTEND` markers, `RHS`,
//! and `BOUNDS` of type `UP`, `LO`, `FX`, `BV` and `PL`. All numbers must be
//! integral. Any integer marker (or `BV` bound) makes the whole problem
//! integral.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::problem::{IlpProblem, RawProblem, RawRow, Relation, Sense, DEFAULT_COEFF_WIDTH};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn integer(line: usize, tok: &str) -> Result<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        Ok(_) => Err(err(line, format!("non-integral value `{tok}`"))),
        Err(_) => Err(err(line, format!("expected a number, found `{tok}`"))),
    }
}

pub fn parse_mps(text: &str) -> Result<IlpProblem> {
    let mut section = Section::None;
    let mut sense = Sense::Min;
    let mut objective_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(String, Relation)> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut columns: Vec<String> = Vec::new();
    // (row, col, value)
    let mut entries: Vec<(usize, usize, i64)> = Vec::new();
    let mut cost_entries: Vec<(usize, i64)> = Vec::new();
    let mut rhs: HashMap<usize, i64> = HashMap::new();
    let mut uppers: Vec<(usize, i64)> = Vec::new();
    let mut lowers: Vec<(usize, i64)> = Vec::new();
    let mut integral = false;
    let mut in_int_block = false;

    for (no, line) in text.lines().enumerate() {
        let no = no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let header = !line.starts_with(char::is_whitespace);
        if header {
            section = match toks[0] {
                "NAME" => Section::Name,
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        sense = parse_sense(no, s)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "RANGES" => return Err(err(no, "RANGES section is not supported")),
                other => return Err(err(no, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::None | Section::End => return Err(err(no, "data outside of a section")),
            Section::Name => {}
            Section::ObjSense => sense = parse_sense(no, toks[0])?,
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err(no, "ROWS entries are `<type> <name>`"));
                }
                let rel = match toks[0] {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    "E" => Relation::Eq,
                    t => return Err(err(no, format!("unknown row type `{t}`"))),
                };
                if row_index.insert(toks[1].to_string(), rows.len()).is_some() {
                    return Err(err(no, format!("duplicate row `{}`", toks[1])));
                }
                rows.push((toks[1].to_string(), rel));
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => {
                            in_int_block = true;
                            integral = true;
                        }
                        "'INTEND'" => in_int_block = false,
                        m => return Err(err(no, format!("unknown marker {m}"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(no, "COLUMNS entries are `<col> <row> <value> [<row> <value>]`"));
                }
                let col = *col_index.entry(toks[0].to_string()).or_insert_with(|| {
                    columns.push(toks[0].to_string());
                    columns.len() - 1
                });
                let _ = in_int_block;
                for pair in toks[1..].chunks(2) {
                    let value = integer(no, pair[1])?;
                    if objective_row.as_deref() == Some(pair[0]) {
                        cost_entries.push((col, value));
                    } else {
                        let row = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(no, format!("unknown row `{}`", pair[0])))?;
                        entries.push((row, col, value));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(no, "RHS entries are `<set> <row> <value> [<row> <value>]`"));
                }
                for pair in toks[1..].chunks(2) {
                    let value = integer(no, pair[1])?;
                    if objective_row.as_deref() == Some(pair[0]) {
                        continue;
                    }
                    let row = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(no, format!("unknown row `{}`", pair[0])))?;
                    rhs.insert(row, value);
                }
            }
            Section::Bounds => {
                let kind = toks[0];
                let col_name = toks.get(2).ok_or_else(|| err(no, "bound without column"))?;
                let col = *col_index
                    .get(*col_name)
                    .ok_or_else(|| err(no, format!("unknown column `{col_name}`")))?;
                let value = || -> Result<i64> {
                    integer(no, toks.get(3).ok_or_else(|| err(no, "bound without value"))?)
                };
                match kind {
                    "UP" => uppers.push((col, value()?)),
                    "LO" => lowers.push((col, value()?)),
                    "FX" => {
                        let v = value()?;
                        uppers.push((col, v));
                        lowers.push((col, v));
                    }
                    "BV" => {
                        uppers.push((col, 1));
                        integral = true;
                    }
                    "PL" => {}
                    k => return Err(err(no, format!("unsupported bound type `{k}`"))),
                }
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::Empty("constraints"));
    }
    if columns.is_empty() {
        return Err(Error::Empty("variables"));
    }
    let n = columns.len();
    let mut cost = vec![0i64; n];
    for (col, v) in cost_entries {
        cost[col] += v;
    }
    let mut raw_rows: Vec<RawRow> = rows
        .iter()
        .enumerate()
        .map(|(i, (_, rel))| RawRow {
            coeffs: vec![0; n],
            relation: *rel,
            rhs: rhs.get(&i).copied().unwrap_or(0),
        })
        .collect();
    for (row, col, v) in entries {
        raw_rows[row].coeffs[col] += v;
    }
    let unit = |col: usize| {
        let mut c = vec![0; n];
        c[col] = 1;
        c
    };
    for (col, v) in uppers {
        raw_rows.push(RawRow { coeffs: unit(col), relation: Relation::Le, rhs: v });
    }
    for (col, v) in lowers {
        if v != 0 {
            raw_rows.push(RawRow { coeffs: unit(col), relation: Relation::Ge, rhs: v });
        }
    }
    RawProblem {
        sense,
        cost,
        rows: raw_rows,
        integral,
        coeff_width: DEFAULT_COEFF_WIDTH,
    }
    .normalize()
}

fn parse_sense(line: usize, tok: &str) -> Result<Sense> {
    match tok {
        "MAX" | "MAXIMIZE" => Ok(Sense::Max),
        "MIN" | "MINIMIZE" => Ok(Sense::Min),
        t => Err(err(line, format!("unknown objective sense `{t}`"))),
    }
}

/// Write the canonical problem as MPS (all rows `L`).
pub fn to_mps(problem: &IlpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "NAME          PROBLEM");
    let _ = writeln!(s, "OBJSENSE");
    let _ = writeln!(s, "    {}", if problem.sense == Sense::Max { "MAX" } else { "MIN" });
    let _ = writeln!(s, "ROWS");
    let _ = writeln!(s, " N  COST");
    for i in 0..problem.m() {
        let _ = writeln!(s, " L  R{i}");
    }
    let _ = writeln!(s, "COLUMNS");
    if problem.integral {
        let _ = writeln!(s, "    M0        'MARKER'                 'INTORG'");
    }
    for j in 0..problem.n() {
        // Keep columns with no entries visible so the variable count survives.
        let _ = writeln!(s, "    X{j}  COST  {}", problem.cost[j]);
        for (i, c) in problem.constraints.iter().enumerate() {
            if c.coeffs[j] != 0 {
                let _ = writeln!(s, "    X{j}  R{i}  {}", c.coeffs[j]);
            }
        }
    }
    if problem.integral {
        let _ = writeln!(s, "    M1        'MARKER'                 'INTEND'");
    }
    let _ = writeln!(s, "RHS");
    for (i, c) in problem.constraints.iter().enumerate() {
        if c.rhs != 0 {
            let _ = writeln!(s, "    RHS  R{i}  {}", c.rhs);
        }
    }
    let _ = writeln!(s, "ENDATA");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Constraint;

    const SMALL: &str = "\
NAME          TINY
OBJSENSE
    MAX
ROWS
 N  COST
 G  LIM1
 E  MYEQN
COLUMNS
    MARKER                 'MARKER'                 'INTORG'
    X1        COST         1   LIM1         1
    X1        MYEQN        1
    X2        COST         2   LIM1        -2
    X2        MYEQN        1
    MARKER                 'MARKER'                 'INTEND'
RHS
    RHS       LIM1         5   MYEQN        3
BOUNDS
 UP BND       X1           4
ENDATA
";

    #[test]
    fn reads_subset() {
        let p = parse_mps(SMALL).unwrap();
        assert_eq!(p.sense, Sense::Max);
        assert!(p.integral);
        assert_eq!(p.cost, vec![1, 2]);
        // G row negated
        assert_eq!(p.constraints[0], Constraint::new(vec![-1, 2], -5));
        // E row split
        assert_eq!(p.constraints[1], Constraint::new(vec![1, 1], 3));
        assert_eq!(p.constraints[2], Constraint::new(vec![-1, -1], -3));
        // UP bound
        assert_eq!(p.constraints[3], Constraint::new(vec![1, 0], 4));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_mps("NAME X\nROWS\n N COST\nCOLUMNS\nENDATA\n").unwrap_err(), Error::Empty("constraints"));
        assert!(matches!(
            parse_mps("ROWS\n L R1\nCOLUMNS\n    X1 R1 1.5\nENDATA\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_mps("ROWS\n L R1\nCOLUMNS\n    X1 R9 1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_mps("ROWS\n L R1\nCOLUMNS\n    X1 R1 70000\n"),
            Err(Error::CoefficientOverflow { .. })
        ));
    }

    #[test]
    fn writer_round_trips() {
        let p = parse_mps(SMALL).unwrap();
        assert_eq!(parse_mps(&to_mps(&p)).unwrap(), p);
    }
}
