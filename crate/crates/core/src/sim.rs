//! Run orchestration: fetch/control, then the sparse or dense solve, then
//! the fill model, with every event charged to one ledger.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{self, BnbConfig, BnbStats, BranchRule};
use crate::cost::{
    self, Access, Component, CostConfig, EventKind, FillOutcome, FillParams, Ledger, Meter, Phase, RunFigures,
};
use crate::divider::DivConfig;
use crate::error::{Error, Result};
use crate::fc::{self, SparsityPartition};
use crate::format::to_json;
use crate::oracle;
use crate::pim::{self, CacheGeometry};
use crate::problem::{IlpProblem, Solution, Status};
use crate::rational;
use crate::relax::{self, RelaxConfig, RelaxStats, VarBounds};
use crate::sa::{self, SaConfig, SaOutcome};
use crate::sle::PimSolveConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: CacheGeometry,
    pub cost: CostConfig,
    pub epsilon: f64,
    pub max_iters: u64,
    pub depth_cap: usize,
    pub node_cap: u64,
    /// Fractional bits of the fixed-point Jacobi iterate.
    pub frac_bits: u32,
    /// Width of the X operand driven onto the word lines.
    pub x_width: u32,
    pub m_bits: u32,
    pub branch_rule: BranchRule,
    pub sa_enabled: bool,
    pub prefetch_enabled: bool,
    pub serial_pim: bool,
    pub approx_div_enabled: bool,
    pub verify_with_oracle: bool,
    /// Also solve sparse instances densely and keep the better answer.
    pub verify_sa: bool,
    /// Walk the stored bit cells instead of the popcount shortcut.
    pub bit_accurate: bool,
    pub direct_fallback: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geometry: CacheGeometry::default(),
            cost: CostConfig::default(),
            epsilon: 1e-6,
            max_iters: 100_000,
            depth_cap: 64,
            node_cap: 1_000_000,
            frac_bits: 8,
            x_width: 32,
            m_bits: 8,
            branch_rule: BranchRule::HighestFractional,
            sa_enabled: true,
            prefetch_enabled: true,
            serial_pim: false,
            approx_div_enabled: true,
            verify_with_oracle: false,
            verify_sa: false,
            bit_accurate: false,
            direct_fallback: true,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParams(format!("bad value `{value}` for {key}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParams(format!("bad value `{value}` for {key}"))),
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.cost.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be positive".into()));
        }
        if self.max_iters == 0 || self.node_cap == 0 {
            return Err(Error::InvalidParams("iteration and node caps must be positive".into()));
        }
        if self.frac_bits >= self.x_width || self.x_width > 62 {
            return Err(Error::InvalidParams("need frac_bits < x_width <= 62".into()));
        }
        DivConfig::new(self.m_bits)?;
        Ok(())
    }

    /// Set one `section.key` entry of the plain-text config format.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.geometry;
        let c = &mut self.cost;
        match key {
            "geometry.banks" => g.banks = parse_value(key, value)?,
            "geometry.rows" => g.rows = parse_value(key, value)?,
            "geometry.cols" => g.cols = parse_value(key, value)?,
            "geometry.word_bits" => g.word_bits = parse_value(key, value)?,
            "geometry.line_bytes" => g.line_bytes = parse_value(key, value)?,
            "geometry.x_bits" => g.x_bits = parse_value(key, value)?,
            "cost.clock_ns" => c.clock_ns = parse_value(key, value)?,
            "cost.sram_latency_ns" => c.sram_latency_ns = parse_value(key, value)?,
            "cost.move_pj_per_bit" => c.move_pj_per_bit = parse_value(key, value)?,
            "cost.rbl_cap_f" => c.rbl_cap_f = parse_value(key, value)?,
            "cost.read_cap_f" => c.read_cap_f = parse_value(key, value)?,
            "cost.vdd" => c.vdd = parse_value(key, value)?,
            "cost.swing" => c.swing = parse_value(key, value)?,
            "cost.div_pj" => c.div_pj = parse_value(key, value)?,
            "cost.div_ns" => c.div_ns = parse_value(key, value)?,
            "cost.exact_div_pj" => c.exact_div_pj = parse_value(key, value)?,
            "cost.exact_div_ns" => c.exact_div_ns = parse_value(key, value)?,
            "cost.sa_pj" => c.sa_pj = parse_value(key, value)?,
            "cost.ar_pj" => c.ar_pj = parse_value(key, value)?,
            "cost.sub_pj" => c.sub_pj = parse_value(key, value)?,
            "cost.queue_pj" => c.queue_pj = parse_value(key, value)?,
            "cost.l2_bytes" => c.l2_bytes = parse_value(key, value)?,
            "cost.dram_bytes" => c.dram_bytes = parse_value(key, value)?,
            "cost.line_bytes" => c.line_bytes = parse_value(key, value)?,
            "cost.prefetch_stride_lines" => c.prefetch_stride_lines = parse_value(key, value)?,
            "cost.l2_latency_ns" => c.l2_latency_ns = parse_value(key, value)?,
            "cost.dram_latency_ns" => c.dram_latency_ns = parse_value(key, value)?,
            "cost.macs_per_cycle" => c.macs_per_cycle = parse_value(key, value)?,
            "cost.queue_lanes" => c.queue_lanes = parse_value(key, value)?,
            "solver.epsilon" => self.epsilon = parse_value(key, value)?,
            "solver.max_iters" => self.max_iters = parse_value(key, value)?,
            "solver.depth_cap" => self.depth_cap = parse_value(key, value)?,
            "solver.node_cap" => self.node_cap = parse_value(key, value)?,
            "solver.frac_bits" => self.frac_bits = parse_value(key, value)?,
            "solver.x_width" => self.x_width = parse_value(key, value)?,
            "solver.m_bits" => self.m_bits = parse_value(key, value)?,
            "solver.branch_rule" => {
                self.branch_rule = match value {
                    "highest" => BranchRule::HighestFractional,
                    "lowest" => BranchRule::LowestFractional,
                    _ => return Err(Error::InvalidParams(format!("bad value `{value}` for {key}"))),
                }
            }
            "flags.sa" => self.sa_enabled = parse_flag(key, value)?,
            "flags.prefetch" => self.prefetch_enabled = parse_flag(key, value)?,
            "flags.serial_pim" => self.serial_pim = parse_flag(key, value)?,
            "flags.approx_div" => self.approx_div_enabled = parse_flag(key, value)?,
            "flags.verify_oracle" => self.verify_with_oracle = parse_flag(key, value)?,
            "flags.verify_sa" => self.verify_sa = parse_flag(key, value)?,
            "flags.bit_accurate" => self.bit_accurate = parse_flag(key, value)?,
            "flags.direct_fallback" => self.direct_fallback = parse_flag(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a config file: `key = value` lines, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: no + 1,
                msg: "expected `key = value`".into(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::UnknownKey(_) => e,
                other => Error::Parse { line: no + 1, msg: other.to_string() },
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn divider(&self) -> Option<DivConfig> {
        self.approx_div_enabled
            .then(|| DivConfig::new(self.m_bits).expect("validated mantissa width"))
    }

    pub fn relax_config(&self) -> RelaxConfig {
        RelaxConfig {
            pim: PimSolveConfig {
                frac_bits: self.frac_bits,
                x_width: self.x_width,
                max_iters: self.max_iters,
                divider: self.divider(),
                bit_accurate: self.bit_accurate,
                geometry: self.geometry,
                ..PimSolveConfig::default()
            },
            use_pim: true,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            direct_fallback: self.direct_fallback,
        }
    }

    pub fn bnb_config(&self) -> BnbConfig {
        BnbConfig {
            relax: self.relax_config(),
            depth_cap: self.depth_cap,
            node_cap: self.node_cap,
            branch_rule: self.branch_rule,
        }
    }

    pub fn sa_config(&self) -> SaConfig {
        SaConfig { geometry: self.geometry, frac_bits: self.frac_bits, x_width: self.x_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    /// Stopped after fetch/control (an all-zero infeasible row).
    FcOnly,
    Sa,
    /// SA found nothing feasible and the dense engines took over.
    SaFallback,
    /// SA answered and a dense solve checked it.
    SaVerified,
    Dense,
}

impl SolvePath {
    pub fn name(self) -> &'static str {
        match self {
            SolvePath::FcOnly => "fc",
            SolvePath::Sa => "sa",
            SolvePath::SaFallback => "sa+dense",
            SolvePath::SaVerified => "sa+verify",
            SolvePath::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Fc,
    Sa,
    Sle,
    Bnb,
    Fill,
}

/// Cycle range `[start, end)` during which an engine was active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub engine: Engine,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum OracleCheck {
    Match,
    Mismatch {
        #[serde(with = "crate::rational::serde_rational_opt")]
        oracle_objective: Option<crate::Rational>,
        oracle_status: Status,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub iterations: u64,
    pub root: Option<RelaxStats>,
    pub bnb: Option<BnbStats>,
    pub sa: Option<SaOutcome>,
    /// The dense check found a strictly better answer than SA.
    pub sa_superseded: bool,
    pub total_lines: usize,
    pub capacity_lines: usize,
    pub overflow: bool,
    pub line_accesses: u64,
    pub schedule_truncated: bool,
    pub fill: Option<FillOutcome>,
    pub oracle: Option<OracleCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// FNV-1a digest of the instance's JSON form.
    pub instance: String,
    pub verdict: Verdict,
    pub path: SolvePath,
    pub solution: Solution,
    pub ledger: Ledger,
    pub trace: Vec<Span>,
    pub partition: SparsityPartition,
    pub stats: RunStats,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn figures(&self, l2_cycles: u64) -> RunFigures {
        RunFigures {
            instance: self.instance.clone(),
            cycles_total: self.ledger.total_cycles,
            line_accesses: self.stats.line_accesses,
            fill_stall_cycles: self.ledger.cycles_in(Phase::FillStall),
            l2_cycles,
        }
    }

    pub fn objective_text(&self) -> String {
        self.solution.objective.as_ref().map(rational::format).unwrap_or_default()
    }
}

pub fn digest(problem: &IlpProblem) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in to_json(problem).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

struct Tracer {
    spans: Vec<Span>,
}

impl Tracer {
    fn span(&mut self, engine: Engine, start: u64, end: u64) {
        if end > start {
            self.spans.push(Span { engine, start, end });
        }
    }
}

/// Stores every constraint (CC rows, general rows, then the cost row) and
/// charges the fetch into L1 plus the non-zero count.
fn fetch_control(problem: &IlpProblem, part: &SparsityPartition, cfg: &SimConfig, meter: &mut Meter) -> Result<pim::Mapping> {
    let mut order = part.storage_order();
    order.extend(&part.vacuous);
    if let Some(i) = part.infeasible_row {
        order.push(i);
    }
    let mut rows: Vec<Vec<i64>> = order
        .iter()
        .map(|&i| {
            let c = &problem.constraints[i];
            c.coeffs.iter().copied().chain([c.rhs]).collect()
        })
        .collect();
    rows.push(problem.cost.iter().copied().chain([0]).collect());
    let (mapping, _) = pim::store_coefficients(&rows, &cfg.geometry)?;
    let mut row_lines = vec![(0, 0); problem.m()];
    for (slot, &i) in order.iter().enumerate() {
        let p = mapping.placements[slot];
        row_lines[i] = (p.first_line, p.lines);
    }
    meter.set_row_lines(row_lines);
    let resident = mapping.total_lines.min(cfg.geometry.capacity_lines()) as u64;
    meter.set_phase(Phase::Fc);
    meter.record_fill_burst(EventKind::LineFillDram, mapping.total_lines as u64);
    meter.record_fill_burst(EventKind::LineFillL2, resident);
    meter.record_parallel(EventKind::RowActivate, resident, cfg.geometry.groups() as u64);
    let words: u64 = rows.iter().map(|r| r.len() as u64).sum();
    meter.record_parallel(EventKind::ArOp, words, cfg.geometry.banks as u64);
    for i in 0..problem.m() {
        meter.touch(i);
    }
    Ok(mapping)
}

struct Dense {
    solution: Solution,
    root: RelaxStats,
    bnb: Option<BnbStats>,
    iterations: u64,
}

fn solve_dense(problem: &IlpProblem, cfg: &SimConfig, meter: &mut Meter, tr: &mut Tracer) -> Result<Dense> {
    let t0 = meter.total_cycles();
    let sle0 = meter.ledger().cycles_in(Phase::Sle);
    let bnb0 = meter.ledger().cycles_in(Phase::Bnb);
    let out = if problem.integral {
        let o = bnb::solve_ilp(problem, &cfg.bnb_config(), Some(meter))?;
        Dense { iterations: o.stats.iterations, solution: o.solution, root: o.root, bnb: Some(o.stats) }
    } else {
        meter.set_phase(Phase::Sle);
        let root = match VarBounds::from_problem(problem) {
            Some(b) => relax::solve_relaxation(problem, &b, &cfg.relax_config(), Some(meter))?,
            None => relax::RelaxOutcome {
                status: Status::Infeasible,
                x: Vec::new(),
                objective: None,
                stats: RelaxStats {
                    vertices: 0,
                    system_size: 0,
                    iterations: 0,
                    method: relax::SolveMethod::None,
                    stalled: false,
                },
            },
        };
        Dense {
            iterations: root.stats.iterations,
            solution: Solution { status: root.status, x: root.x, objective: root.objective },
            root: root.stats,
            bnb: None,
        }
    };
    let d_sle = meter.ledger().cycles_in(Phase::Sle) - sle0;
    let d_bnb = meter.ledger().cycles_in(Phase::Bnb) - bnb0;
    tr.span(Engine::Sle, t0, t0 + d_sle);
    tr.span(Engine::Bnb, t0 + d_sle, t0 + d_sle + d_bnb);
    Ok(out)
}

/// Simulate one instance end to end.
pub fn run(problem: &IlpProblem, cfg: &SimConfig) -> Result<SimReport> {
    problem.validate()?;
    cfg.validate()?;
    let mut meter = Meter::new(cfg.cost.clone(), cfg.geometry.cols, cfg.serial_pim);
    let mut tr = Tracer { spans: Vec::new() };
    let part = fc::detect_sparsity(problem);
    let mapping = fetch_control(problem, &part, cfg, &mut meter)?;
    tr.span(Engine::Fc, 0, meter.total_cycles());
    let verdict = if part.is_sparse { Verdict::Sparse } else { Verdict::Dense };
    let mut stats = RunStats {
        iterations: 0,
        root: None,
        bnb: None,
        sa: None,
        sa_superseded: false,
        total_lines: mapping.total_lines,
        capacity_lines: cfg.geometry.capacity_lines(),
        overflow: mapping.overflow,
        line_accesses: 0,
        schedule_truncated: false,
        fill: None,
        oracle: None,
    };
    let (path, solution) = if part.infeasible_row.is_some() {
        (SolvePath::FcOnly, Solution::empty(Status::Infeasible))
    } else if part.is_sparse && cfg.sa_enabled {
        meter.set_phase(Phase::Sa);
        let t0 = meter.total_cycles();
        let out = sa::solve_sparse(problem, &part, &cfg.sa_config(), Some(&mut meter))?;
        tr.span(Engine::Sa, t0, meter.total_cycles());
        let sa_sol = out.solution.clone();
        stats.sa = Some(out);
        if sa_sol.status == Status::NoCandidate || cfg.verify_sa {
            let d = solve_dense(problem, cfg, &mut meter, &mut tr)?;
            stats.iterations = d.iterations;
            stats.root = Some(d.root);
            stats.bnb = d.bnb;
            if sa_sol.status == Status::NoCandidate {
                (SolvePath::SaFallback, d.solution)
            } else {
                let better = d.solution.status == Status::Optimal
                    && match (&d.solution.objective, &sa_sol.objective) {
                        (Some(a), Some(b)) => problem.sense.better(a, b),
                        _ => false,
                    };
                stats.sa_superseded = better;
                (SolvePath::SaVerified, if better { d.solution } else { sa_sol })
            }
        } else {
            (SolvePath::Sa, sa_sol)
        }
    } else {
        let d = solve_dense(problem, cfg, &mut meter, &mut tr)?;
        stats.iterations = d.iterations;
        stats.root = Some(d.root);
        stats.bnb = d.bnb;
        (SolvePath::Dense, d.solution)
    };
    stats.line_accesses = meter.schedule().len() as u64;
    stats.schedule_truncated = meter.schedule_truncated();
    if mapping.overflow {
        let t0 = meter.total_cycles();
        let params = FillParams {
            capacity_lines: cfg.geometry.capacity_lines(),
            latency: cfg.cost.l2_cycles(),
            prefetch_degree: if cfg.prefetch_enabled { cfg.cost.prefetch_stride_lines } else { 0 },
        };
        let fill = cost::simulate_fill(meter.schedule(), mapping.total_lines, params);
        meter.add_cycles(Phase::FillStall, fill.stall_cycles);
        meter.record_energy_only(EventKind::LineFillL2, fill.demand_fills + fill.prefetch_fills);
        tr.span(Engine::Fill, t0, meter.total_cycles());
        stats.fill = Some(fill);
    }
    if cfg.verify_with_oracle {
        stats.oracle = Some(oracle_check(problem, &solution));
    }
    Ok(SimReport {
        instance: digest(problem),
        verdict,
        path,
        solution,
        ledger: meter.into_ledger(),
        trace: tr.spans,
        partition: part,
        stats,
    })
}

/// Compare an engine answer with the exhaustive oracle.
pub fn oracle_check(problem: &IlpProblem, solution: &Solution) -> OracleCheck {
    if !problem.integral {
        return OracleCheck::Skipped { reason: "continuous problem".into() };
    }
    match oracle::brute_force(problem) {
        Ok(o) if o.status == solution.status && o.objective == solution.objective => OracleCheck::Match,
        Ok(o) => OracleCheck::Mismatch { oracle_objective: o.objective, oracle_status: o.status },
        Err(e) => OracleCheck::Skipped { reason: e.to_string() },
    }
}

/// Trace of accesses replayed by the fill model, for inspection.
pub fn schedule_of(problem: &IlpProblem, cfg: &SimConfig) -> Result<Vec<Access>> {
    let part = fc::detect_sparsity(problem);
    let mut meter = Meter::new(cfg.cost.clone(), cfg.geometry.cols, cfg.serial_pim);
    fetch_control(problem, &part, cfg, &mut meter)?;
    Ok(meter.schedule().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub instance: String,
    pub config: String,
    pub result: std::result::Result<SimReport, String>,
}

/// Every instance under every config, in instance-major order. Runs are
/// independent and may execute in parallel.
pub fn run_matrix(problems: &[(String, IlpProblem)], configs: &[(String, SimConfig)]) -> Vec<MatrixRow> {
    let jobs: Vec<(usize, usize)> =
        (0..problems.len()).flat_map(|i| (0..configs.len()).map(move |c| (i, c))).collect();
    jobs.par_iter()
        .map(|&(i, c)| MatrixRow {
            instance: problems[i].0.clone(),
            config: configs[c].0.clone(),
            result: run(&problems[i].1, &configs[c].1).map_err(|e| e.to_string()),
        })
        .collect()
}

pub const CSV_HEADER: [&str; 27] = [
    "instance",
    "config",
    "row_kind",
    "path",
    "status",
    "objective",
    "cycles_total",
    "cycles_fc",
    "cycles_sa",
    "cycles_sle",
    "cycles_bnb",
    "cycles_fill_stall",
    "energy_pj_total",
    "energy_pj_pim_compute",
    "energy_pj_shift_add",
    "energy_pj_sub_div",
    "energy_pj_queues",
    "energy_pj_l2_to_l1",
    "energy_pj_dram_to_l2",
    "mac_events",
    "iterations",
    "bnb_nodes",
    "fill_stalls",
    "attr_data_movement_pct",
    "attr_parallel_pct",
    "attr_sparsity_pct",
    "error",
];

fn pj(aj: u64) -> String {
    format!("{}.{:06}", aj / 1_000_000, aj % 1_000_000)
}

fn run_record(row: &MatrixRow) -> Vec<String> {
    let mut rec = vec![row.instance.clone(), row.config.clone(), "run".into()];
    match &row.result {
        Ok(r) => {
            let l = &r.ledger;
            rec.push(r.path.name().into());
            rec.push(format!("{:?}", r.solution.status));
            rec.push(r.objective_text());
            rec.push(l.total_cycles.to_string());
            for p in Phase::ALL {
                rec.push(l.cycles_in(p).to_string());
            }
            rec.push(pj(l.total_energy_aj));
            for c in Component::ALL {
                rec.push(pj(l.energy_aj[&c]));
            }
            rec.push(l.events_of(EventKind::MacOp).to_string());
            rec.push(r.stats.iterations.to_string());
            rec.push(r.stats.bnb.as_ref().map_or(0, |b| b.created).to_string());
            rec.push(r.stats.fill.as_ref().map_or(0, |f| f.demand_fills).to_string());
            rec.extend(["".into(), "".into(), "".into(), "".into()]);
        }
        Err(e) => {
            rec.resize(CSV_HEADER.len() - 1, String::new());
            rec.push(e.clone());
        }
    }
    rec
}

fn attribution_record(instance: &str, a: std::result::Result<cost::Attribution, String>) -> Vec<String> {
    let mut rec = vec![instance.to_string(), String::new(), "attribution".into()];
    rec.resize(CSV_HEADER.len() - 4, String::new());
    match a {
        Ok(a) => {
            for v in [a.data_movement_pct, a.parallel_pct, a.sparsity_pct] {
                rec.push(format!("{v:.3}"));
            }
            rec.push(String::new());
        }
        Err(e) => {
            rec.extend([String::new(), String::new(), String::new(), e]);
        }
    }
    rec
}

/// Attribution for one instance from its `full`, `no-sa` and `serial-pim`
/// runs, when all three are present.
pub fn attribution_for(rows: &[MatrixRow], instance: &str, l2_cycles: u64) -> Option<std::result::Result<cost::Attribution, String>> {
    let find = |name: &str| rows.iter().find(|r| r.instance == instance && r.config == name);
    let (full, nosa, serial) = (find("full")?, find("no-sa")?, find("serial-pim")?);
    Some(match (&full.result, &nosa.result, &serial.result) {
        (Ok(f), Ok(n), Ok(s)) => {
            cost::attribution_report(&f.figures(l2_cycles), &n.figures(l2_cycles), &s.figures(l2_cycles))
                .map_err(|e| e.to_string())
        }
        _ => Err("a contributing run failed".into()),
    })
}

/// CSV text: one row per run in matrix order, then one attribution row per
/// instance that has the three reference configs.
pub fn matrix_csv(rows: &[MatrixRow], l2_cycles: u64) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for r in rows {
        w.write_record(run_record(r)).expect("in-memory csv");
    }
    let mut seen: Vec<&str> = Vec::new();
    for r in rows {
        if seen.contains(&r.instance.as_str()) {
            continue;
        }
        seen.push(&r.instance);
        if let Some(a) = attribution_for(rows, &r.instance, l2_cycles) {
            w.write_record(attribution_record(&r.instance, a)).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Named configuration presets used by bench matrices.
pub fn preset(base: &SimConfig, name: &str) -> Result<SimConfig> {
    let mut c = base.clone();
    match name {
        "full" => {}
        "no-sa" => c.sa_enabled = false,
        "serial-pim" => c.serial_pim = true,
        "no-prefetch" => c.prefetch_enabled = false,
        "exact-div" => c.approx_div_enabled = false,
        _ => return Err(Error::InvalidParams(format!("unknown preset `{name}`"))),
    }
    Ok(c)
}

pub const DEFAULT_PRESETS: [&str; 3] = ["full", "no-sa", "serial-pim"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceSpec {
    name: Option<String>,
    path: Option<String>,
    kind: Option<String>,
    n: Option<usize>,
    m: Option<usize>,
    sources: Option<usize>,
    dests: Option<usize>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigSpec {
    name: String,
    preset: Option<String>,
    #[serde(default)]
    set: std::collections::BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixSpec {
    #[serde(default)]
    instance: Vec<InstanceSpec>,
    #[serde(default)]
    config: Vec<ConfigSpec>,
}

pub type Matrix = (Vec<(String, IlpProblem)>, Vec<(String, SimConfig)>);

/// Parse a TOML bench matrix. Instances are `[[instance]]` tables with
/// either `path` (read through `load`) or `kind` plus its size parameters
/// and `seed`; `[[config]]` tables name a preset and optional `set`
/// overrides. Without configs the three attribution presets are used.
pub fn parse_matrix(text: &str, base: &SimConfig, load: impl Fn(&str) -> Result<String>) -> Result<Matrix> {
    let spec: MatrixSpec = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |sp| text[..sp.start].lines().count().max(1)),
        msg: e.message().to_string(),
    })?;
    let mut problems = Vec::with_capacity(spec.instance.len());
    for (i, inst) in spec.instance.iter().enumerate() {
        let problem = match (&inst.path, inst.kind.as_deref()) {
            (Some(path), None) => crate::format::parse_problem(&load(path)?)?,
            (None, Some(kind)) => {
                let need = |v: Option<usize>, what: &str| {
                    v.ok_or_else(|| Error::InvalidParams(format!("instance {i}: `{kind}` needs `{what}`")))
                };
                let k = match kind {
                    "transportation" => crate::generate::InstanceKind::Transportation {
                        sources: need(inst.sources, "sources")?,
                        dests: need(inst.dests, "dests")?,
                    },
                    "investment" => crate::generate::InstanceKind::Investment { n: need(inst.n, "n")? },
                    "random" => crate::generate::InstanceKind::RandomDense { n: need(inst.n, "n")?, m: need(inst.m, "m")? },
                    other => return Err(Error::InvalidParams(format!("instance {i}: unknown kind `{other}`"))),
                };
                crate::generate::gen_instance(&k, inst.seed)?
            }
            _ => return Err(Error::InvalidParams(format!("instance {i}: give exactly one of `path` or `kind`"))),
        };
        let name = inst.name.clone().unwrap_or_else(|| match (&inst.path, &inst.kind) {
            (Some(p), _) => p.clone(),
            (_, Some(k)) => format!("{k}-{}", inst.seed),
            _ => unreachable!(),
        });
        problems.push((name, problem));
    }
    let mut configs = Vec::new();
    if spec.config.is_empty() {
        for p in DEFAULT_PRESETS {
            configs.push((p.to_string(), preset(base, p)?));
        }
    }
    for c in &spec.config {
        let mut cfg = preset(base, c.preset.as_deref().unwrap_or("full"))?;
        for (k, v) in &c.set {
            let text = match v {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            cfg.set(k, &text)?;
        }
        cfg.validate()?;
        configs.push((c.name.clone(), cfg));
    }
    Ok((problems, configs))
}

/// One-paragraph summary for terminals.
pub fn summary(r: &SimReport) -> String {
    let mut s = String::new();
    let l = &r.ledger;
    let _ = writeln!(s, "instance   {}", r.instance);
    let _ = writeln!(s, "verdict    {:?}", r.verdict);
    let _ = writeln!(s, "path       {}", r.path.name());
    let _ = writeln!(s, "status     {:?}", r.solution.status);
    if let Some(o) = &r.solution.objective {
        let _ = writeln!(s, "objective  {}", rational::format(o));
        let xs: Vec<String> = r.solution.x.iter().map(rational::format).collect();
        let _ = writeln!(s, "x          [{}]", xs.join(", "));
    }
    let _ = writeln!(s, "cycles     {}", l.total_cycles);
    for p in Phase::ALL {
        let _ = writeln!(s, "  {:<10} {}", format!("{p:?}").to_lowercase(), l.cycles_in(p));
    }
    let _ = writeln!(s, "energy_pj  {}", pj(l.total_energy_aj));
    let _ = writeln!(s, "mac_events {}", l.events_of(EventKind::MacOp));
    if let Some(b) = &r.stats.bnb {
        let _ = writeln!(s, "bnb_nodes  {} (depth {})", b.created, b.max_depth);
    }
    if let Some(f) = &r.stats.fill {
        let _ = writeln!(s, "fill       {} demand, {} prefetch, {} stall cycles", f.demand_fills, f.prefetch_fills, f.stall_cycles);
    }
    if let Some(o) = &r.stats.oracle {
        let _ = writeln!(s, "oracle     {o:?}");
    }
    s
}
