//! Cycle and energy accounting.
//!
//! Energies are kept as integer attojoules so that ledger totals are exact
//! sums of their components. Per-event costs derive from [`CostConfig`].

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const AJ_PER_PJ: f64 = 1e6;
const AJ_PER_J: f64 = 1e18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub clock_ns: f64,
    pub sram_latency_ns: f64,
    pub move_pj_per_bit: f64,
    pub rbl_cap_f: f64,
    pub read_cap_f: f64,
    pub vdd: f64,
    /// Bit-line swing as a fraction of `vdd` (sense threshold at Vdd/2).
    pub swing: f64,
    pub div_pj: f64,
    pub div_ns: f64,
    pub exact_div_pj: f64,
    pub exact_div_ns: f64,
    pub sa_pj: f64,
    pub ar_pj: f64,
    pub sub_pj: f64,
    pub queue_pj: f64,
    pub l2_bytes: u64,
    pub dram_bytes: u64,
    pub line_bytes: u64,
    pub prefetch_stride_lines: usize,
    pub l2_latency_ns: f64,
    pub dram_latency_ns: f64,
    pub macs_per_cycle: u64,
    pub queue_lanes: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            clock_ns: 2.0,
            sram_latency_ns: 2.0,
            move_pj_per_bit: 1.0,
            rbl_cap_f: 40e-15,
            read_cap_f: 35e-15,
            vdd: 1.0,
            swing: 0.5,
            div_pj: 0.15,
            div_ns: 0.5,
            exact_div_pj: 1.0,
            exact_div_ns: 4.0,
            sa_pj: 0.01,
            ar_pj: 0.05,
            sub_pj: 0.05,
            queue_pj: 0.1,
            l2_bytes: 4 << 20,
            dram_bytes: 2 << 30,
            line_bytes: 64,
            prefetch_stride_lines: 2,
            l2_latency_ns: 10.0,
            dram_latency_ns: 100.0,
            macs_per_cycle: 32,
            queue_lanes: 8,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let floats = [
            ("clock_ns", self.clock_ns),
            ("sram_latency_ns", self.sram_latency_ns),
            ("move_pj_per_bit", self.move_pj_per_bit),
            ("rbl_cap_f", self.rbl_cap_f),
            ("read_cap_f", self.read_cap_f),
            ("vdd", self.vdd),
            ("swing", self.swing),
            ("div_pj", self.div_pj),
            ("div_ns", self.div_ns),
            ("exact_div_pj", self.exact_div_pj),
            ("exact_div_ns", self.exact_div_ns),
            ("sa_pj", self.sa_pj),
            ("ar_pj", self.ar_pj),
            ("sub_pj", self.sub_pj),
            ("queue_pj", self.queue_pj),
            ("l2_latency_ns", self.l2_latency_ns),
            ("dram_latency_ns", self.dram_latency_ns),
        ];
        for (name, v) in floats {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("cost.{name} must be positive")));
            }
        }
        let ints = [
            ("l2_bytes", self.l2_bytes),
            ("dram_bytes", self.dram_bytes),
            ("line_bytes", self.line_bytes),
            ("prefetch_stride_lines", self.prefetch_stride_lines as u64),
            ("macs_per_cycle", self.macs_per_cycle),
            ("queue_lanes", self.queue_lanes),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(Error::InvalidParams(format!("cost.{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn cycles_for_ns(&self, ns: f64) -> u64 {
        (ns / self.clock_ns).ceil().max(1.0) as u64
    }

    pub fn l2_cycles(&self) -> u64 {
        self.cycles_for_ns(self.l2_latency_ns)
    }

    pub fn dram_cycles(&self) -> u64 {
        self.cycles_for_ns(self.dram_latency_ns)
    }

    /// Energy of `events` read-bit-line discharges, `C · V · ΔV`.
    pub fn rbl_energy_pj(&self, events: u64) -> f64 {
        events as f64 * self.rbl_event_aj() as f64 / AJ_PER_PJ
    }

    fn rbl_event_aj(&self) -> u64 {
        (self.rbl_cap_f * self.vdd * self.vdd * self.swing * AJ_PER_J).round() as u64
    }

    /// Per-event energy (attojoules) and cycles. `cols` is the array width
    /// discharged by a normal row read.
    fn unit(&self, kind: EventKind, cols: usize) -> (u64, u64) {
        let aj = |pj: f64| (pj * AJ_PER_PJ).round() as u64;
        let line_pj = self.move_pj_per_bit * self.line_bytes as f64 * 8.0;
        match kind {
            EventKind::RblDischarge => (self.rbl_event_aj(), 0),
            EventKind::RowActivate => (
                (self.read_cap_f * self.vdd * self.vdd * self.swing * cols as f64 * AJ_PER_J).round() as u64,
                self.cycles_for_ns(self.sram_latency_ns),
            ),
            EventKind::SaOp => (aj(self.sa_pj), 1),
            EventKind::ArOp => (aj(self.ar_pj), 1),
            EventKind::SubOp => (aj(self.sub_pj), 1),
            EventKind::DivOp => (aj(self.div_pj), self.cycles_for_ns(self.div_ns)),
            EventKind::ExactDivOp => (aj(self.exact_div_pj), self.cycles_for_ns(self.exact_div_ns)),
            EventKind::QueueRw => (aj(self.queue_pj), 1),
            EventKind::LineFillL2 => (aj(line_pj), self.l2_cycles()),
            EventKind::LineFillDram => (aj(line_pj), self.dram_cycles()),
            EventKind::MacOp => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RblDischarge,
    RowActivate,
    SaOp,
    ArOp,
    SubOp,
    DivOp,
    ExactDivOp,
    QueueRw,
    LineFillL2,
    LineFillDram,
    /// Count-only: multiply-accumulate products issued to the array.
    MacOp,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::RblDischarge,
        EventKind::RowActivate,
        EventKind::SaOp,
        EventKind::ArOp,
        EventKind::SubOp,
        EventKind::DivOp,
        EventKind::ExactDivOp,
        EventKind::QueueRw,
        EventKind::LineFillL2,
        EventKind::LineFillDram,
        EventKind::MacOp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::RblDischarge => "rbl_discharge",
            EventKind::RowActivate => "row_activate",
            EventKind::SaOp => "sa_op",
            EventKind::ArOp => "ar_op",
            EventKind::SubOp => "sub_op",
            EventKind::DivOp => "div_op",
            EventKind::ExactDivOp => "exact_div_op",
            EventKind::QueueRw => "queue_rw",
            EventKind::LineFillL2 => "line_fill_l2",
            EventKind::LineFillDram => "line_fill_dram",
            EventKind::MacOp => "mac_op",
        }
    }

    pub fn component(self) -> Option<Component> {
        Some(match self {
            EventKind::RblDischarge | EventKind::RowActivate => Component::PimCompute,
            EventKind::SaOp | EventKind::ArOp => Component::ShiftAdd,
            EventKind::SubOp | EventKind::DivOp | EventKind::ExactDivOp => Component::SubDiv,
            EventKind::QueueRw => Component::Queues,
            EventKind::LineFillL2 => Component::L2ToL1,
            EventKind::LineFillDram => Component::DramToL2,
            EventKind::MacOp => return None,
        })
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownEvent(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fc,
    Sa,
    Sle,
    Bnb,
    FillStall,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Fc, Phase::Sa, Phase::Sle, Phase::Bnb, Phase::FillStall];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    PimCompute,
    ShiftAdd,
    SubDiv,
    Queues,
    L2ToL1,
    DramToL2,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::PimCompute,
        Component::ShiftAdd,
        Component::SubDiv,
        Component::Queues,
        Component::L2ToL1,
        Component::DramToL2,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub cycles: BTreeMap<Phase, u64>,
    pub energy_aj: BTreeMap<Component, u64>,
    pub events: BTreeMap<EventKind, u64>,
    pub total_cycles: u64,
    pub total_energy_aj: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self {
            cycles: Phase::ALL.iter().map(|p| (*p, 0)).collect(),
            energy_aj: Component::ALL.iter().map(|c| (*c, 0)).collect(),
            events: EventKind::ALL.iter().map(|k| (*k, 0)).collect(),
            total_cycles: 0,
            total_energy_aj: 0,
        }
    }
}

impl Ledger {
    pub fn cycles_in(&self, phase: Phase) -> u64 {
        self.cycles[&phase]
    }

    pub fn energy_pj(&self, c: Component) -> f64 {
        self.energy_aj[&c] as f64 / AJ_PER_PJ
    }

    pub fn total_energy_pj(&self) -> f64 {
        self.total_energy_aj as f64 / AJ_PER_PJ
    }

    pub fn events_of(&self, kind: EventKind) -> u64 {
        self.events[&kind]
    }

    /// Totals equal the component sums.
    pub fn is_conserved(&self) -> bool {
        self.cycles.values().sum::<u64>() == self.total_cycles
            && self.energy_aj.values().sum::<u64>() == self.total_energy_aj
    }

    pub fn merge(&mut self, other: &Ledger) {
        for (k, v) in &other.cycles {
            *self.cycles.entry(*k).or_default() += v;
        }
        for (k, v) in &other.energy_aj {
            *self.energy_aj.entry(*k).or_default() += v;
        }
        for (k, v) in &other.events {
            *self.events.entry(*k).or_default() += v;
        }
        self.total_cycles += other.total_cycles;
        self.total_energy_aj += other.total_energy_aj;
    }
}

/// One batch of array dot products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MacBatch {
    /// Stored rows read.
    pub rows: u64,
    /// Coefficient × X products.
    pub products: u64,
    pub discharges: u64,
    /// Array passes per row (X width / x_bits).
    pub slices: u64,
    /// X width in bits.
    pub x_width: u64,
}

/// Records events into a [`Ledger`] against the current phase.
#[derive(Debug, Clone)]
pub struct Meter {
    cfg: CostConfig,
    cols: usize,
    serial_pim: bool,
    phase: Phase,
    ledger: Ledger,
    row_lines: Vec<(usize, usize)>,
    schedule: Vec<Access>,
    schedule_truncated: bool,
}

/// Longest line-access trace kept for the fill model.
pub const SCHEDULE_CAP: usize = 4_000_000;

impl Meter {
    pub fn new(cfg: CostConfig, cols: usize, serial_pim: bool) -> Self {
        Self {
            cfg,
            cols,
            serial_pim,
            phase: Phase::Fc,
            ledger: Ledger::default(),
            row_lines: Vec::new(),
            schedule: Vec::new(),
            schedule_truncated: false,
        }
    }

    /// First line and line count of every stored constraint, so that
    /// [`Meter::touch`] can log line accesses.
    pub fn set_row_lines(&mut self, row_lines: Vec<(usize, usize)>) {
        self.row_lines = row_lines;
    }

    /// Log one compute access to each line of constraint `row`.
    pub fn touch(&mut self, row: usize) {
        let Some(&(first, count)) = self.row_lines.get(row) else {
            return;
        };
        if self.schedule.len() + count > SCHEDULE_CAP {
            self.schedule_truncated = true;
            return;
        }
        self.schedule.extend((first..first + count).map(|line| Access { line, compute: 1 }));
    }

    pub fn schedule(&self) -> &[Access] {
        &self.schedule
    }

    pub fn schedule_truncated(&self) -> bool {
        self.schedule_truncated
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn total_cycles(&self) -> u64 {
        self.ledger.total_cycles
    }

    pub fn add_cycles(&mut self, phase: Phase, cycles: u64) {
        *self.ledger.cycles.get_mut(&phase).unwrap() += cycles;
        self.ledger.total_cycles += cycles;
    }

    fn add_energy(&mut self, kind: EventKind, count: u64) {
        *self.ledger.events.get_mut(&kind).unwrap() += count;
        if let Some(c) = kind.component() {
            let aj = self.cfg.unit(kind, self.cols).0 * count;
            *self.ledger.energy_aj.get_mut(&c).unwrap() += aj;
            self.ledger.total_energy_aj += aj;
        }
    }

    /// `count` events issued back to back.
    pub fn record(&mut self, kind: EventKind, count: u64) {
        self.record_parallel(kind, count, 1);
    }

    /// `count` events spread across `lanes` parallel units.
    pub fn record_parallel(&mut self, kind: EventKind, count: u64, lanes: u64) {
        if count == 0 {
            return;
        }
        self.add_energy(kind, count);
        let per = self.cfg.unit(kind, self.cols).1;
        self.add_cycles(self.phase, count.div_ceil(lanes.max(1)) * per);
    }

    /// Events whose latency is hidden behind other work.
    pub fn record_energy_only(&mut self, kind: EventKind, count: u64) {
        self.add_energy(kind, count);
    }

    pub fn record_named(&mut self, kind: &str, count: u64) -> Result<()> {
        self.record(kind.parse()?, count);
        Ok(())
    }

    /// Array dot products: discharges plus one shift-add per product per X
    /// bit and one adder reduction per row per X bit. Throughput is capped
    /// at `macs_per_cycle` products per array pass (1 in serial mode).
    pub fn record_mac(&mut self, b: MacBatch) {
        if b.products == 0 {
            return;
        }
        self.add_energy(EventKind::MacOp, b.products);
        self.add_energy(EventKind::RblDischarge, b.discharges);
        self.add_energy(EventKind::SaOp, b.products * b.x_width);
        self.add_energy(EventKind::ArOp, b.rows * b.x_width);
        let per_cycle = if self.serial_pim { 1 } else { self.cfg.macs_per_cycle };
        self.add_cycles(self.phase, b.products.div_ceil(per_cycle) * b.slices);
    }

    /// A pipelined burst of `lines` fills: one full latency then one line
    /// per cycle.
    pub fn record_fill_burst(&mut self, kind: EventKind, lines: u64) {
        if lines == 0 {
            return;
        }
        self.add_energy(kind, lines);
        let lat = self.cfg.unit(kind, self.cols).1;
        self.add_cycles(self.phase, lat + lines - 1);
    }
}

/// One line touched by compute, followed by `compute` busy cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub line: usize,
    pub compute: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FillParams {
    pub capacity_lines: usize,
    pub latency: u64,
    /// Lines fetched ahead of each access; 0 disables prefetching.
    pub prefetch_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FillOutcome {
    pub accesses: u64,
    pub hits: u64,
    pub demand_fills: u64,
    pub prefetch_fills: u64,
    pub stall_cycles: u64,
    pub elapsed: u64,
}

/// Replay `schedule` against an L1 of `capacity_lines` lines holding the
/// first lines of a `total_lines` workload. Misses fill from L2 through a
/// pipelined write port that runs beside compute; the victim is the least
/// recently computed line.
pub fn simulate_fill(schedule: &[Access], total_lines: usize, p: FillParams) -> FillOutcome {
    let cap = p.capacity_lines.max(1);
    let mut out = FillOutcome::default();
    let mut stamp_of: BTreeMap<usize, u64> = BTreeMap::new();
    let mut by_stamp: BTreeSet<(u64, usize)> = BTreeSet::new();
    for line in 0..total_lines.min(cap) {
        stamp_of.insert(line, 0);
        by_stamp.insert((0, line));
    }
    let mut in_flight: BTreeMap<usize, u64> = BTreeMap::new();
    let mut port_free = 0u64;
    let mut t = 0u64;
    for (i, a) in schedule.iter().enumerate() {
        let stamp = i as u64 + 1;
        out.accesses += 1;
        if let Some(old) = stamp_of.get(&a.line).copied() {
            out.hits += 1;
            by_stamp.remove(&(old, a.line));
        } else {
            let demand = t + p.latency;
            let ready = match in_flight.remove(&a.line) {
                Some(r) if r <= demand => r,
                _ => {
                    out.demand_fills += 1;
                    demand
                }
            };
            out.stall_cycles += ready.saturating_sub(t);
            t = t.max(ready);
            if stamp_of.len() >= cap {
                let victim = *by_stamp.iter().next().unwrap();
                by_stamp.remove(&victim);
                stamp_of.remove(&victim.1);
            }
        }
        stamp_of.insert(a.line, stamp);
        by_stamp.insert((stamp, a.line));
        for d in 1..=p.prefetch_degree {
            let l = a.line + d;
            if l >= total_lines || stamp_of.contains_key(&l) || in_flight.contains_key(&l) {
                continue;
            }
            let issue = t.max(port_free);
            port_free = issue + 1;
            in_flight.insert(l, issue + p.latency);
            out.prefetch_fills += 1;
        }
        t += a.compute;
    }
    out.elapsed = t;
    out
}

/// Cycle figures of one run used for attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFigures {
    pub instance: String,
    pub cycles_total: u64,
    pub line_accesses: u64,
    pub fill_stall_cycles: u64,
    pub l2_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub instance: String,
    pub data_movement_cycles: u64,
    pub parallel_cycles: u64,
    pub sparsity_cycles: u64,
    pub data_movement_pct: f64,
    pub parallel_pct: f64,
    pub sparsity_pct: f64,
}

/// Split the speedup of the full configuration into three factors:
/// sparsity-aware compute (forced-dense minus full), parallel compute
/// (serial array minus full) and data movement (every line access paying
/// an L2 round trip minus the fill stalls actually paid).
pub fn attribution_report(full: &RunFigures, no_sparsity: &RunFigures, serial_pim: &RunFigures) -> Result<Attribution> {
    for other in [no_sparsity, serial_pim] {
        if other.instance != full.instance {
            return Err(Error::MismatchedRuns(format!("{} vs {}", full.instance, other.instance)));
        }
    }
    let sparsity = no_sparsity.cycles_total.saturating_sub(full.cycles_total);
    let parallel = serial_pim.cycles_total.saturating_sub(full.cycles_total);
    let data = (full.line_accesses * full.l2_cycles).saturating_sub(full.fill_stall_cycles);
    let sum = (sparsity + parallel + data) as f64;
    let pct = |v: u64| if sum == 0.0 { 0.0 } else { 100.0 * v as f64 / sum };
    Ok(Attribution {
        instance: full.instance.clone(),
        data_movement_cycles: data,
        parallel_cycles: parallel,
        sparsity_cycles: sparsity,
        data_movement_pct: pct(data),
        parallel_pct: pct(parallel),
        sparsity_pct: pct(sparsity),
    })
}
