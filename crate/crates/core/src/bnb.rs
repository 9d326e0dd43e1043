//! Best-bound branch and bound over the LP relaxation.
//!
//! Nodes live in an arena indexed by their BrID. A node stores only the
//! branch that created it (variable, direction, value, parent); its variable
//! bounds are rebuilt by walking the parent chain, so branch constraints
//! never enter the Jacobi system. They are checked, together with every
//! original row, by the relaxation's verification pass.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::cost::{EventKind, Meter, Phase};
use crate::error::Result;
use crate::problem::{is_feasible, IlpProblem, Sense, Solution, Status};
use crate::rational::{self, Rational};
use crate::relax::{self, RelaxConfig, RelaxOutcome, RelaxStats, SolveMethod, VarBounds};

/// Entries in the hardware UB/LB and branch arrays.
pub const BOUND_ARRAY_ENTRIES: u64 = 1024;
/// Nodes whose bounds are compared in one pruning step.
const PRUNE_LANES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchDir {
    /// `x_b <= value`
    Floor,
    /// `x_b >= value`
    Ceil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRule {
    #[default]
    HighestFractional,
    LowestFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fathom {
    Integral,
    Dominated,
    Infeasible,
    BoundClash,
    DepthLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Open,
    /// Relaxation did not converge; the node keeps its parent's bound.
    Unresolved,
    Expanded,
    Fathomed(Fathom),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branch {
    pub var: usize,
    pub dir: BranchDir,
    pub value: i128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub branch: Option<Branch>,
    /// Upper bound on the subtree objective for Max, lower bound for Min.
    pub local_bound: Option<Rational>,
    pub depth: usize,
    pub relaxed_x: Vec<Rational>,
    pub state: NodeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub relax: RelaxConfig,
    pub depth_cap: usize,
    pub node_cap: u64,
    pub branch_rule: BranchRule,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            relax: RelaxConfig::default(),
            depth_cap: 64,
            node_cap: 1_000_000,
            branch_rule: BranchRule::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub created: u64,
    pub fathomed: u64,
}

/// How often each pruning rule fired. `equal_leaves` and
/// `integer_vs_infeasible` are counted on sibling pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneCounts {
    pub integral: u64,
    pub dominated: u64,
    pub equal_leaves: u64,
    pub integer_vs_infeasible: u64,
    pub infeasible: u64,
    pub bound_clash: u64,
    pub depth_limit: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnbStats {
    pub created: u64,
    pub fathomed: u64,
    pub expanded: u64,
    pub open: u64,
    pub unresolved: u64,
    pub max_depth: usize,
    pub levels: Vec<LevelStats>,
    pub pruned: PruneCounts,
    pub relaxations: u64,
    pub iterations: u64,
    pub node_cap_hit: bool,
    pub bound_array_overflow: bool,
}

impl BnbStats {
    pub fn is_balanced(&self) -> bool {
        self.created == self.fathomed + self.open + self.expanded
    }
}

#[derive(Debug, Clone)]
pub struct BnbState {
    pub sense: Sense,
    pub nodes: Vec<BnbNode>,
    pub incumbent: Option<Solution>,
    pub stats: BnbStats,
    base: VarBounds,
}

impl BnbState {
    /// Objective of the incumbent, the value every open bound must beat.
    pub fn global_bound(&self) -> Option<Rational> {
        self.incumbent.as_ref().and_then(|s| s.objective)
    }

    pub fn open_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| n.state == NodeState::Open).map(|n| n.id)
    }

    fn create(&mut self, parent: Option<usize>, branch: Option<Branch>, bound: Option<Rational>) -> usize {
        let id = self.nodes.len();
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        self.nodes.push(BnbNode { id, parent, branch, local_bound: bound, depth, relaxed_x: Vec::new(), state: NodeState::Open });
        self.stats.created += 1;
        self.stats.open += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if self.stats.levels.len() <= depth {
            self.stats.levels.resize(depth + 1, LevelStats::default());
        }
        self.stats.levels[depth].created += 1;
        self.stats.bound_array_overflow |= self.stats.created > BOUND_ARRAY_ENTRIES;
        id
    }

    fn set_state(&mut self, id: usize, state: NodeState) {
        let old = self.nodes[id].state;
        if old == state {
            return;
        }
        match old {
            NodeState::Open => self.stats.open -= 1,
            NodeState::Unresolved => {
                self.stats.open -= 1;
                self.stats.unresolved -= 1;
            }
            NodeState::Expanded | NodeState::Fathomed(_) => unreachable!("closed nodes stay closed"),
        }
        match state {
            NodeState::Open => self.stats.open += 1,
            NodeState::Unresolved => {
                self.stats.open += 1;
                self.stats.unresolved += 1;
            }
            NodeState::Expanded => self.stats.expanded += 1,
            NodeState::Fathomed(why) => {
                self.stats.fathomed += 1;
                self.stats.levels[self.nodes[id].depth].fathomed += 1;
                let p = &mut self.stats.pruned;
                match why {
                    Fathom::Integral => p.integral += 1,
                    Fathom::Dominated => p.dominated += 1,
                    Fathom::Infeasible => p.infeasible += 1,
                    Fathom::BoundClash => p.bound_clash += 1,
                    Fathom::DepthLimit => p.depth_limit += 1,
                }
            }
        }
        self.nodes[id].state = state;
    }

    /// Variable bounds of `id`: the problem's own bounds narrowed by every
    /// branch on the path to the root.
    pub fn node_bounds(&self, id: usize) -> VarBounds {
        let mut b = self.base.clone();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = &self.nodes[c];
            if let Some(br) = node.branch {
                let v = Rational::from_integer(br.value);
                match br.dir {
                    BranchDir::Floor => b.restrict_upper(br.var, v),
                    BranchDir::Ceil => b.restrict_lower(br.var, v),
                }
            }
            cur = node.parent;
        }
        b
    }

    /// Is a node with this bound unable to beat the incumbent?
    fn dominated(&self, bound: &Rational) -> bool {
        self.global_bound().is_some_and(|g| !self.sense.better(bound, &g))
    }

    fn offer(&mut self, problem: &IlpProblem, x: Vec<Rational>) -> bool {
        let s = Solution::with_point(Status::Optimal, problem, x);
        let improves = match (&self.incumbent, &s.objective) {
            (None, _) => true,
            (Some(inc), Some(f)) => inc.objective.is_some_and(|g| self.sense.better(f, &g)),
            _ => false,
        };
        if improves {
            self.incumbent = Some(s);
        }
        improves
    }
}

/// Integer bound implied by a relaxation objective.
pub fn local_bound(sense: Sense, f: &Rational) -> Rational {
    Rational::from_integer(match sense {
        Sense::Max => rational::floor(f),
        Sense::Min => rational::ceil(f),
    })
}

/// Root state from a converged relaxation. The rounded relaxation point
/// becomes the first incumbent when it is feasible; an integral relaxation
/// closes the root immediately.
pub fn init_bounds(problem: &IlpProblem, relaxed: &Solution) -> Option<BnbState> {
    if relaxed.status != Status::Optimal {
        return None;
    }
    let f = relaxed.objective?;
    let base = VarBounds::from_problem(problem)?;
    let mut st = BnbState { sense: problem.sense, nodes: Vec::new(), incumbent: None, stats: BnbStats::default(), base };
    let root = st.create(None, None, Some(local_bound(problem.sense, &f)));
    st.nodes[root].relaxed_x = relaxed.x.clone();
    if relax::is_integral(&relaxed.x) {
        st.offer(problem, relaxed.x.clone());
        st.set_state(root, NodeState::Fathomed(Fathom::Integral));
        return Some(st);
    }
    let rounded = relax::round_for(problem.sense, &relaxed.x);
    if is_feasible(problem, &rounded) {
        st.offer(problem, rounded);
    }
    Some(st)
}

/// Index of the branching variable, `None` when `x` is integral.
pub fn select_branch_variable(x: &[Rational], rule: BranchRule) -> Option<usize> {
    let mut best: Option<(usize, Rational)> = None;
    for (j, v) in x.iter().enumerate() {
        let f = rational::frac(v);
        if f.is_zero() {
            continue;
        }
        let take = match (&best, rule) {
            (None, _) => true,
            (Some((_, b)), BranchRule::HighestFractional) => f > *b,
            (Some((_, b)), BranchRule::LowestFractional) => f < *b,
        };
        if take {
            best = Some((j, f));
        }
    }
    best.map(|(j, _)| j)
}

/// Open node with the best local bound, lowest BrID on ties.
pub fn select_branch_node(state: &BnbState) -> Option<usize> {
    let mut best: Option<(usize, Rational)> = None;
    for id in state.open_ids() {
        let b = state.nodes[id].local_bound.expect("open nodes carry a bound");
        if best.as_ref().map_or(true, |(_, cur)| state.sense.better(&b, cur)) {
            best = Some((id, b));
        }
    }
    best.map(|(id, _)| id)
}

/// Floor and ceil children of `id` on variable `var`. Both inherit the
/// parent's bound until their own relaxation is solved.
pub fn expand_node(state: &mut BnbState, id: usize, var: usize) -> (usize, usize) {
    let v = state.nodes[id].relaxed_x[var];
    debug_assert!(!v.is_integer());
    let bound = state.nodes[id].local_bound;
    state.set_state(id, NodeState::Expanded);
    let lo = state.create(Some(id), Some(Branch { var, dir: BranchDir::Floor, value: rational::floor(&v) }), bound);
    let hi = state.create(Some(id), Some(Branch { var, dir: BranchDir::Ceil, value: rational::ceil(&v) }), bound);
    (lo, hi)
}

/// Relaxation of a child. A bound clash is infeasible without touching
/// the solver.
pub fn solve_child(
    problem: &IlpProblem,
    bounds: &VarBounds,
    cfg: &RelaxConfig,
    meter: Option<&mut Meter>,
) -> Result<Option<RelaxOutcome>> {
    if bounds.is_empty() {
        return Ok(None);
    }
    relax::solve_relaxation(problem, bounds, cfg, meter).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChildResult {
    Integer(Rational),
    Fractional(Rational),
    Infeasible,
    Unresolved,
}

fn settle_child(
    problem: &IlpProblem,
    state: &mut BnbState,
    id: usize,
    cfg: &BnbConfig,
    meter: Option<&mut Meter>,
) -> Result<ChildResult> {
    let bounds = state.node_bounds(id);
    let Some(out) = solve_child(problem, &bounds, &cfg.relax, meter)? else {
        state.set_state(id, NodeState::Fathomed(Fathom::BoundClash));
        return Ok(ChildResult::Infeasible);
    };
    state.stats.relaxations += 1;
    state.stats.iterations += out.stats.iterations;
    match out.status {
        Status::Optimal => {}
        Status::Infeasible => {
            state.set_state(id, NodeState::Fathomed(Fathom::Infeasible));
            return Ok(ChildResult::Infeasible);
        }
        _ => {
            state.set_state(id, NodeState::Unresolved);
            return Ok(ChildResult::Unresolved);
        }
    }
    let f = out.objective.expect("optimal relaxations carry an objective");
    let bound = local_bound(problem.sense, &f);
    let node = &mut state.nodes[id];
    node.local_bound = Some(bound);
    node.relaxed_x = out.x;
    if relax::is_integral(&node.relaxed_x) {
        let x = node.relaxed_x.clone();
        state.offer(problem, x);
        state.set_state(id, NodeState::Fathomed(Fathom::Integral));
        return Ok(ChildResult::Integer(f));
    }
    Ok(ChildResult::Fractional(f))
}

/// Fathoms every open or unresolved node that cannot beat the incumbent.
pub fn prune(state: &mut BnbState, meter: Option<&mut Meter>) {
    let candidates: Vec<usize> = state
        .nodes
        .iter()
        .filter(|n| matches!(n.state, NodeState::Open | NodeState::Unresolved))
        .map(|n| n.id)
        .collect();
    if let Some(m) = meter {
        m.record_parallel(EventKind::SubOp, candidates.len() as u64, PRUNE_LANES);
    }
    for id in candidates {
        let b = state.nodes[id].local_bound.expect("live nodes carry a bound");
        if state.dominated(&b) {
            state.set_state(id, NodeState::Fathomed(Fathom::Dominated));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOutcome {
    pub solution: Solution,
    pub stats: BnbStats,
    /// Statistics of the root relaxation.
    pub root: RelaxStats,
    /// Every node created, indexed by id.
    pub nodes: Vec<BnbNode>,
}

/// Branch and bound from an already solved root relaxation.
pub fn branch_and_bound(
    problem: &IlpProblem,
    root: &RelaxOutcome,
    cfg: &BnbConfig,
    mut meter: Option<&mut Meter>,
) -> Result<BnbOutcome> {
    let relaxed = Solution { status: root.status, x: root.x.clone(), objective: root.objective };
    let Some(mut st) = init_bounds(problem, &relaxed) else {
        let status = match root.status {
            Status::Optimal => Status::Infeasible,
            s => s,
        };
        return Ok(BnbOutcome {
            solution: Solution::empty(status),
            stats: BnbStats::default(),
            root: root.stats.clone(),
            nodes: Vec::new(),
        });
    };
    if let Some(m) = meter.as_deref_mut() {
        m.set_phase(Phase::Bnb);
        m.record(EventKind::QueueRw, 4);
    }
    prune(&mut st, meter.as_deref_mut());
    let mut depth_limited = false;
    while let Some(id) = select_branch_node(&st) {
        if st.nodes[id].depth >= cfg.depth_cap {
            st.set_state(id, NodeState::Fathomed(Fathom::DepthLimit));
            depth_limited = true;
            continue;
        }
        if st.stats.created + 2 > cfg.node_cap {
            st.stats.node_cap_hit = true;
            break;
        }
        let var = select_branch_variable(&st.nodes[id].relaxed_x, cfg.branch_rule)
            .expect("open nodes hold a fractional relaxation");
        let (lo, hi) = expand_node(&mut st, id, var);
        if let Some(m) = meter.as_deref_mut() {
            // branch value, variable, parent and bound for each child
            m.record(EventKind::QueueRw, 8);
        }
        let a = settle_child(problem, &mut st, lo, cfg, meter.as_deref_mut())?;
        let b = settle_child(problem, &mut st, hi, cfg, meter.as_deref_mut())?;
        use ChildResult::*;
        match (a, b) {
            (Integer(x), Fractional(y)) | (Fractional(x), Integer(y)) | (Integer(x), Integer(y)) if x == y => {
                st.stats.pruned.equal_leaves += 1;
            }
            (Integer(_), Infeasible) | (Infeasible, Integer(_)) => st.stats.pruned.integer_vs_infeasible += 1,
            _ => {}
        }
        prune(&mut st, meter.as_deref_mut());
    }
    debug_assert!(st.stats.is_balanced());
    // anything not dominated that was left unexplored spoils optimality
    let loose = st.nodes.iter().any(|n| {
        matches!(n.state, NodeState::Open | NodeState::Unresolved)
            && n.local_bound.is_some_and(|b| !st.dominated(&b))
    });
    let status = if st.stats.node_cap_hit || loose || depth_limited {
        Status::NotConverged
    } else if st.incumbent.is_some() {
        Status::Optimal
    } else {
        Status::Infeasible
    };
    let solution = match st.incumbent.take() {
        Some(mut s) => {
            s.status = status;
            s
        }
        None => Solution::empty(status),
    };
    Ok(BnbOutcome { solution, stats: st.stats, root: root.stats.clone(), nodes: st.nodes })
}

/// Root relaxation followed by branch and bound.
pub fn solve_ilp(problem: &IlpProblem, cfg: &BnbConfig, mut meter: Option<&mut Meter>) -> Result<BnbOutcome> {
    let Some(bounds) = VarBounds::from_problem(problem) else {
        let root = RelaxStats { vertices: 0, system_size: 0, iterations: 0, method: SolveMethod::None, stalled: false };
        return Ok(BnbOutcome {
            solution: Solution::empty(Status::Infeasible),
            stats: BnbStats::default(),
            root,
            nodes: Vec::new(),
        });
    };
    if let Some(m) = meter.as_deref_mut() {
        m.set_phase(Phase::Sle);
    }
    let root = relax::solve_relaxation(problem, &bounds, &cfg.relax, meter.as_deref_mut())?;
    let mut out = branch_and_bound(problem, &root, cfg, meter)?;
    out.stats.relaxations += 1;
    out.stats.iterations += root.stats.iterations;
    Ok(out)
}

/// Is every component a non-negative integer?
pub fn is_nonneg_integral(x: &[Rational]) -> bool {
    x.iter().all(|v| v.is_integer() && !v.is_negative())
}
