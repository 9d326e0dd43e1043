use spark_core::cost::{EventKind, Phase};
use spark_core::generate::{self, cardinality_family, dense_family, gen_instance, InstanceKind};
use spark_core::sim::{self, Engine, SolvePath, Verdict};
use spark_core::{oracle, run, Constraint, IlpProblem, Sense, SimConfig, Status};

/// Too wide for L1 and still answered by the sparse path.
fn wide(n: usize) -> IlpProblem {
    let returns: Vec<i64> = (0..n as i64).map(|j| 1 + j % 17).collect();
    let prices: Vec<i64> = (0..n as i64).map(|j| 1 + j % 7).collect();
    let limits: Vec<i64> = (0..n as i64).map(|j| 1 + j % 4).collect();
    let full: i64 = prices.iter().zip(&limits).map(|(p, l)| p * l).sum();
    generate::investment(&returns, &prices, &limits, full - 1).unwrap()
}

fn overlaps(a: &sim::Span, b: &sim::Span) -> bool {
    a.start < b.end && b.start < a.end
}

#[test]
fn overflowing_instance_pays_fill_stalls() {
    let p = wide(300);
    let on = run(&p, &SimConfig::default()).unwrap();
    let off = run(&p, &SimConfig { prefetch_enabled: false, ..SimConfig::default() }).unwrap();
    assert_eq!(on.path, SolvePath::Sa);
    assert!(on.stats.overflow && on.stats.total_lines > on.stats.capacity_lines);
    let (fon, foff) = (on.stats.fill.as_ref().unwrap(), off.stats.fill.as_ref().unwrap());
    assert!(foff.stall_cycles > 0);
    assert!(on.ledger.cycles_in(Phase::FillStall) <= off.ledger.cycles_in(Phase::FillStall));
    assert!(on.ledger.total_cycles <= off.ledger.total_cycles);
    assert!(fon.prefetch_fills > 0);
    assert_eq!(foff.prefetch_fills, 0);
    assert_eq!(on.solution, off.solution);
    assert!(on.trace.iter().any(|s| s.engine == Engine::Fill));
}

#[test]
fn resident_instance_has_no_fill_phase() {
    let r = run(&dense_family(1), &SimConfig::default()).unwrap();
    assert!(!r.stats.overflow);
    assert!(r.stats.fill.is_none());
    assert_eq!(r.ledger.cycles_in(Phase::FillStall), 0);
}

#[test]
fn engines_never_overlap() {
    let cfgs = [
        SimConfig::default(),
        SimConfig { verify_sa: true, ..SimConfig::default() },
        SimConfig { sa_enabled: false, ..SimConfig::default() },
    ];
    for s in 0..30 {
        for p in [dense_family(s), cardinality_family(s)] {
            for cfg in &cfgs {
                let r = run(&p, cfg).unwrap();
                let sa: Vec<_> = r.trace.iter().filter(|t| t.engine == Engine::Sa).collect();
                let dense: Vec<_> = r.trace.iter().filter(|t| matches!(t.engine, Engine::Sle | Engine::Bnb)).collect();
                for a in &sa {
                    assert!(dense.iter().all(|d| !overlaps(a, d)), "seed {s}: {:?}", r.trace);
                }
                // only the fallback and verify paths run both
                if !sa.is_empty() && !dense.is_empty() {
                    assert!(matches!(r.path, SolvePath::SaFallback | SolvePath::SaVerified));
                }
            }
        }
    }
}

#[test]
fn zero_row_with_negative_rhs_stops_after_fetch() {
    let p = IlpProblem::new(
        Sense::Max,
        vec![1, 1],
        vec![Constraint::new(vec![1, 1], 4), Constraint::new(vec![0, 0], -1)],
        true,
    )
    .unwrap();
    let r = run(&p, &SimConfig::default()).unwrap();
    assert_eq!(r.path, SolvePath::FcOnly);
    assert_eq!(r.solution.status, Status::Infeasible);
    assert_eq!(r.trace.iter().map(|s| s.engine).collect::<Vec<_>>(), vec![Engine::Fc]);
    assert_eq!(r.ledger.events_of(EventKind::MacOp), 0);
}

#[test]
fn datapath_options_leave_answers_alone() {
    let variants = [
        SimConfig { bit_accurate: true, ..SimConfig::default() },
        SimConfig { approx_div_enabled: false, ..SimConfig::default() },
        SimConfig { serial_pim: true, ..SimConfig::default() },
        SimConfig { prefetch_enabled: false, ..SimConfig::default() },
    ];
    for s in 0..25 {
        let p = dense_family(s);
        let base = run(&p, &SimConfig { sa_enabled: false, ..SimConfig::default() }).unwrap();
        for v in &variants {
            let r = run(&p, &SimConfig { sa_enabled: false, ..v.clone() }).unwrap();
            assert_eq!(r.solution, base.solution, "seed {s}");
        }
    }
}

#[test]
fn oracle_flag_reports_match() {
    let cfg = SimConfig { verify_with_oracle: true, sa_enabled: false, ..SimConfig::default() };
    for s in 0..10 {
        let r = run(&dense_family(s), &cfg).unwrap();
        assert_eq!(r.stats.oracle, Some(sim::OracleCheck::Match), "seed {s}");
    }
    let truth = oracle::brute_force(&dense_family(3)).unwrap();
    assert_eq!(sim::oracle_check(&dense_family(3), &truth), sim::OracleCheck::Match);
}

#[test]
fn lp_instances_skip_branching() {
    let mut p = dense_family(7);
    p.integral = false;
    let r = run(&p, &SimConfig::default()).unwrap();
    assert!(r.stats.bnb.is_none());
    assert_eq!(r.ledger.cycles_in(Phase::Bnb), 0);
}

#[test]
fn matrix_isolates_failures_and_keeps_order() {
    // the dense engines refuse a 120-variable relaxation
    let big = gen_instance(&InstanceKind::Investment { n: 120 }, 1).unwrap();
    let problems = vec![
        ("a".to_string(), dense_family(0)),
        ("big".to_string(), big),
        ("c".to_string(), cardinality_family(2)),
    ];
    let configs = vec![
        ("dense".to_string(), SimConfig { sa_enabled: false, ..SimConfig::default() }),
        ("full".to_string(), SimConfig::default()),
    ];
    let rows = sim::run_matrix(&problems, &configs);
    let order: Vec<(&str, &str)> = rows.iter().map(|r| (r.instance.as_str(), r.config.as_str())).collect();
    assert_eq!(order, [("a", "dense"), ("a", "full"), ("big", "dense"), ("big", "full"), ("c", "dense"), ("c", "full")]);
    assert!(rows[2].result.as_ref().is_err_and(|e| e.contains("limit")));
    assert!(rows.iter().enumerate().filter(|(i, _)| *i != 2 && *i != 3).all(|(_, r)| r.result.is_ok()));
    let csv = sim::matrix_csv(&rows, SimConfig::default().cost.l2_cycles());
    assert_eq!(csv.lines().count(), 1 + rows.len());
    assert!(csv.lines().nth(3).unwrap().contains("limit"));
    assert!(sim::run_matrix(&[], &configs).is_empty());
}

#[test]
fn verdict_follows_coverage() {
    for s in 0..20 {
        let r = run(&cardinality_family(s), &SimConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Sparse);
        assert!(matches!(r.path, SolvePath::Sa | SolvePath::SaFallback));
    }
    let r = run(&gen_instance(&InstanceKind::Transportation { sources: 2, dests: 3 }, 4).unwrap(), &SimConfig::default())
        .unwrap();
    assert_eq!(r.verdict, Verdict::Dense);
    assert_eq!(r.path, SolvePath::Dense);
}
