//! Acceptance gates. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gate fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spark_core::cost::{Component, EventKind, Meter, Phase};
use spark_core::divider::{approx_divide, DivConfig};
use spark_core::generate::{self, cardinality_family, dense_family, gen_instance, InstanceKind};
use spark_core::pim::{self, CacheGeometry, XFormat};
use spark_core::relax::SolveMethod;
use spark_core::sa::{self, SaConfig};
use spark_core::sim::{self, MatrixRow, SimConfig, SolvePath};
use spark_core::sle::{self, JacobiState, PimSolveConfig, SquareSystem};
use spark_core::{detect_sparsity, oracle, IlpProblem, Rational, SimReport, Status};

struct Gate {
    failed: Vec<String>,
}

impl Gate {
    fn report(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} {id:<28} {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO {id:<28} {detail}");
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every ledger seen during the run, for the conservation gate.
#[derive(Default)]
struct Ledgers {
    seen: usize,
    broken: usize,
}

impl Ledgers {
    fn check(&mut self, r: &SimReport) {
        self.seen += 1;
        if !r.ledger.is_conserved() {
            self.broken += 1;
        }
    }
}

fn same_answer(engine: &spark_core::Solution, truth: &spark_core::Solution) -> bool {
    engine.status == truth.status && engine.objective == truth.objective
}

/// Investment problem too wide for L1 whose budget one substitution can
/// meet, so the sparse path answers it.
fn wide(n: usize, seed: u64) -> IlpProblem {
    let mut rg = rng(seed);
    let returns: Vec<i64> = (0..n).map(|_| rg.gen_range(1..=20)).collect();
    let prices: Vec<i64> = (0..n).map(|_| rg.gen_range(1..=9)).collect();
    let limits: Vec<i64> = (0..n).map(|_| rg.gen_range(1..=5)).collect();
    let full: i64 = prices.iter().zip(&limits).map(|(p, l)| p * l).sum();
    generate::investment(&returns, &prices, &limits, full - prices[0] * limits[0] / 2 - 1).unwrap()
}

fn dense_equivalence(g: &mut Gate, led: &mut Ledgers) {
    let t = Instant::now();
    // the branch-and-bound engine, also on the family's sparse members
    let cfg = SimConfig { sa_enabled: false, ..SimConfig::default() };
    let (mut ok, mut wrong, mut nc) = (0, Vec::new(), Vec::new());
    for s in 0..200u64 {
        let p = dense_family(s);
        let truth = oracle::brute_force(&p).expect("family boxes are small");
        match sim::run(&p, &cfg) {
            Ok(r) if r.solution.status == Status::NotConverged => nc.push(s),
            Ok(r) => {
                led.check(&r);
                if same_answer(&r.solution, &truth) {
                    ok += 1;
                } else {
                    wrong.push(s);
                }
            }
            Err(_) => nc.push(s),
        }
    }
    let el = t.elapsed();
    let pass = wrong.is_empty() && nc.len() * 20 < 200 && el < Duration::from_secs(120);
    g.report(
        "1 dense oracle equivalence",
        pass,
        format!("match {ok}/200, mismatch {wrong:?}, not converged {nc:?}, {:.1}s", el.as_secs_f64()),
    );
}

fn sparse_equivalence(g: &mut Gate, led: &mut Ledgers) {
    let t = Instant::now();
    let cfg = SimConfig { verify_sa: true, ..SimConfig::default() };
    let (mut sa_ok, mut no_cand, mut final_ok) = (0, 0, 0);
    let mut final_wrong = Vec::new();
    for s in 0..200u64 {
        let p = cardinality_family(s);
        let truth = oracle::brute_force(&p).expect("family boxes are small");
        let part = detect_sparsity(&p);
        assert!(part.is_sparse, "cardinality instance {s} not detected as sparse");
        let out = sa::solve_sparse(&p, &part, &SaConfig::default(), None).expect("sparse solve");
        if out.solution.status == Status::NoCandidate {
            no_cand += 1;
        }
        if same_answer(&out.solution, &truth) {
            sa_ok += 1;
        }
        let r = sim::run(&p, &cfg).expect("run");
        led.check(&r);
        if same_answer(&r.solution, &truth) {
            final_ok += 1;
        } else {
            final_wrong.push(s);
        }
    }
    let el = t.elapsed();
    let pass = sa_ok * 100 >= 95 * 200 && final_wrong.is_empty() && el < Duration::from_secs(120);
    g.report(
        "2 sparse oracle equivalence",
        pass,
        format!(
            "sa candidate exact {sa_ok}/200 ({}%), no candidate {no_cand}, final exact {final_ok}/200, {:.1}s",
            sa_ok * 100 / 200,
            el.as_secs_f64()
        ),
    );
}

fn mac_bit_exactness(g: &mut Gate) {
    let mut mismatches = 0u64;
    let mut checked = 0u64;
    // every 8-bit coefficient against every 2-bit operand, unsigned and signed
    let geo8 = CacheGeometry { word_bits: 8, ..CacheGeometry::default() };
    let coeffs: Vec<i64> = (-128..128).collect();
    let (map, state) = pim::store_coefficients(&[coeffs.clone()], &geo8).unwrap();
    for fmt in [XFormat { width: 2, signed: false }, XFormat { width: 2, signed: true }] {
        let xs: Vec<i64> = if fmt.signed { (-2..2).collect() } else { (0..4).collect() };
        for (w, &c) in coeffs.iter().enumerate() {
            for &xv in &xs {
                let mut x = vec![0; coeffs.len()];
                x[w] = xv;
                let r = pim::mac_vector(&state, &map, 0, &x, fmt).unwrap();
                let f = pim::mac_fast(&coeffs, &x, fmt, 8, geo8.x_bits).unwrap();
                checked += 1;
                if r.value != c as i128 * xv as i128 || r.discharges != f.discharges {
                    mismatches += 1;
                }
            }
        }
        // whole-row operand patterns
        let mut rg = rng(3);
        for _ in 0..2000 {
            let x: Vec<i64> = (0..coeffs.len()).map(|_| xs[rg.gen_range(0..xs.len())]).collect();
            let want: i128 = coeffs.iter().zip(&x).map(|(a, b)| *a as i128 * *b as i128).sum();
            checked += 1;
            if pim::mac_vector(&state, &map, 0, &x, fmt).unwrap().value != want {
                mismatches += 1;
            }
        }
    }
    // randomized full-width vectors on the default geometry
    let geo = CacheGeometry::default();
    let mut rg = rng(4);
    for _ in 0..100_000 {
        let n = rg.gen_range(1..=48);
        let fmt = XFormat { width: 16, signed: rg.gen_bool(0.5) };
        let row: Vec<i64> = (0..n).map(|_| rg.gen_range(-32768..32768)).collect();
        let x: Vec<i64> = (0..n)
            .map(|_| if fmt.signed { rg.gen_range(-32768..32768) } else { rg.gen_range(0..65536) })
            .collect();
        let (map, state) = pim::store_coefficients(&[row.clone()], &geo).unwrap();
        let want: i128 = row.iter().zip(&x).map(|(a, b)| *a as i128 * *b as i128).sum();
        checked += 1;
        if pim::mac_vector(&state, &map, 0, &x, fmt).unwrap().value != want {
            mismatches += 1;
        }
    }
    g.report("3 pim bit exactness", mismatches == 0, format!("{mismatches} mismatches in {checked} dot products"));
}

fn dominant_system(rg: &mut ChaCha8Rng) -> SquareSystem {
    let k = rg.gen_range(1..=8);
    let mut m = vec![vec![0i64; k]; k];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = rg.gen_range(-9..=9);
            }
        }
        let off: i64 = row.iter().map(|v| v.abs()).sum();
        row[i] = (off + rg.gen_range(1..=9)) * if rg.gen_bool(0.3) { -1 } else { 1 };
    }
    let rhs = (0..k).map(|_| Rational::from_integer(rg.gen_range(-50..=50))).collect();
    SquareSystem::from_dense(m, rhs).unwrap()
}

fn jacobi_convergence(g: &mut Gate) {
    const EPS: f64 = 1e-9;
    let mut rg = rng(5);
    let (mut converged, mut within, mut order_ok) = (0, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sys = dominant_system(&mut rg);
        assert!(sys.is_diagonally_dominant());
        let exact = oracle::lp_reference_small(&sys).unwrap();
        let out = sle::solve_sle(&sys, EPS, 100_000).unwrap();
        if out.status == Status::Optimal {
            converged += 1;
        }
        let b_inf = sys.rhs_f64().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let res = oracle::residual_inf(&sys, &out.x);
        worst = worst.max(res / b_inf);
        // distance to the exact vertex, for the report
        let _ = exact;
        if res <= 10.0 * EPS * b_inf {
            within += 1;
        }
        // a shuffled update order gives bit-identical iterates
        let mut order: Vec<usize> = (0..sys.k()).collect();
        order.reverse();
        order.rotate_left(sys.k() / 2);
        let (mut a, mut b) = (JacobiState::<f64>::new(sys.k()), JacobiState::<f64>::new(sys.k()));
        let mut same = true;
        for _ in 0..50 {
            sle::jacobi_step(&mut a, &sys);
            sle::jacobi_step_ordered(&mut b, &sys, &order);
            same &= a.iter2.iter().zip(&b.iter2).all(|(p, q)| p.to_bits() == q.to_bits());
            a.commit();
            b.commit();
        }
        if same {
            order_ok += 1;
        }
    }
    g.report(
        "4 jacobi convergence",
        converged == 100 && within == 100 && order_ok == 100,
        format!(
            "converged {converged}/100, residual within 10*eps*|b| {within}/100 (worst {worst:.2e}), order invariant {order_ok}/100"
        ),
    );
}

fn divider_error(pairs: &[(i64, i64)], frac: u32, cfg: &DivConfig) -> (f64, usize) {
    let mut sum = 0.0;
    let mut wrong_sign = 0;
    for &(a, b) in pairs {
        let q = approx_divide(a, b, frac, cfg).unwrap();
        let real = a as f64 / b as f64 * (1u64 << frac) as f64;
        sum += ((q as f64 - real) / real).abs();
        if (q < 0) != (real < 0.0) || q == 0 {
            wrong_sign += 1;
        }
    }
    (sum / pairs.len() as f64, wrong_sign)
}

fn approximate_divider(g: &mut Gate) {
    let mut rg = rng(6);
    let sign = |rg: &mut ChaCha8Rng| if rg.gen_bool(0.5) { -1 } else { 1 };
    // |a| >= |b| keeps every quotient at least 2^16 grid units
    let pairs: Vec<(i64, i64)> = (0..100_000)
        .map(|_| (sign(&mut rg) * rg.gen_range(1 << 10..1 << 20), sign(&mut rg) * rg.gen_range(1..1 << 10)))
        .collect();
    let (e8, s8) = divider_error(&pairs, 16, &DivConfig::new(8).unwrap());
    let (e12, s12) = divider_error(&pairs, 16, &DivConfig::new(12).unwrap());
    g.report(
        "5 approximate divider",
        e8 <= 0.01 && s8 == 0 && s12 == 0 && e12 <= e8,
        format!("mean rel err m=8 {:.4}%, m=12 {:.4}%, sign errors {}", e8 * 100.0, e12 * 100.0, s8 + s12),
    );
    // operands the bundled dense family actually presents: rhs over coefficient
    let mut fam = Vec::new();
    for s in 0..200 {
        let p = dense_family(s);
        for c in &p.constraints {
            for (_, v) in c.nonzeros() {
                if c.rhs != 0 {
                    fam.push((c.rhs << 8, v << 8));
                }
            }
        }
    }
    let (ef, _) = divider_error(&fam, 8, &DivConfig::default());
    g.info("divider on bundled family", format!("mean rel err {:.3}% over {} quotients", ef * 100.0, fam.len()));
}

fn ledger_hand_check(g: &mut Gate, led: &Ledgers) {
    // 4x + y = 9, x + 3y = 7 from x0 = (1, 1), one fixed-point step
    let sys = SquareSystem::from_dense(vec![vec![4, 1], vec![1, 3]], vec![Rational::from_integer(9), Rational::from_integer(7)])
        .unwrap();
    let cfg = PimSolveConfig { max_iters: 1, ..PimSolveConfig::default() };
    let one = 1i64 << cfg.frac_bits;
    let mut m = Meter::new(Default::default(), cfg.geometry.cols, false);
    m.set_phase(Phase::Sle);
    m.record_fill_burst(EventKind::LineFillL2, 1);
    sle::solve_sle_pim(&sys, &cfg, Some(&[one, one]), Some(&mut m)).unwrap();
    let l = m.ledger();
    // hand enumeration with 1 pJ/bit, 0.02 pJ per discharge, 0.15 pJ per divide
    //   line fill    64 B * 8 bit * 1 pJ                 = 512.00
    //   discharges   coeff 1 (one set bit) x 1.0 (one set bit), twice = 2 * 0.02 = 0.04
    //   shift-add    4 products * 32 X bits * 0.01       = 1.28
    //   adder tree   2 rows * 32 X bits * 0.05           = 3.20
    //   subtract     3 per row * 2 rows * 0.05           = 0.30
    //   divide       2 * 0.15                            = 0.30
    //   queues       read + write per row, 4 * 0.1       = 0.40
    let want = [
        (Component::L2ToL1, 512.0),
        (Component::PimCompute, 0.04),
        (Component::ShiftAdd, 1.28 + 3.20),
        (Component::SubDiv, 0.30 + 0.30),
        (Component::Queues, 0.40),
        (Component::DramToL2, 0.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (c, pj) in want {
        let got = l.energy_pj(c);
        ok &= (got - pj).abs() < 0.5e-3;
        detail.push(format!("{c:?} {got:.2}"));
    }
    let total = 512.0 + 0.04 + 1.28 + 3.20 + 0.60 + 0.40;
    ok &= (l.total_energy_pj() - total).abs() < 0.5e-3 && l.is_conserved();
    ok &= l.events_of(EventKind::RblDischarge) == 2;
    g.report(
        "6 ledger conservation",
        ok && led.broken == 0 && led.seen > 0,
        format!(
            "hand check total {:.2} pJ vs {total:.2} [{}]; conserved {}/{} run ledgers",
            l.total_energy_pj(),
            detail.join(", "),
            led.seen - led.broken,
            led.seen
        ),
    );
}

/// Runs before the conservation gate so its ledgers are counted there.
fn directionals(led: &mut Ledgers) -> (bool, String) {
    let full = SimConfig::default();
    let dense = SimConfig { sa_enabled: false, ..SimConfig::default() };
    let serial = SimConfig { serial_pim: true, ..SimConfig::default() };
    let no_pf = SimConfig { prefetch_enabled: false, ..SimConfig::default() };

    // sparse instances where SA answers on its own
    let mut sparse: Vec<IlpProblem> = Vec::new();
    let mut s = 0;
    while sparse.len() < 12 {
        let p = cardinality_family(s);
        s += 1;
        if sim::run(&p, &full).unwrap().path == SolvePath::Sa {
            sparse.push(p);
        }
    }
    let mut n = 3;
    while sparse.len() < 15 {
        let p = gen_instance(&InstanceKind::Investment { n }, n as u64).unwrap();
        n += 1;
        if sim::run(&p, &full).unwrap().path == SolvePath::Sa {
            sparse.push(p);
        }
    }
    let (mut fewer, mut slower) = (0, 0);
    for p in &sparse {
        let a = sim::run(p, &full).unwrap();
        let b = sim::run(p, &dense).unwrap();
        let c = sim::run(p, &serial).unwrap();
        for r in [&a, &b, &c] {
            led.check(r);
        }
        if a.ledger.events_of(EventKind::MacOp) < b.ledger.events_of(EventKind::MacOp) {
            fewer += 1;
        }
        if c.ledger.total_cycles >= a.ledger.total_cycles {
            slower += 1;
        }
    }
    // dense instances for the serial-PIM direction too
    for s in 0..10 {
        let p = dense_family(s);
        let a = sim::run(&p, &full).unwrap();
        let c = sim::run(&p, &serial).unwrap();
        if c.ledger.total_cycles >= a.ledger.total_cycles {
            slower += 1;
        }
    }
    // L1-overflowing instances: wide investment problems
    let (mut overflowing, mut hidden) = (0, 0);
    for (i, n) in (200..400).step_by(20).enumerate() {
        let p = wide(n, i as u64);
        let on = sim::run(&p, &full).unwrap();
        let off = sim::run(&p, &no_pf).unwrap();
        led.check(&on);
        led.check(&off);
        if on.stats.overflow && on.path == SolvePath::Sa {
            overflowing += 1;
            if on.ledger.total_cycles <= off.ledger.total_cycles {
                hidden += 1;
            }
        }
    }
    let total = sparse.len();
    (
        fewer == total && slower == total + 10 && overflowing >= 10 && hidden == overflowing,
        format!(
            "sa fewer macs {fewer}/{total}, serial >= full cycles {slower}/{}, prefetch <= no-prefetch {hidden}/{overflowing} overflowing",
            total + 10
        ),
    )
}

fn determinism(g: &mut Gate) {
    let problems: Vec<(String, IlpProblem)> = (0..6)
        .map(|s| (format!("d{s}"), dense_family(s)))
        .chain((0..6).map(|s| (format!("c{s}"), cardinality_family(s))))
        .collect();
    let base = SimConfig::default();
    let configs: Vec<(String, SimConfig)> =
        sim::DEFAULT_PRESETS.iter().map(|n| (n.to_string(), sim::preset(&base, n).unwrap())).collect();
    let mut same = 0;
    let mut total = 0;
    for (_, p) in &problems {
        for (_, c) in &configs {
            total += 1;
            if sim::run(p, c).unwrap().to_json() == sim::run(p, c).unwrap().to_json() {
                same += 1;
            }
        }
    }
    let l2 = base.cost.l2_cycles();
    let csv = |rows: &[MatrixRow]| sim::matrix_csv(rows, l2);
    let a = csv(&sim::run_matrix(&problems, &configs));
    let b = csv(&sim::run_matrix(&problems, &configs));
    // one L1-overflowing run through the fill model
    let w = wide(260, 9);
    for c in [&base, &sim::preset(&base, "no-prefetch").unwrap()] {
        total += 1;
        if sim::run(&w, c).unwrap().to_json() == sim::run(&w, c).unwrap().to_json() {
            same += 1;
        }
    }
    g.report(
        "8 determinism",
        same == total && a == b,
        format!("identical reports {same}/{total}, matrix csv identical {}", a == b),
    );
}

fn informational(g: &Gate) {
    // how often plain Jacobi reaches the root vertex without the direct solve
    let cfg = SimConfig { direct_fallback: false, ..SimConfig::default() };
    let (mut nc, mut direct) = (0, 0);
    for s in 0..200 {
        match sim::run(&dense_family(s), &cfg) {
            Ok(r) if r.solution.status == Status::NotConverged => nc += 1,
            Err(_) => nc += 1,
            Ok(_) => {}
        }
        if let Ok(r) = sim::run(&dense_family(s), &SimConfig::default()) {
            if r.stats.root.as_ref().is_some_and(|x| x.method == SolveMethod::Direct) {
                direct += 1;
            }
        }
    }
    g.info(
        "jacobi-only divergence",
        format!("{nc}/200 not converged without direct fallback; {direct}/200 roots solved directly with it"),
    );
}

fn main() {
    let mut g = Gate { failed: Vec::new() };
    let mut led = Ledgers::default();
    dense_equivalence(&mut g, &mut led);
    sparse_equivalence(&mut g, &mut led);
    mac_bit_exactness(&mut g);
    jacobi_convergence(&mut g);
    approximate_divider(&mut g);
    let (dir_ok, dir) = directionals(&mut led);
    ledger_hand_check(&mut g, &led);
    g.report("7 model directionals", dir_ok, dir);
    determinism(&mut g);
    informational(&g);
    if !g.failed.is_empty() {
        println!("failed: {}", g.failed.join(", "));
        std::process::exit(1);
    }
}
