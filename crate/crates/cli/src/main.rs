//! `spark-sim`: solve, generate, verify and benchmark ILP instances on the
//! near-cache accelerator model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use spark_core::generate::{gen_instance, InstanceKind};
use spark_core::sim::{self, MatrixRow, SimConfig};
use spark_core::verify::{self, Tally};
use spark_core::{oracle, parse_problem, to_json, Error, Status};

const EXIT_USAGE: u8 = 1;
const EXIT_MISMATCH: u8 = 2;
const EXIT_CAP: u8 = 3;

#[derive(Parser)]
#[command(name = "spark-sim", version, about = "Near-L1 ILP accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one instance (JSON or MPS) and report cycles and energy.
    Solve {
        path: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
        /// Print the run as a CSV row (with header).
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a seeded instance as JSON.
    Gen {
        /// transportation | investment | random
        kind: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sources: Option<usize>,
        #[arg(long)]
        dests: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare engine answers against the exhaustive oracle.
    Verify {
        /// Instance file; the bundled dense suite when absent.
        path: Option<PathBuf>,
        /// Instances in the bundled suite.
        #[arg(long, default_value_t = 200)]
        count: u64,
        /// Largest box the oracle will enumerate.
        #[arg(long, default_value_t = oracle::BOX_CAP)]
        box_cap: u128,
        #[arg(long, hide = true)]
        corrupt_incumbent: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run an instance x config matrix from a TOML spec and emit CSV.
    Bench {
        spec: PathBuf,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Plain-text `key = value` config file.
    #[arg(long, env = "SPARK_SIM_CONFIG")]
    config: Option<PathBuf>,
    /// Force the dense path on sparse instances.
    #[arg(long)]
    no_sa: bool,
    #[arg(long)]
    no_prefetch: bool,
    /// Cap the array at one MAC per cycle.
    #[arg(long)]
    serial_pim: bool,
    /// Use the exact divider in Jacobi.
    #[arg(long)]
    exact_div: bool,
    /// Also solve sparse instances densely and keep the better answer.
    #[arg(long)]
    verify_sa: bool,
    /// Check the answer against the oracle.
    #[arg(long)]
    oracle: bool,
    /// Walk stored bit cells on every dot product.
    #[arg(long)]
    bit_accurate: bool,
    /// Report NotConverged instead of solving a stuck vertex directly.
    #[arg(long)]
    no_direct_fallback: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    depth_cap: Option<usize>,
    #[arg(long)]
    node_cap: Option<u64>,
    /// Accepted for symmetry with `gen`; runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    fn build(&self) -> anyhow::Result<SimConfig> {
        let mut c = SimConfig::default();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            c.apply_text(&text).with_context(|| format!("in {}", p.display()))?;
        }
        c.sa_enabled &= !self.no_sa;
        c.prefetch_enabled &= !self.no_prefetch;
        c.serial_pim |= self.serial_pim;
        c.approx_div_enabled &= !self.exact_div;
        c.verify_sa |= self.verify_sa;
        c.verify_with_oracle |= self.oracle;
        c.bit_accurate |= self.bit_accurate;
        c.direct_fallback &= !self.no_direct_fallback;
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.depth_cap {
            c.depth_cap = v;
        }
        if let Some(v) = self.node_cap {
            c.node_cap = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn read_problem(path: &Path) -> anyhow::Result<spark_core::IlpProblem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problem(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Exit status of a failed run: cap errors are 3, everything else 1.
fn failure(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::CapExceeded(_)) => EXIT_CAP,
        _ => EXIT_USAGE,
    }
}

fn capped(r: &spark_core::SimReport) -> bool {
    r.solution.status == Status::NotConverged || r.stats.bnb.as_ref().is_some_and(|b| b.node_cap_hit)
}

fn solve(path: &Path, json: bool, csv: bool, cfg: &ConfigArgs) -> anyhow::Result<u8> {
    let problem = read_problem(path)?;
    let cfg = cfg.build()?;
    let report = sim::run(&problem, &cfg)?;
    if json {
        println!("{}", report.to_json());
    } else if csv {
        let row = MatrixRow { instance: path.display().to_string(), config: "cli".into(), result: Ok(report.clone()) };
        print!("{}", sim::matrix_csv(&[row], cfg.cost.l2_cycles()));
    } else {
        print!("{}", sim::summary(&report));
    }
    if matches!(report.stats.oracle, Some(sim::OracleCheck::Mismatch { .. })) {
        return Ok(EXIT_MISMATCH);
    }
    Ok(if capped(&report) { EXIT_CAP } else { 0 })
}

#[allow(clippy::too_many_arguments)]
fn gen(
    kind: &str,
    n: Option<usize>,
    m: Option<usize>,
    sources: Option<usize>,
    dests: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> anyhow::Result<u8> {
    let k = match kind {
        "transportation" => InstanceKind::Transportation { sources: sources.unwrap_or(2), dests: dests.unwrap_or(3) },
        "investment" => InstanceKind::Investment { n: n.unwrap_or(4) },
        "random" => InstanceKind::RandomDense { n: n.unwrap_or(3), m: m.unwrap_or(3) },
        other => bail!("unknown instance kind `{other}` (transportation, investment, random)"),
    };
    let text = to_json(&gen_instance(&k, seed)?);
    match out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn verify_cmd(path: Option<&Path>, count: u64, box_cap: u128, corrupt: bool, cfg: &ConfigArgs) -> anyhow::Result<u8> {
    let cfg = cfg.build()?;
    let rows = match path {
        Some(p) => vec![verify::verify_instance(&p.display().to_string(), &read_problem(p)?, &cfg, corrupt, box_cap)],
        None => verify::verify_suite(count, &cfg, corrupt, box_cap),
    };
    print!("{}", verify::format_table(&rows));
    let Tally { fail, not_converged, .. } = verify::tally(&rows);
    Ok(if fail > 0 {
        EXIT_MISMATCH
    } else if not_converged > 0 && path.is_some() {
        EXIT_CAP
    } else {
        0
    })
}

fn bench(spec: &Path, csv_out: Option<&Path>, cfg: &ConfigArgs) -> anyhow::Result<u8> {
    let base = cfg.build()?;
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let dir = spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let (problems, configs) = sim::parse_matrix(&text, &base, |p| {
        fs::read_to_string(dir.join(p)).map_err(|e| Error::InvalidParams(format!("{p}: {e}")))
    })
    .with_context(|| format!("in {}", spec.display()))?;
    let rows = sim::run_matrix(&problems, &configs);
    let csv = sim::matrix_csv(&rows, base.cost.l2_cycles());
    match csv_out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    for r in &rows {
        if let Err(e) = &r.result {
            eprintln!("{} / {}: {e}", r.instance, r.config);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Solve { path, json, csv, cfg } => solve(path, *json, *csv, cfg),
        Cmd::Gen { kind, n, m, sources, dests, seed, out } => gen(kind, *n, *m, *sources, *dests, *seed, out.as_deref()),
        Cmd::Verify { path, count, box_cap, corrupt_incumbent, cfg } => {
            verify_cmd(path.as_deref(), *count, *box_cap, *corrupt_incumbent, cfg)
        }
        Cmd::Bench { spec, csv, cfg } => bench(spec, csv.as_deref(), cfg),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure(&e))
        }
    }
}
