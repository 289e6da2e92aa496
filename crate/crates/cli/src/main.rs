//! Command-line front end: instance generation, solver runs, oracle
//! checks, and trace verification.
//!
//! Exit codes: 0 success, 1 solver/check failure, 2 usage error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use iddp_core::benchmarks::{self, EdParams, ReservoirParams};
use iddp_core::engine::{self, Algo, RunConfig};
use iddp_core::{format, hddp, oracle, trace};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "iddp", version, about = "Dual dynamic programming for discounted infinite-horizon stochastic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance file.
    Gen(GenArgs),
    /// Run a solver and write a trace.
    Run(RunArgs),
    /// Evaluate the truncated extensive-form oracle.
    Oracle(OracleArgs),
    /// Check a trace against the oracle and the accuracy schedule.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// chain | random | reservoir | ed
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write the one-shot extensive combined LP as an instance file (ed).
    #[arg(long)]
    emit_extensive: Option<PathBuf>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    second_scenarios: Option<usize>,
    #[arg(long)]
    reservoirs: Option<usize>,
    #[arg(long)]
    generators: Option<usize>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// eddp | eddp-fast | eddp-lu | sddp | hddp
    #[arg(long)]
    algo: String,
    #[arg(long)]
    instance: PathBuf,
    /// key=value file mirroring the flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "T")]
    t_horizon: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_reset: bool,
    #[arg(long)]
    eps_lo: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lipschitz_sum: Option<f64>,
    /// Record a rollout upper estimate each iteration.
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long, default_value_t = 64)]
    policy_horizon: usize,
    /// Leave wall_ms empty so traces compare byte-for-byte.
    #[arg(long)]
    no_timing: bool,
    /// Per-subproblem PDSA budget override (hddp).
    #[arg(long)]
    pdsa_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the cut list.
    #[arg(long)]
    cuts_out: Option<PathBuf>,
    /// Dump the saturation map cells (explorative algorithms).
    #[arg(long)]
    sat_out: Option<PathBuf>,
    /// Dump the upper-model point sets (eddp-lu).
    #[arg(long)]
    upper_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    oracle_horizon: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    oracle_horizon: usize,
    #[arg(long = "T", default_value_t = 6)]
    t_horizon: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long)]
    lipschitz_sum: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("usage error: {msg}");
    ExitCode::from(2)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Run(args) => run(args),
        Command::Oracle(args) => oracle_cmd(args),
        Command::Verify(args) => verify(args),
    }
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    match args.family.as_str() {
        "chain" => {
            std::fs::write(&args.out, format::write_instance(&benchmarks::chain_instance()))?;
        }
        "random" => {
            let inst = benchmarks::gen_small_random(args.seed);
            std::fs::write(&args.out, format::write_instance(&inst))?;
        }
        "reservoir" => {
            let mut p = ReservoirParams::default();
            if let Some(n) = args.reservoirs {
                p.num_reservoirs = n;
            }
            if let Some(n) = args.scenarios {
                p.num_scenarios = n;
            }
            if let Some(l) = args.lambda {
                p.lambda = l;
            }
            let inst = benchmarks::gen_reservoir(&p, args.seed);
            std::fs::write(&args.out, format::write_instance(&inst))?;
        }
        "ed" => {
            let mut p = EdParams::default();
            if let Some(n) = args.generators {
                p.generators = n;
            }
            if let Some(r) = args.regions {
                p.regions = r;
            }
            if let Some(n) = args.scenarios {
                p.top_scenarios = n;
            }
            if let Some(n) = args.second_scenarios {
                p.second_scenarios = n;
            }
            if let Some(l) = args.lambda {
                p.lambda = l;
            }
            let hinst = benchmarks::gen_ed(&p, args.seed);
            std::fs::write(&args.out, format::write_hierarchical(&hinst))?;
            if let Some(path) = &args.emit_extensive {
                let ext = benchmarks::ed_extensive_instance(&hinst);
                std::fs::write(path, format::write_instance(&ext))?;
            }
        }
        other => return Ok(usage(&format!("unknown family `{other}`"))),
    }
    if args.emit_extensive.is_some() && args.family != "ed" {
        return Ok(usage("--emit-extensive applies to the ed family"));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path:?}"))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let config = match &args.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let cfg_get = |key: &str| config.get(key).cloned();
    let parse_or = |key: &str, explicit: Option<String>| -> Option<String> {
        explicit.or_else(|| cfg_get(key))
    };

    let algo_name = parse_or("algo", Some(args.algo.clone())).unwrap();
    let is_hddp = algo_name == "hddp";
    let algo = if is_hddp {
        Algo::EddpFast
    } else {
        match Algo::parse(&algo_name) {
            Some(a) => a,
            None => return Ok(usage(&format!("unknown algo `{algo_name}`"))),
        }
    };

    let needs_seed = is_hddp || algo == Algo::Sddp;
    let seed = args
        .seed
        .or_else(|| cfg_get("seed").and_then(|s| s.parse().ok()));
    if needs_seed && seed.is_none() {
        return Ok(usage(&format!("--seed is mandatory for {algo_name}")));
    }

    let mut cfg = RunConfig::new(algo);
    cfg.seed = seed.unwrap_or(0);
    if let Some(v) = args.t_horizon.or_else(|| cfg_get("T").and_then(|s| s.parse().ok())) {
        cfg.t_horizon = v;
    }
    if let Some(v) = args.epsilon.or_else(|| cfg_get("epsilon").and_then(|s| s.parse().ok())) {
        cfg.epsilon = v;
    }
    if let Some(v) = args.max_iters.or_else(|| cfg_get("max_iters").and_then(|s| s.parse().ok())) {
        cfg.max_iters = v;
    }
    if let Some(v) = args.workers.or_else(|| cfg_get("workers").and_then(|s| s.parse().ok())) {
        cfg.workers = v;
    }
    cfg.no_reset = args.no_reset || cfg_get("no_reset").map(|s| s == "true" || s == "1").unwrap_or(false);
    cfg.lipschitz_sum =
        args.lipschitz_sum.or_else(|| cfg_get("lipschitz_sum").and_then(|s| s.parse().ok()));
    if let Some(r) = args.rollouts.or_else(|| cfg_get("rollouts").and_then(|s| s.parse().ok())) {
        cfg.record_policy = Some((args.policy_horizon, r));
    }
    cfg.collect_timing =
        !(args.no_timing || cfg_get("no_timing").map(|s| s == "true" || s == "1").unwrap_or(false));
    cfg.pdsa_budget_override =
        args.pdsa_iters.or_else(|| cfg_get("pdsa_iters").and_then(|s| s.parse().ok()));

    let text = std::fs::read_to_string(&args.instance)
        .with_context(|| format!("reading {:?}", args.instance))?;

    let (report, extended) = if is_hddp {
        if !format::is_hierarchical(&text) {
            return Ok(usage("hddp needs an instance with a lower level"));
        }
        let mut hinst = format::parse_hierarchical(&text)?;
        if let Some(v) = args.eps_lo.or_else(|| cfg_get("eps_lo").and_then(|s| s.parse().ok())) {
            hinst.eps_lo = v;
        }
        if let Some(v) = args.rho.or_else(|| cfg_get("rho").and_then(|s| s.parse().ok())) {
            hinst.rho = v;
        }
        (hddp::run_hddp(&hinst, &cfg)?, true)
    } else {
        let inst = format::parse_instance(&text)?;
        format::check_root_feasible(&inst)?;
        (engine::run(&inst, &cfg)?, false)
    };

    eprintln!(
        "{algo_name}: {:?} after {} iterations, lb_root = {}",
        report.status, report.iterations, report.lb_root
    );
    eprintln!(
        "accuracy schedule: eps_0 = {}, eps_{} = {}",
        report.epsilon_schedule[0],
        report.epsilon_schedule.len() - 1,
        report.epsilon_schedule.last().unwrap()
    );
    if let Some(path) = &args.out {
        std::fs::write(path, trace::trace_csv(&report.records, extended))?;
    }
    if let Some(path) = &args.cuts_out {
        let n = report.x_final.len();
        std::fs::write(path, report.lower.to_csv(n))?;
    }
    if let Some(path) = &args.sat_out {
        match &report.saturation {
            Some(map) => std::fs::write(path, map.to_csv())?,
            None => return Ok(usage("--sat-out needs an explorative algorithm")),
        }
    }
    if let Some(path) = &args.upper_out {
        match &report.upper {
            Some(upper) => std::fs::write(path, upper.to_csv())?,
            None => return Ok(usage("--upper-out needs --algo eddp-lu")),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_cmd(args: OracleArgs) -> Result<ExitCode> {
    let inst = format::load_instance(&args.instance)?;
    let (value, bound) = oracle::oracle_value(&inst, args.oracle_horizon)?;
    println!("value {value}");
    println!("error_bound {bound}");
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let inst = format::load_instance(&args.instance)?;
    let records = trace::parse_trace(&std::fs::read_to_string(&args.trace)?)?;
    let Some(last) = records.last() else {
        return Ok(usage("trace has no rows"));
    };
    let (value, bound) = oracle::oracle_value(&inst, args.oracle_horizon)?;
    let tol = 1e-6 * (1.0 + value.abs());

    let lb = last.lb_root;
    let lb_ok = lb <= value + bound + tol;
    println!(
        "check lower-bound-validity: lb_root {lb} <= oracle {value} + bound {bound}: {}",
        if lb_ok { "pass" } else { "FAIL" }
    );

    let m_h = inst.cost_lipschitz();
    let lip = args
        .lipschitz_sum
        .unwrap_or(2.0 * m_h / (1.0 - inst.lambda));
    let schedule = engine::epsilon_schedule(
        args.t_horizon,
        inst.lambda,
        m_h * inst.domain_length(),
        lip * args.epsilon,
        0.0,
    );
    let eps0 = schedule[0];
    let ub_from_trace = records
        .iter()
        .filter_map(|r| r.ub_model)
        .fold(f64::INFINITY, f64::min)
        .min(records.iter().filter_map(|r| r.ub_policy).fold(f64::INFINITY, f64::min));
    let ub = ub_from_trace.min(value + bound);
    let gap = ub - lb;
    let gap_ok = gap <= eps0 + tol;
    println!(
        "check optimality-gap: upper {ub} - lb_root {lb} = {gap} <= eps_0 {eps0}: {}",
        if gap_ok { "pass" } else { "FAIL" }
    );

    Ok(if lb_ok && gap_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
