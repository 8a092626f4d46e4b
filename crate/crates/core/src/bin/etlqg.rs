//! Command-line front-end.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical or validation error,
//! 3 property violation. Failures are reported on stderr as
//! `ERROR[<code>]: <message>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use etlqg::certificates::{certificate_soundness_check, certify_step};
use etlqg::experiments::{
    bench_solvers, monte_carlo, sweep, validate_dominance, write_bench_csv, write_manifest, write_sweep_csv,
    BenchConfig, ExperimentConfig,
};
use etlqg::instances::{random_window, rng};
use etlqg::kernels::build_noise_kernels;
use etlqg::simulate::{SchedulerPolicy, Simulator};
use etlqg::solver::{cross_validate, solve, SolverKind};
use etlqg::{solve_gains, Error, Result, SystemModel};

#[derive(Parser)]
#[command(name = "etlqg", version, about = "Optimal event-triggered scheduling for finite-horizon LQG control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scheduling window starting at step k for a given error.
    Solve(SolveArgs),
    /// Evaluate the one-step send/skip certificates.
    Certify(CertifyArgs),
    /// Simulate one closed-loop episode and write its trace.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of scheduling policies on paired seeds.
    Montecarlo(MonteCarloArgs),
    /// Monte Carlo over a (lambda, sigma) grid.
    Sweep(SweepArgs),
    /// Time the solvers across state dimensions.
    Bench(BenchArgs),
    /// Cross-check solvers and certificates on built-in random instances.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Scheduler error at step k, comma separated.
    #[arg(long = "e0", visible_alias = "e", allow_hyphen_values = true)]
    e0: String,
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Overrides the model's lambda.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value = "dp")]
    solver: SolverKind,
    /// Run all three solvers and require agreement.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Scheduler error at step k, comma separated.
    #[arg(long = "e", visible_alias = "e0", allow_hyphen_values = true)]
    e: String,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long)]
    lambda: Option<f64>,
    /// Also verify the verdict by enumerating the window.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value = "mpc")]
    policy: SchedulerPolicy,
    /// Defaults to the model's seed, or 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "dp")]
    solver: SolverKind,
    /// Trace CSV path; the trace goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 1000)]
    seeds: usize,
    /// First seed; defaults to the model's seed, or 0.
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "mpc,offline,continuous,openloop")]
    policies: Vec<SchedulerPolicy>,
    /// Periodic baselines to add, comma separated.
    #[arg(long, value_delimiter = ',')]
    periods: Vec<usize>,
    #[arg(long, default_value = "dp")]
    solver: SolverKind,
    /// Also check that MPC is no worse than Offline and every periodic
    /// baseline on paired seeds (periods default to 1..=T).
    #[arg(long)]
    check: bool,
    /// Output directory for summary.csv, per_seed.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long)]
    base_seed: Option<u64>,
    /// `a:b:step` or a comma separated list; defaults to the model's lambda.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// `a:b:step` or a comma separated list of sigma with `Sigma_w = sigma I`.
    #[arg(long)]
    sigma_grid: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "mpc,offline")]
    policies: Vec<SchedulerPolicy>,
    #[arg(long, default_value = "dp")]
    solver: SolverKind,
    /// Output directory for sweep.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,8,16,32")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 9)]
    horizon: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Trials of the naive recursion enumeration per dimension.
    #[arg(long, default_value_t = 5)]
    naive_trials: usize,
    /// Timed repetitions per solve; the minimum is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

fn load_model(arg: &ModelArg) -> Result<SystemModel> {
    SystemModel::from_json_file(&arg.model)
}

fn parse_vector(s: &str, n: usize) -> Result<DVector<f64>> {
    let values = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("'{t}' is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "error vector has {} entries, state dimension is {n}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("error vector must be finite".into()));
    }
    Ok(DVector::from_vec(values))
}

/// Parses `a:b:step` (inclusive of `b` up to rounding) or a comma list.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("bad grid '{s}' (expected a:b:step or a comma list)"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && b >= a) {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| a + i as f64 * step).collect())
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
    }
}

fn theta_string(skip: &[bool]) -> String {
    skip.iter().map(|s| if *s { "0" } else { "1" }).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let lambda = a.lambda.unwrap_or(model.lambda);
    let model = model.with_lambda(lambda).validate()?;
    let e = parse_vector(&a.e0, model.state_dim())?;
    let gains = solve_gains(&model)?;
    let mut out = io::stdout().lock();
    if a.check {
        let cv = cross_validate(&model, &gains, a.k, &e, lambda)?;
        writeln!(out, "window: k = {}, length = {}, lambda = {lambda}", a.k, cv.dp.schedule.len())?;
        for (r, rec) in cv.results().iter().zip(cv.recursion_costs) {
            writeln!(
                out,
                "{:>5}: schedule ({}) theta [{}] objective {} recursion {} nodes {}",
                r.solver.name(),
                r.schedule.to_string().replace(' ', ", "),
                theta_string(&r.schedule.skip),
                r.objective,
                rec,
                r.nodes_explored
            )?;
        }
        writeln!(out, "agree: true")?;
        return Ok(());
    }
    let bound = build_noise_kernels(&gains, &model, a.k)?.bind_error(&e)?;
    let start = Instant::now();
    let r = solve(&bound, lambda, a.solver)?;
    let elapsed = start.elapsed().as_secs_f64();
    writeln!(out, "window: k = {}, length = {}, lambda = {lambda}", a.k, r.schedule.len())?;
    writeln!(out, "schedule: ({})", r.schedule.to_string().replace(' ', ", "))?;
    writeln!(out, "theta: [{}]", theta_string(&r.schedule.skip))?;
    writeln!(out, "objective: {}", r.objective)?;
    writeln!(out, "transmissions: {}", r.schedule.sends())?;
    writeln!(out, "solver: {}, nodes explored: {}", r.solver.name(), r.nodes_explored)?;
    eprintln!("solve time: {elapsed:.3e} s");
    Ok(())
}

fn cmd_certify(a: CertifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let lambda = a.lambda.unwrap_or(model.lambda);
    let model = model.with_lambda(lambda).validate()?;
    let e = parse_vector(&a.e, model.state_dim())?;
    let gains = solve_gains(&model)?;
    let d = certify_step(&gains, a.k, &e, lambda)?;
    let mut out = io::stdout().lock();
    writeln!(out, "verdict: {}", d.verdict.name())?;
    writeln!(out, "lower: {}", d.lower)?;
    writeln!(out, "upper: {}", d.upper)?;
    if a.check {
        let s = certificate_soundness_check(&model, &gains, a.k, &e, lambda)?;
        writeln!(out, "best send: {}", s.best_send)?;
        writeln!(out, "best skip: {}", s.best_skip)?;
        writeln!(out, "sound: true")?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?.validate()?;
    let seed = a.seed.or(model.seed).unwrap_or(0);
    let gains = solve_gains(&model)?;
    let sim = Simulator::new(model, gains)?;
    let trace = sim.run(&a.policy.with_solver(a.solver), seed)?;
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            trace.write_csv(fs::File::create(path)?)?;
            println!(
                "policy: {}, seed: {seed}, cost: {}, transmissions: {}, solver calls: {}",
                trace.policy, trace.realized_cost, trace.comm_count, trace.solver_calls
            );
        }
        None => trace.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn experiment_config(
    model: SystemModel,
    policies: Vec<SchedulerPolicy>,
    solver: SolverKind,
    seeds: usize,
    base_seed: Option<u64>,
) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(model);
    config.policies = policies.into_iter().map(|p| p.with_solver(solver)).collect();
    config.seeds = seeds;
    if let Some(b) = base_seed {
        config.base_seed = b;
    }
    config
}

fn cmd_montecarlo(a: MonteCarloArgs) -> Result<()> {
    let model = load_model(&a.model)?.validate()?;
    let mut policies = a.policies.clone();
    for &p in &a.periods {
        if p == 0 {
            return Err(Error::InvalidConfig("periods must be at least 1".into()));
        }
        let policy = SchedulerPolicy::Periodic { period: p };
        if !policies.contains(&policy) {
            policies.push(policy);
        }
    }
    let mut config = experiment_config(model, policies, a.solver, a.seeds, a.base_seed);
    if !a.periods.is_empty() {
        config.periods = a.periods.clone();
    }
    config.validate()?;
    let mc = monte_carlo(&config)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{:<14} {:>14} {:>10} {:>12} {:>6}", "strategy", "cost", "comm_avg", "se_cost", "N")?;
    for r in &mc.summary {
        writeln!(
            out,
            "{:<14} {:>14.4} {:>10.3} {:>12.4} {:>6}",
            r.policy, r.mean_cost, r.mean_comms, r.se_cost, r.n
        )?;
    }
    if let Some(dir) = &a.out {
        mc.write_dir(dir, &config)?;
    }
    if a.check {
        let report = validate_dominance(&config)?;
        write!(out, "{report}")?;
        writeln!(out, "{}", report.summary())?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let model = load_model(&a.model)?.validate()?;
    let n = model.state_dim();
    let lambda_grid = match &a.lambda_grid {
        Some(s) => parse_grid(s)?,
        None => vec![model.lambda],
    };
    let sigma_grid = match &a.sigma_grid {
        Some(s) => parse_grid(s)?,
        None => {
            let base = model.sigma_w[(0, 0)];
            if model.sigma_w != DMatrix::identity(n, n) * base {
                return Err(Error::InvalidConfig(
                    "model noise is not a multiple of the identity; pass --sigma-grid".into(),
                ));
            }
            vec![base]
        }
    };
    let mut config = experiment_config(model, a.policies, a.solver, a.seeds, a.base_seed);
    config.lambda_grid = lambda_grid;
    config.sigma_grid = sigma_grid;
    config.validate()?;
    let rows = sweep(&config)?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_sweep_csv(&rows, fs::File::create(dir.join("sweep.csv"))?)?;
            write_manifest(dir, "sweep", &config)?;
            println!("wrote {} rows to {}", rows.len(), dir.join("sweep.csv").display());
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        ns: a.ns,
        horizon: a.horizon,
        trials: a.trials,
        seed: a.seed,
        naive_trials: a.naive_trials,
        repeats: a.repeats,
    };
    if config.ns.contains(&0) {
        return Err(Error::InvalidConfig("state dimensions must be at least 1".into()));
    }
    let rows = bench_solvers(&config)?;
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            write_bench_csv(&rows, fs::File::create(path)?)?;
        }
        None => write_bench_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<()> {
    if a.instances == 0 {
        return Err(Error::InvalidConfig("instance count must be at least 1".into()));
    }
    let mut r = rng(a.seed);
    let mut verdicts = [0usize; 3];
    for i in 0..a.instances {
        let n = 1 + i % 4;
        let window = 1 + (i / 4) % 12;
        let inst = random_window(&mut r, n, window)?;
        cross_validate(&inst.model, &inst.gains, inst.k, &inst.e_s, inst.lambda)?;
        let s = certificate_soundness_check(&inst.model, &inst.gains, inst.k, &inst.e_s, inst.lambda)?;
        verdicts[s.decision.verdict as usize] += 1;
    }
    println!(
        "selftest passed: {} instances, solvers agree; certificates sound (send {}, skip {}, indeterminate {})",
        a.instances, verdicts[0], verdicts[1], verdicts[2]
    );
    Ok(())
}
