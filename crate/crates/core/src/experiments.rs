//! Monte Carlo studies, parameter sweeps, solver timing and the paired-seed
//! check that the receding-horizon scheduler beats fixed schedules.
//!
//! Seeds fan out over the rayon pool; results are collected in seed order
//! and reduced sequentially, so outputs do not depend on thread timing.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{gaussian_vector, random_model, rng, Stability};
use crate::kernels::build_noise_kernels;
use crate::linalg::{quadratic_form_unchecked, trace_product_unchecked, MatrixWorkspace};
use crate::milp::{build_milp, cost_matrix_recursion_with, ScheduleVector};
use crate::model::SystemModel;
use crate::riccati::solve_gains;
use crate::simulate::{SchedulerPolicy, Simulator};
use crate::solver::{solve_bnb, solve_bruteforce, solve_dp};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: SystemModel,
    pub policies: Vec<SchedulerPolicy>,
    pub seeds: usize,
    pub base_seed: u64,
    pub lambda_grid: Vec<f64>,
    /// Noise scales; each grid point uses `Sigma_w = sigma * I`.
    pub sigma_grid: Vec<f64>,
    pub periods: Vec<usize>,
}

impl ExperimentConfig {
    /// Defaults: the four baseline policies, 1000 seeds starting at the
    /// model's seed (or 0), grids collapsed to the model's own values, and
    /// every period `1..=T`.
    pub fn new(model: SystemModel) -> Self {
        let sigma = model.sigma_w[(0, 0)];
        Self {
            policies: vec![
                SchedulerPolicy::MPC,
                SchedulerPolicy::OFFLINE,
                SchedulerPolicy::Continuous,
                SchedulerPolicy::OpenLoop,
            ],
            seeds: 1000,
            base_seed: model.seed.unwrap_or(0),
            lambda_grid: vec![model.lambda],
            sigma_grid: vec![sigma],
            periods: (1..=model.horizon).collect(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seed count must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("policy list is empty".into()));
        }
        if self.lambda_grid.is_empty() || self.sigma_grid.is_empty() {
            return Err(Error::InvalidConfig("parameter grids must be nonempty".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidConfig(format!("lambda grid value {l} is invalid")));
        }
        if let Some(s) = self.sigma_grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidConfig(format!("sigma grid value {s} is invalid")));
        }
        if self.periods.contains(&0) {
            return Err(Error::InvalidConfig("periods must be at least 1".into()));
        }
        self.model.clone().validate().map(|_| ())
    }

    fn seed_range(&self) -> std::ops::Range<u64> {
        self.base_seed..self.base_seed + self.seeds as u64
    }
}

/// One episode's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub policy: String,
    pub seed: u64,
    pub cost: f64,
    pub comms: usize,
    pub solver_calls: usize,
    pub certified_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: String,
    pub mean_cost: f64,
    pub mean_comms: f64,
    /// Standard error of the mean cost.
    pub se_cost: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub summary: Vec<SummaryRow>,
    /// Policy-major, seed-ascending.
    pub per_seed: Vec<SeedRecord>,
}

impl MonteCarloResult {
    pub fn row(&self, policy: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.policy == policy)
    }

    pub fn costs(&self, policy: &str) -> Vec<f64> {
        self.per_seed.iter().filter(|r| r.policy == policy).map(|r| r.cost).collect()
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["policy", "mean_cost", "mean_comms", "se_cost", "n"])?;
        for r in &self.summary {
            wtr.write_record([
                r.policy.clone(),
                r.mean_cost.to_string(),
                r.mean_comms.to_string(),
                r.se_cost.to_string(),
                r.n.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["policy", "seed", "cost", "comms", "solver_calls", "certified_steps"])?;
        for r in &self.per_seed {
            wtr.write_record([
                r.policy.clone(),
                r.seed.to_string(),
                r.cost.to_string(),
                r.comms.to_string(),
                r.solver_calls.to_string(),
                r.certified_steps.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `summary.csv`, `per_seed.csv` and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_summary_csv(fs::File::create(dir.join("summary.csv"))?)?;
        self.write_per_seed_csv(fs::File::create(dir.join("per_seed.csv"))?)?;
        write_manifest(dir, "montecarlo", config)
    }
}

/// Mean and standard error, summed in the given order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every policy on every seed; a seed's initial state and noise are
/// shared by all policies.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let model = config.model.clone().validate()?;
    let gains = solve_gains(&model)?;
    let sim = Simulator::new(model, gains)?;
    run_policies(&sim, &config.policies, config.seed_range())
}

fn run_policies(
    sim: &Simulator,
    policies: &[SchedulerPolicy],
    seeds: std::ops::Range<u64>,
) -> Result<MonteCarloResult> {
    let seeds: Vec<u64> = seeds.collect();
    let by_seed: Vec<Vec<SeedRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let noise = sim.noise(seed);
            policies
                .iter()
                .map(|p| {
                    let tr = sim.run_with_noise(p, &noise)?;
                    Ok(SeedRecord {
                        policy: tr.policy.clone(),
                        seed,
                        cost: tr.realized_cost,
                        comms: tr.comm_count,
                        solver_calls: tr.solver_calls,
                        certified_steps: tr.certified_steps(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_seed = Vec::with_capacity(seeds.len() * policies.len());
    let mut summary = Vec::with_capacity(policies.len());
    for (pi, _) in policies.iter().enumerate() {
        let records: Vec<&SeedRecord> = by_seed.iter().map(|row| &row[pi]).collect();
        let costs: Vec<f64> = records.iter().map(|r| r.cost).collect();
        let (mean_cost, se_cost) = mean_and_se(&costs);
        let mean_comms = records.iter().map(|r| r.comms as f64).sum::<f64>() / records.len() as f64;
        summary.push(SummaryRow {
            policy: records[0].policy.clone(),
            mean_cost,
            mean_comms,
            se_cost,
            n: records.len(),
        });
        per_seed.extend(records.into_iter().cloned());
    }
    Ok(MonteCarloResult { summary, per_seed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub sigma: f64,
    pub policy: String,
    pub mean_cost: f64,
    pub mean_comms: f64,
    pub n: usize,
}

/// One Monte Carlo run per `(lambda, sigma)` grid point.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let n = config.model.state_dim();
    let mut rows = Vec::new();
    for &lambda in &config.lambda_grid {
        for &sigma in &config.sigma_grid {
            let model = config
                .model
                .clone()
                .with_lambda(lambda)
                .with_sigma_w(DMatrix::identity(n, n) * sigma)
                .validate()?;
            let gains = solve_gains(&model)?;
            let sim = Simulator::new(model, gains)?;
            let mc = run_policies(&sim, &config.policies, config.seed_range())?;
            rows.extend(mc.summary.into_iter().map(|s| SweepRow {
                lambda,
                sigma,
                policy: s.policy,
                mean_cost: s.mean_cost,
                mean_comms: s.mean_comms,
                n: s.n,
            }));
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["lambda", "sigma", "policy", "mean_cost", "mean_comms", "N"])?;
    for r in rows {
        wtr.write_record([
            r.lambda.to_string(),
            r.sigma.to_string(),
            r.policy.clone(),
            r.mean_cost.to_string(),
            r.mean_comms.to_string(),
            r.n.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BenchMethod {
    /// Kernel tables plus binding the initial error.
    Precompute,
    Bnb,
    Dp,
    Brute,
    /// Enumeration priced by the covariance recursion.
    NaiveRecursion,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Precompute => "precompute",
            BenchMethod::Bnb => "bnb",
            BenchMethod::Dp => "dp",
            BenchMethod::Brute => "brute",
            BenchMethod::NaiveRecursion => "naive_recursion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: BenchMethod,
    pub trials: usize,
    /// Seconds per solve.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Seconds per schedule evaluation in the fastest trial (naive
    /// recursion only, else NaN).
    pub per_eval: f64,
    pub mean_nodes: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trials of the naive enumeration (it dominates run time at large n).
    pub naive_trials: usize,
    /// Each fast solve is timed this many times and the minimum kept.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![2, 8, 16, 32],
            horizon: 9,
            trials: 50,
            seed: 0,
            naive_trials: 5,
            repeats: 5,
        }
    }
}

/// Minimum wall time of `repeats` runs of `f`, with the last result.
fn time_min<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let v = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(v);
    }
    Ok((best, out.expect("at least one repeat")))
}

fn stats(samples: &[f64]) -> (f64, f64, f64) {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Times every solution path on random stable models of each state
/// dimension, window `[0, horizon)`. Runs single-threaded.
pub fn bench_solvers(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.trials == 0 || config.horizon == 0 || config.ns.is_empty() {
        return Err(Error::InvalidConfig("bench needs trials, horizon and dimensions".into()));
    }
    let mut rows = Vec::new();
    for &n in &config.ns {
        let mut r = rng(config.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut t_pre = Vec::new();
        let mut t_bnb = Vec::new();
        let mut t_dp = Vec::new();
        let mut t_brute = Vec::new();
        let mut t_naive = Vec::new();
        let mut nodes = Vec::new();
        for trial in 0..config.trials {
            let mut model = random_model(&mut r, n, 1, config.horizon, Stability::Stable);
            let gains = solve_gains(&model)?;
            let e_s = gaussian_vector(&mut r, n);
            let scale = trace_product_unchecked(&gains.gamma[0], &model.sigma_w)
                + quadratic_form_unchecked(e_s.as_slice(), &gains.gamma[0]);
            let lambda = scale.max(1e-9) * 10f64.powf(r.random_range(-1.0..1.0));
            model.lambda = lambda;

            let (t, bound) = time_min(config.repeats, || build_noise_kernels(&gains, &model, 0)?.bind_error(&e_s))?;
            t_pre.push(t);

            let problem = build_milp(&bound, lambda);
            let (t, res) = time_min(config.repeats, || solve_bnb(&problem, None))?;
            t_bnb.push(t);
            nodes.push(res.nodes_explored as f64);

            let (t, _) = time_min(config.repeats, || solve_dp(&bound, lambda))?;
            t_dp.push(t);

            if config.horizon <= 16 {
                let (t, _) = time_min(config.repeats, || solve_bruteforce(&bound, lambda))?;
                t_brute.push(t);
            }

            if trial < config.naive_trials && config.horizon <= 16 {
                let mut ws = MatrixWorkspace::new(n);
                let len = config.horizon;
                let start = Instant::now();
                let mut best = f64::INFINITY;
                for mask in 0..(1u64 << len) {
                    let sched = ScheduleVector::from_mask(0, len, mask);
                    best = best.min(cost_matrix_recursion_with(&mut ws, &model, &gains, 0, &e_s, &sched)?);
                }
                std::hint::black_box(best);
                t_naive.push(start.elapsed().as_secs_f64());
            }
        }
        let mean_nodes = nodes.iter().sum::<f64>() / nodes.len() as f64;
        let evals = (1u64 << config.horizon.min(63)) as f64;
        for (method, samples) in [
            (BenchMethod::Precompute, &t_pre),
            (BenchMethod::Bnb, &t_bnb),
            (BenchMethod::Dp, &t_dp),
            (BenchMethod::Brute, &t_brute),
            (BenchMethod::NaiveRecursion, &t_naive),
        ] {
            if samples.is_empty() {
                continue;
            }
            let (mean, min, max) = stats(samples);
            rows.push(BenchRow {
                n,
                method,
                trials: samples.len(),
                mean,
                min,
                max,
                per_eval: if method == BenchMethod::NaiveRecursion { min / evals } else { f64::NAN },
                mean_nodes: if method == BenchMethod::Bnb { mean_nodes } else { f64::NAN },
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["n", "method", "trials", "mean_s", "min_s", "max_s", "per_eval_s", "mean_nodes"])?;
    for r in rows {
        wtr.write_record([
            r.n.to_string(),
            r.method.name().to_string(),
            r.trials.to_string(),
            format!("{:e}", r.mean),
            format!("{:e}", r.min),
            format!("{:e}", r.max),
            format!("{:e}", r.per_eval),
            r.mean_nodes.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Paired comparison of the receding-horizon policy against one fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub policy: String,
    pub mean_cost: f64,
    pub mean_comms: f64,
    /// Mean of `cost_mpc - cost_policy` over seeds.
    pub mean_diff: f64,
    pub se_diff: f64,
    pub min_diff: f64,
    pub max_diff: f64,
    /// `mean_diff <= 2 * se_diff`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub n: usize,
    pub mpc_mean_cost: f64,
    pub mpc_mean_comms: f64,
    pub comparisons: Vec<PairedComparison>,
}

impl DominanceReport {
    pub fn holds(&self) -> bool {
        self.comparisons.iter().all(|c| c.holds)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self
            .comparisons
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.policy.as_str())
            .collect();
        if failed.is_empty() {
            format!("mpc dominates all {} fixed policies (N = {})", self.comparisons.len(), self.n)
        } else {
            format!("mpc exceeds [{}] by more than 2 paired standard errors (N = {})", failed.join(", "), self.n)
        }
    }
}

impl fmt::Display for DominanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mpc: mean cost {:.4}, mean comms {:.3}", self.mpc_mean_cost, self.mpc_mean_comms)?;
        for c in &self.comparisons {
            writeln!(
                f,
                "{:>14}: mean cost {:.4}, comms {:.3}, paired diff {:+.4} +/- {:.4} [{}]",
                c.policy,
                c.mean_cost,
                c.mean_comms,
                c.mean_diff,
                c.se_diff,
                if c.holds { "ok" } else { "VIOLATED" }
            )?;
        }
        Ok(())
    }
}

/// Compares the receding-horizon policy with `Offline` and every
/// `Periodic(p)` for `p` in the configured periods on paired seeds.
pub fn validate_dominance(config: &ExperimentConfig) -> Result<DominanceReport> {
    config.validate()?;
    let mpc = config
        .policies
        .iter()
        .find(|p| matches!(p, SchedulerPolicy::Mpc { .. }))
        .cloned()
        .unwrap_or(SchedulerPolicy::MPC);
    let mut policies = vec![mpc];
    let mut fixed: Vec<SchedulerPolicy> = config
        .policies
        .iter()
        .filter(|p| p.is_deterministic_schedule())
        .cloned()
        .collect();
    if !fixed.iter().any(|p| matches!(p, SchedulerPolicy::Offline { .. })) {
        fixed.push(SchedulerPolicy::OFFLINE);
    }
    for &period in &config.periods {
        let p = SchedulerPolicy::Periodic { period };
        if !fixed.contains(&p) {
            fixed.push(p);
        }
    }
    policies.extend(fixed);

    let model = config.model.clone().validate()?;
    let gains = solve_gains(&model)?;
    let sim = Simulator::new(model, gains)?;
    let mc = run_policies(&sim, &policies, config.seed_range())?;

    let mpc_costs = mc.costs(&policies[0].name());
    let mpc_row = &mc.summary[0];
    let comparisons = mc.summary[1..]
        .iter()
        .map(|row| {
            let diffs: Vec<f64> = mpc_costs
                .iter()
                .zip(mc.costs(&row.policy))
                .map(|(a, b)| a - b)
                .collect();
            let (mean_diff, se_diff) = mean_and_se(&diffs);
            PairedComparison {
                policy: row.policy.clone(),
                mean_cost: row.mean_cost,
                mean_comms: row.mean_comms,
                mean_diff,
                se_diff,
                min_diff: diffs.iter().copied().fold(f64::INFINITY, f64::min),
                max_diff: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                holds: mean_diff <= 2.0 * se_diff,
            }
        })
        .collect();
    let report = DominanceReport {
        n: mpc_costs.len(),
        mpc_mean_cost: mpc_row.mean_cost,
        mpc_mean_comms: mpc_row.mean_comms,
        comparisons,
    };
    if report.holds() {
        Ok(report)
    } else {
        Err(Error::StatisticalViolation(Box::new(report)))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    model: serde_json::Value,
    policies: Vec<String>,
    seed_start: u64,
    seed_end_exclusive: u64,
    lambda_grid: &'a [f64],
    sigma_grid: &'a [f64],
    periods: &'a [usize],
    rng: &'a str,
}

/// Records the configuration of a run next to its CSV outputs.
pub fn write_manifest(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<()> {
    let range = config.seed_range();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        model: serde_json::from_str(&config.model.to_json_string()?)?,
        policies: config.policies.iter().map(SchedulerPolicy::name).collect(),
        seed_start: range.start,
        seed_end_exclusive: range.end,
        lambda_grid: &config.lambda_grid,
        sigma_grid: &config.sigma_grid,
        periods: &config.periods,
        rng: "ChaCha20 seed_from_u64 (rand_chacha 0.9.0), StandardNormal (rand_distr 0.5.1)",
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seeds: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(SystemModel::double_integrator(0.1, 0.5, 100.0, 25));
        c.seeds = seeds;
        c
    }

    #[test]
    fn baseline_comm_counts_are_exact() {
        let mc = monte_carlo(&small_config(20)).unwrap();
        assert_eq!(mc.row("continuous").unwrap().mean_comms, 25.0);
        assert_eq!(mc.row("openloop").unwrap().mean_comms, 0.0);
        for r in &mc.summary {
            assert!((0.0..=25.0).contains(&r.mean_comms));
            assert_eq!(r.n, 20);
        }
    }

    #[test]
    fn summary_means_recompute_from_per_seed_csv() {
        let mc = monte_carlo(&small_config(15)).unwrap();
        let mut buf = Vec::new();
        mc.write_per_seed_csv(&mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let mut sums = std::collections::BTreeMap::<String, (f64, usize)>::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let e = sums.entry(rec[0].to_string()).or_default();
            e.0 += rec[2].parse::<f64>().unwrap();
            e.1 += 1;
        }
        for row in &mc.summary {
            let (s, n) = sums[&row.policy];
            assert!((s / n as f64 - row.mean_cost).abs() <= 1e-9 * row.mean_cost.abs());
        }
    }

    #[test]
    fn deterministic_lqr_cost_without_noise() {
        let mut model = SystemModel::double_integrator(0.1, 0.0, 100.0, 25);
        model.x0_cov = DMatrix::zeros(2, 2);
        model.x0_mean = nalgebra::dvector![1.0, -0.5];
        let mut c = ExperimentConfig::new(model.clone());
        c.seeds = 1;
        c.policies = vec![SchedulerPolicy::OpenLoop];
        let mc = monte_carlo(&c).unwrap();
        let gains = solve_gains(&model).unwrap();
        let lqr = quadratic_form_unchecked(model.x0_mean.as_slice(), &gains.p[0]);
        let row = mc.row("openloop").unwrap();
        assert_eq!(row.mean_comms, 0.0);
        assert!((row.mean_cost - lqr).abs() < 1e-9 * lqr);
    }

    #[test]
    fn rejects_empty_configs() {
        let mut c = small_config(0);
        assert!(monte_carlo(&c).is_err());
        c.seeds = 3;
        c.policies.clear();
        assert!(monte_carlo(&c).is_err());
    }

    #[test]
    fn noiseless_deterministic_start_mpc_equals_offline() {
        let mut model = SystemModel::double_integrator(0.1, 0.0, 0.05, 25);
        model.x0_cov = DMatrix::zeros(2, 2);
        model.x0_mean = nalgebra::dvector![2.0, 1.0];
        let mut c = ExperimentConfig::new(model);
        c.seeds = 3;
        c.periods = vec![1, 5];
        let rep = validate_dominance(&c).unwrap();
        let offline = rep.comparisons.iter().find(|c| c.policy == "offline").unwrap();
        assert_eq!(offline.mean_diff, 0.0);
    }

    #[test]
    fn free_transmission_mpc_ties_continuous() {
        let mut c = ExperimentConfig::new(SystemModel::double_integrator(0.1, 0.5, 0.0, 25));
        c.seeds = 10;
        c.policies = vec![SchedulerPolicy::MPC, SchedulerPolicy::Continuous];
        let mc = monte_carlo(&c).unwrap();
        assert_eq!(mc.costs("mpc"), mc.costs("continuous"));
        assert_eq!(mc.row("mpc").unwrap().mean_comms, 25.0);
    }

    #[test]
    fn continuous_cost_shifts_by_lambda_times_horizon() {
        let mut c = small_config(8);
        c.policies = vec![SchedulerPolicy::Continuous];
        let a = monte_carlo(&c).unwrap();
        c.model.lambda = 40.0;
        let b = monte_carlo(&c).unwrap();
        for (x, y) in a.costs("continuous").iter().zip(b.costs("continuous")) {
            assert!((x - y - 60.0 * 25.0).abs() < 1e-9 * x.abs());
        }
    }

    #[test]
    fn mean_and_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }
}
