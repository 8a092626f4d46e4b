//! Closed-loop simulation: plant, conditional-mean estimator,
//! certainty-equivalent controller and a pluggable transmission scheduler.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::certificates::{certify_step, Verdict};
use crate::error::{Error, Result};
use crate::kernels::{build_all_kernels, build_noise_kernels, KernelTable};
use crate::linalg::{cholesky_factor, quadratic_form_unchecked};
use crate::milp::ScheduleVector;
use crate::model::SystemModel;
use crate::riccati::GainSchedule;
use crate::solver::{solve, SolverKind};

/// How the one-shot offline schedule prices the initial error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OfflineMode {
    /// Uses the realized `x0 - x0_mean`.
    Realized,
    /// Uses the prior covariance `x0_cov`.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerPolicy {
    /// Receding horizon: certificates first, a window solve when they are
    /// inconclusive, apply the first decision.
    Mpc { solver: SolverKind },
    /// One full-horizon solve at `k = 0`, then followed blindly.
    Offline { mode: OfflineMode, solver: SolverKind },
    /// Transmit when `k mod period == 0`.
    Periodic { period: usize },
    /// Transmit every step.
    Continuous,
    /// Never transmit.
    OpenLoop,
    /// An arbitrary fixed schedule over `[0, T)`.
    Fixed(ScheduleVector),
}

impl SchedulerPolicy {
    pub const MPC: SchedulerPolicy = SchedulerPolicy::Mpc { solver: SolverKind::Dp };
    pub const OFFLINE: SchedulerPolicy = SchedulerPolicy::Offline {
        mode: OfflineMode::Realized,
        solver: SolverKind::Dp,
    };

    /// Short identifier used in CSV output.
    pub fn name(&self) -> String {
        match self {
            SchedulerPolicy::Mpc { .. } => "mpc".into(),
            SchedulerPolicy::Offline { mode: OfflineMode::Realized, .. } => "offline".into(),
            SchedulerPolicy::Offline { mode: OfflineMode::Prior, .. } => "offline_prior".into(),
            SchedulerPolicy::Periodic { period } => format!("periodic_{period}"),
            SchedulerPolicy::Continuous => "continuous".into(),
            SchedulerPolicy::OpenLoop => "openloop".into(),
            SchedulerPolicy::Fixed(_) => "fixed".into(),
        }
    }

    /// True for policies whose decisions ignore every realization after `k = 0`.
    pub fn is_deterministic_schedule(&self) -> bool {
        !matches!(self, SchedulerPolicy::Mpc { .. })
    }

    pub fn with_solver(self, solver: SolverKind) -> Self {
        match self {
            SchedulerPolicy::Mpc { .. } => SchedulerPolicy::Mpc { solver },
            SchedulerPolicy::Offline { mode, .. } => SchedulerPolicy::Offline { mode, solver },
            other => other,
        }
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SchedulerPolicy {
    type Err = String;

    /// Accepts `mpc`, `offline`, `offline_prior`, `continuous`, `openloop`
    /// and `periodic_<p>` (or `periodic:<p>`).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "mpc" => Ok(Self::MPC),
            "offline" => Ok(Self::OFFLINE),
            "offline_prior" => Ok(SchedulerPolicy::Offline {
                mode: OfflineMode::Prior,
                solver: SolverKind::Dp,
            }),
            "continuous" => Ok(SchedulerPolicy::Continuous),
            "openloop" | "open_loop" => Ok(SchedulerPolicy::OpenLoop),
            other => {
                let p = other
                    .strip_prefix("periodic_")
                    .or_else(|| other.strip_prefix("periodic:"))
                    .ok_or_else(|| format!("unknown policy '{other}'"))?;
                let period: usize = p.parse().map_err(|_| format!("bad period in '{other}'"))?;
                if period == 0 {
                    return Err("period must be at least 1".into());
                }
                Ok(SchedulerPolicy::Periodic { period })
            }
        }
    }
}

/// Seeded Gaussian draws for one episode.
///
/// Every sample is drawn up front in a fixed order (initial state, then
/// `w_0 .. w_{T-1}`) from ChaCha20 seeded with `seed_from_u64`, so every
/// policy sees the same realization for a given seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStream {
    pub seed: u64,
    pub x0: DVector<f64>,
    pub w: Vec<DVector<f64>>,
}

impl NoiseStream {
    pub fn new(model: &SystemModel, seed: u64) -> Result<Self> {
        let chol_x0 = cholesky_factor(&model.x0_cov)?;
        let chol_w = cholesky_factor(&model.sigma_w)?;
        Ok(Self::with_factors(model, &chol_x0, &chol_w, seed))
    }

    fn with_factors(model: &SystemModel, chol_x0: &DMatrix<f64>, chol_w: &DMatrix<f64>, seed: u64) -> Self {
        let n = model.state_dim();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha20Rng| -> DVector<f64> {
            DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
        };
        let x0 = &model.x0_mean + chol_x0 * normal(&mut rng);
        let w = (0..model.horizon).map(|_| chol_w * normal(&mut rng)).collect();
        Self { seed, x0, w }
    }
}

/// Conditional-mean estimate after the transmission decision at `k >= 1`:
/// the measurement itself when transmitted, the one-step prediction otherwise.
pub fn estimator_update(
    xhat_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    x_k: &DVector<f64>,
    transmitted: bool,
    model: &SystemModel,
) -> Result<DVector<f64>> {
    let n = model.state_dim();
    if xhat_prev.len() != n || x_k.len() != n || u_prev.len() != model.input_dim() {
        return Err(Error::DimensionMismatch("estimator inputs do not match the model".into()));
    }
    if transmitted {
        Ok(x_k.clone())
    } else {
        Ok(&model.a * xhat_prev + &model.b * u_prev)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    /// Scheduler-side error `x_k - (A xhat_{k-1} + B u_{k-1})`.
    pub es: DVector<f64>,
    /// Controller-side error `x_k - xhat_k`.
    pub e: DVector<f64>,
    pub theta: bool,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub stage_cost: f64,
    /// Certificate outcome, for the receding-horizon policy.
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub seed: u64,
    pub policy: String,
    pub steps: Vec<StepRecord>,
    pub terminal_state: DVector<f64>,
    pub terminal_cost: f64,
    pub realized_cost: f64,
    pub comm_count: usize,
    /// Window solves performed (receding-horizon and offline policies).
    pub solver_calls: usize,
}

impl SimTrace {
    /// Steps decided by a certificate without a solve.
    pub fn certified_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.verdict, Some(Verdict::Send | Verdict::Skip)))
            .count()
    }

    /// Recomputes the cost from the stored states and inputs.
    pub fn recompute_cost(&self, model: &SystemModel) -> f64 {
        let stage: f64 = self
            .steps
            .iter()
            .map(|s| {
                quadratic_form_unchecked(s.x.as_slice(), &model.q)
                    + quadratic_form_unchecked(s.u.as_slice(), &model.r)
                    + if s.theta { model.lambda } else { 0.0 }
            })
            .sum();
        stage + quadratic_form_unchecked(self.terminal_state.as_slice(), &model.qt)
    }

    /// One row per step: `k, x_*, xhat_*, es_*, theta, u_*, stage_cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let n = self.terminal_state.len();
        let m = self.steps.first().map_or(0, |s| s.u.len());
        let mut header = vec!["k".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..n).map(|i| format!("xhat_{i}")));
        header.extend((0..n).map(|i| format!("es_{i}")));
        header.push("theta".into());
        header.extend((0..m).map(|i| format!("u_{i}")));
        header.push("stage_cost".into());
        wtr.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.k.to_string()];
            row.extend(s.x.iter().map(f64::to_string));
            row.extend(s.xhat.iter().map(f64::to_string));
            row.extend(s.es.iter().map(f64::to_string));
            row.push(u8::from(s.theta).to_string());
            row.extend(s.u.iter().map(f64::to_string));
            row.push(s.stage_cost.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Solves the full-horizon window once. `x0` supplies the realized initial
/// state; without it the prior covariance is used.
pub fn offline_schedule(
    model: &SystemModel,
    gains: &GainSchedule,
    x0: Option<&DVector<f64>>,
    solver: SolverKind,
) -> Result<ScheduleVector> {
    let table = build_noise_kernels(gains, model, 0)?;
    offline_from_table(model, &table, x0, solver)
}

fn offline_from_table(
    model: &SystemModel,
    table: &KernelTable,
    x0: Option<&DVector<f64>>,
    solver: SolverKind,
) -> Result<ScheduleVector> {
    let bound = match x0 {
        Some(x0) => table.bind_error(&(x0 - &model.x0_mean))?,
        None => table.bind_covariance(&model.x0_cov)?,
    };
    Ok(solve(&bound, model.lambda, solver)?.schedule)
}

/// Model, gains and every window's kernels, shared across episodes.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: SystemModel,
    gains: GainSchedule,
    kernels: Vec<KernelTable>,
    chol_x0: DMatrix<f64>,
    chol_w: DMatrix<f64>,
}

impl Simulator {
    /// Expects a validated model and gains with tail Gramians.
    pub fn new(model: SystemModel, gains: GainSchedule) -> Result<Self> {
        if gains.horizon() != model.horizon || !gains.has_tail() {
            return Err(Error::WindowMismatch("gain schedule does not match the model horizon".into()));
        }
        let kernels = build_all_kernels(&gains, &model);
        let chol_x0 = cholesky_factor(&model.x0_cov)?;
        let chol_w = cholesky_factor(&model.sigma_w)?;
        Ok(Self {
            model,
            gains,
            kernels,
            chol_x0,
            chol_w,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn gains(&self) -> &GainSchedule {
        &self.gains
    }

    pub fn noise(&self, seed: u64) -> NoiseStream {
        NoiseStream::with_factors(&self.model, &self.chol_x0, &self.chol_w, seed)
    }

    pub fn run(&self, policy: &SchedulerPolicy, seed: u64) -> Result<SimTrace> {
        let noise = self.noise(seed);
        self.run_with_noise(policy, &noise)
    }

    pub fn run_with_noise(&self, policy: &SchedulerPolicy, noise: &NoiseStream) -> Result<SimTrace> {
        let model = &self.model;
        let horizon = model.horizon;
        if let SchedulerPolicy::Fixed(s) = policy {
            if s.k != 0 || s.len() != horizon {
                return Err(Error::WindowMismatch("fixed schedule must cover [0, T)".into()));
            }
        }

        let mut steps = Vec::with_capacity(horizon);
        let mut x = noise.x0.clone();
        let mut prediction = model.x0_mean.clone();
        let mut offline: Option<ScheduleVector> = None;
        let mut solver_calls = 0;
        let mut comm_count = 0;
        let mut total = 0.0;

        for k in 0..horizon {
            let es = &x - &prediction;
            let mut verdict = None;
            let theta = match policy {
                SchedulerPolicy::Continuous => true,
                SchedulerPolicy::OpenLoop => false,
                SchedulerPolicy::Periodic { period } => k % period == 0,
                SchedulerPolicy::Fixed(s) => !s.skip[k],
                SchedulerPolicy::Offline { mode, solver } => {
                    if offline.is_none() {
                        let x0 = matches!(mode, OfflineMode::Realized).then_some(&noise.x0);
                        offline = Some(offline_from_table(model, &self.kernels[0], x0, *solver)?);
                        solver_calls += 1;
                    }
                    !offline.as_ref().expect("set above").skip[k]
                }
                SchedulerPolicy::Mpc { solver } => {
                    let decision = certify_step(&self.gains, k, &es, model.lambda)?;
                    verdict = Some(decision.verdict);
                    match decision.verdict {
                        Verdict::Send => true,
                        Verdict::Skip => false,
                        Verdict::Indeterminate => {
                            let bound = self.kernels[k].bind_error(&es)?;
                            solver_calls += 1;
                            solve(&bound, model.lambda, *solver)?.schedule.first_is_send()
                        }
                    }
                }
            };

            let xhat = if theta { x.clone() } else { prediction.clone() };
            let e = &x - &xhat;
            let u = -(&self.gains.l[k] * &xhat);
            let stage_cost = quadratic_form_unchecked(x.as_slice(), &model.q)
                + quadratic_form_unchecked(u.as_slice(), &model.r)
                + if theta { model.lambda } else { 0.0 };
            total += stage_cost;
            comm_count += usize::from(theta);

            let w = noise.w[k].clone();
            let x_next = &model.a * &x + &model.b * &u + &w;
            prediction = &model.a * &xhat + &model.b * &u;
            steps.push(StepRecord {
                k,
                x,
                xhat,
                es,
                e,
                theta,
                u,
                w,
                stage_cost,
                verdict,
            });
            x = x_next;
        }

        let terminal_cost = quadratic_form_unchecked(x.as_slice(), &model.qt);
        Ok(SimTrace {
            seed: noise.seed,
            policy: policy.name(),
            steps,
            terminal_cost,
            realized_cost: total + terminal_cost,
            terminal_state: x,
            comm_count,
            solver_calls,
        })
    }
}

/// Convenience wrapper building a [`Simulator`] for a single episode.
pub fn run_episode(model: &SystemModel, gains: &GainSchedule, policy: &SchedulerPolicy, seed: u64) -> Result<SimTrace> {
    Simulator::new(model.clone(), gains.clone())?.run(policy, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::solve_gains;
    use nalgebra::{dmatrix, dvector};

    fn di() -> Simulator {
        let m = SystemModel::double_integrator(0.1, 0.5, 100.0, 25).validate().unwrap();
        let g = solve_gains(&m).unwrap();
        Simulator::new(m, g).unwrap()
    }

    #[test]
    fn estimator_examples() {
        let m = SystemModel::new(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], 1.0, 3);
        let x = dvector![7.0];
        assert_eq!(estimator_update(&dvector![1.0], &dvector![-0.5], &x, true, &m).unwrap(), x);
        assert_eq!(estimator_update(&dvector![1.0], &dvector![-0.5], &x, false, &m).unwrap(), dvector![1.5]);
        let m = SystemModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::identity(2, 2), dmatrix![1.0], DMatrix::identity(2, 2), 1.0, 3);
        let v = dvector![0.3, -0.2];
        assert_eq!(estimator_update(&v, &dvector![4.0], &dvector![9.0, 9.0], false, &m).unwrap(), v);
        assert!(estimator_update(&dvector![1.0], &dvector![4.0], &v, false, &m).is_err());
    }

    #[test]
    fn continuous_policy_has_no_error() {
        let sim = di();
        let tr = sim.run(&SchedulerPolicy::Continuous, 3).unwrap();
        assert_eq!(tr.comm_count, 25);
        assert!(tr.steps.iter().all(|s| s.e.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn open_loop_error_propagates() {
        let sim = di();
        let tr = sim.run(&SchedulerPolicy::OpenLoop, 4).unwrap();
        assert_eq!(tr.comm_count, 0);
        let a = &sim.model().a;
        for pair in tr.steps.windows(2) {
            let expect = a * &pair[0].e + &pair[0].w;
            assert!((&pair[1].es - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let sim = di();
        let a = sim.run(&SchedulerPolicy::MPC, 11).unwrap();
        let b = sim.run(&SchedulerPolicy::MPC, 11).unwrap();
        assert_eq!(a, b);
        let c = sim.run(&SchedulerPolicy::MPC, 12).unwrap();
        assert_ne!(a.steps[0].x, c.steps[0].x);
    }

    #[test]
    fn realized_cost_recomputes() {
        let sim = di();
        for policy in [SchedulerPolicy::MPC, SchedulerPolicy::OFFLINE, SchedulerPolicy::Periodic { period: 4 }] {
            let tr = sim.run(&policy, 5).unwrap();
            let re = tr.recompute_cost(sim.model());
            assert!((tr.realized_cost - re).abs() <= 1e-9 * re.abs().max(1.0));
        }
    }

    #[test]
    fn common_random_numbers_across_policies() {
        let sim = di();
        let a = sim.run(&SchedulerPolicy::Continuous, 21).unwrap();
        let b = sim.run(&SchedulerPolicy::OpenLoop, 21).unwrap();
        assert_eq!(a.steps[0].x, b.steps[0].x);
        for (s, t) in a.steps.iter().zip(&b.steps) {
            assert_eq!(s.w, t.w);
        }
    }

    #[test]
    fn offline_schedule_examples() {
        let m = SystemModel::double_integrator(0.1, 0.0, 10.0, 8);
        let g = solve_gains(&m).unwrap();
        let s = offline_schedule(&m, &g, Some(&m.x0_mean), SolverKind::Dp).unwrap();
        assert_eq!(s.sends(), 0);

        let m = SystemModel::double_integrator(0.1, 0.5, 0.0, 8);
        let g = solve_gains(&m).unwrap();
        let s = offline_schedule(&m, &g, Some(&dvector![1.0, 1.0]), SolverKind::Dp).unwrap();
        assert_eq!(s.sends(), 8);

        let m = SystemModel::new(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![0.5], 0.3, 2);
        let g = solve_gains(&m).unwrap();
        let s = offline_schedule(&m, &g, Some(&dvector![2.0]), SolverKind::Bnb).unwrap();
        assert_eq!(s.skip, vec![false, true]);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("mpc".parse::<SchedulerPolicy>().unwrap(), SchedulerPolicy::MPC);
        assert_eq!("periodic_3".parse::<SchedulerPolicy>().unwrap(), SchedulerPolicy::Periodic { period: 3 });
        assert_eq!("periodic:5".parse::<SchedulerPolicy>().unwrap().name(), "periodic_5");
        assert!("periodic_0".parse::<SchedulerPolicy>().is_err());
        assert!("sometimes".parse::<SchedulerPolicy>().is_err());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let sim = di();
        let tr = sim.run(&SchedulerPolicy::MPC, 1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,x_0,x_1,xhat_0,xhat_1,es_0,es_1,theta,u_0,stage_cost");
        assert_eq!(lines.count(), 25);
    }
}
