//! Optimal event-triggered scheduling for finite-horizon LQG control.
//!
//! A sensor decides at every step whether to transmit its measurement to the
//! controller at a price `lambda`. Under certainty-equivalent control the
//! remaining cost of a transmission pattern reduces to precomputable kernels,
//! which turns each decision window into a small binary program. The crate
//! provides the Riccati gains, the kernels, an MILP formulation, three exact
//! solvers, one-step certificates, a closed-loop simulator and Monte Carlo
//! tooling.

pub mod certificates;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod kernels;
pub mod linalg;
pub mod milp;
pub mod model;
pub mod riccati;
pub mod simulate;
pub mod solver;

pub use certificates::{certify_step, evaluate_certificate, CertificateDecision, Verdict};
pub use error::{Error, Result};
pub use kernels::{build_all_kernels, build_noise_kernels, BoundKernels, KernelTable};
pub use milp::{build_milp, cost_matrix_recursion, cost_unfolded, MilpProblem, ScheduleVector};
pub use model::SystemModel;
pub use riccati::{solve_gains, GainSchedule};
pub use simulate::{run_episode, SchedulerPolicy, SimTrace, Simulator};
pub use solver::{solve, SolveResult, SolverKind};
