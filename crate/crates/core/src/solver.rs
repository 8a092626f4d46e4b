//! Exact solvers for one scheduling window.
//!
//! Three independent routes to the same optimum:
//!
//! * [`solve_bnb`]: depth-first branch-and-bound on the 0/1 program, branching
//!   on skips in time order. All objective coefficients are nonnegative, so
//!   the cost of a decided prefix is a valid lower bound for every completion.
//! * [`solve_dp`]: dynamic programming over the time of the latest
//!   transmission. A transmission zeroes the estimation error, so the cost of
//!   everything after it does not depend on what came before.
//! * [`solve_bruteforce`]: full enumeration, the reference oracle.
//!
//! Equal objectives (within [`OBJECTIVE_RTOL`]) are broken toward fewer
//! transmissions, then toward the lexicographically smallest skip vector.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{build_noise_kernels, BoundKernels};
use crate::milp::{build_milp, cost_matrix_recursion, unfolded_unchecked, MilpProblem, ScheduleVector};
use crate::model::SystemModel;
use crate::riccati::GainSchedule;

/// Relative tolerance for comparing objectives.
pub const OBJECTIVE_RTOL: f64 = 1e-9;

/// Absolute slack on branch-and-bound pruning.
pub const BOUND_ATOL: f64 = 1e-12;

/// Largest window the brute-force oracle accepts.
pub const MAX_BRUTE_LEN: usize = 22;

/// `|a - b| <= rtol * max(|a|, |b|)`.
pub fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    Dp,
    Bnb,
    Brute,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Dp => "dp",
            SolverKind::Bnb => "bnb",
            SolverKind::Brute => "brute",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dp" => Ok(SolverKind::Dp),
            "bnb" => Ok(SolverKind::Bnb),
            "brute" | "bruteforce" => Ok(SolverKind::Brute),
            other => Err(format!("unknown solver '{other}' (expected dp, bnb or brute)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub schedule: ScheduleVector,
    pub objective: f64,
    /// Search nodes visited; zero for solvers that do not search.
    pub nodes_explored: u64,
    /// Seconds.
    pub wall_time: f64,
}

/// Strict preference between two candidates under the tie-breaking rule.
/// Callers enumerate in lexicographic order, so keeping the incumbent on
/// a full tie realizes the lexicographic rule.
fn preferred(cost: f64, sends: usize, best_cost: f64, best_sends: usize) -> bool {
    if rel_close(cost, best_cost, OBJECTIVE_RTOL) {
        sends < best_sends
    } else {
        cost < best_cost
    }
}

/// Enumerates every schedule of the window.
pub fn solve_bruteforce(table: &BoundKernels, lambda: f64) -> Result<SolveResult> {
    let start = Instant::now();
    let len = table.len();
    if len > MAX_BRUTE_LEN {
        return Err(Error::WindowTooLarge {
            len,
            max: MAX_BRUTE_LEN,
        });
    }
    let coeff = table.coefficients();
    let mut skip = vec![false; len];
    let mut best: Option<(f64, usize, u64)> = None;
    for mask in 0..(1u64 << len) {
        for (i, s) in skip.iter_mut().enumerate() {
            *s = (mask >> (len - 1 - i)) & 1 == 1;
        }
        let cost = unfolded_unchecked(coeff, &skip, lambda);
        let sends = len - mask.count_ones() as usize;
        match best {
            Some((bc, bs, _)) if !preferred(cost, sends, bc, bs) => {}
            _ => best = Some((cost, sends, mask)),
        }
    }
    let (objective, _, mask) = best.expect("window has at least one schedule");
    Ok(SolveResult {
        solver: SolverKind::Brute,
        schedule: ScheduleVector::from_mask(table.window_start(), len, mask),
        objective,
        nodes_explored: 0,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `suffix[i][a] = sum_{j=a}^{i} coeff[i][j]`, with `suffix[i][i+1] = 0`.
///
/// This is the stage cost at `i` of a skip when the latest transmission
/// happened at `a - 1` (or never, for `a = 0`).
fn row_suffix_sums(coeff: &[Vec<f64>]) -> Vec<Vec<f64>> {
    coeff
        .iter()
        .map(|row| {
            let mut out = vec![0.0; row.len() + 1];
            for j in (0..row.len()).rev() {
                out[j] = out[j + 1] + row[j];
            }
            out
        })
        .collect()
}

/// Dynamic program over the start of the current no-transmission segment.
pub fn solve_dp(table: &BoundKernels, lambda: f64) -> Result<SolveResult> {
    let start = Instant::now();
    let len = table.len();
    let suffix = row_suffix_sums(table.coefficients());

    // value[a]: optimal cost of positions a.. given the segment starts at a.
    // next_send[a]: first transmission at or after a, or None for never.
    let mut value = vec![0.0; len + 1];
    let mut sends = vec![0usize; len + 1];
    let mut next_send: Vec<Option<usize>> = vec![None; len + 1];
    for a in (0..len).rev() {
        let mut best: Option<(f64, usize, Option<usize>)> = None;
        let mut segment = 0.0;
        for s in a..len {
            let cost = segment + lambda + value[s + 1];
            let n = 1 + sends[s + 1];
            match best {
                Some((bc, bs, _)) if !preferred(cost, n, bc, bs) => {}
                _ => best = Some((cost, n, Some(s))),
            }
            segment += suffix[s][a];
        }
        match best {
            Some((bc, bs, _)) if !preferred(segment, 0, bc, bs) => {}
            _ => best = Some((segment, 0, None)),
        }
        let (v, n, choice) = best.expect("nonempty choice set");
        value[a] = v;
        sends[a] = n;
        next_send[a] = choice;
    }

    let mut skip = vec![true; len];
    let mut a = 0;
    while a < len {
        match next_send[a] {
            Some(s) => {
                skip[s] = false;
                a = s + 1;
            }
            None => break,
        }
    }
    Ok(SolveResult {
        solver: SolverKind::Dp,
        schedule: ScheduleVector::new(table.window_start(), skip),
        objective: value[0],
        nodes_explored: 0,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn validate_problem(problem: &MilpProblem) -> Result<()> {
    let bad = |msg: String| Err(Error::MalformedProblem(msg));
    if problem.len == 0 {
        return bad("empty window".into());
    }
    if problem.c_mu.len() != problem.num_mu() || problem.c_skip.len() != problem.len {
        return bad(format!(
            "coefficient counts ({} mu, {} skip) do not match window length {}",
            problem.c_mu.len(),
            problem.c_skip.len(),
            problem.len
        ));
    }
    if !(problem.lambda.is_finite() && problem.lambda >= 0.0) {
        return bad(format!("penalty {} is not a finite nonnegative number", problem.lambda));
    }
    if let Some(c) = problem.c_mu.iter().find(|c| !c.is_finite() || **c < -BOUND_ATOL) {
        return bad(format!("mu coefficient {c} is negative or non-finite"));
    }
    if problem.c_skip.iter().any(|c| *c != -problem.lambda) {
        return bad("skip coefficients must all equal -lambda".into());
    }
    Ok(())
}

struct Search<'a> {
    suffix: &'a [Vec<f64>],
    /// `future[i]`: sum over positions `>= i` of `min(lambda, coeff[p][p])`.
    future: Vec<f64>,
    lambda: f64,
    len: usize,
    path: Vec<bool>,
    best_cost: f64,
    best: Option<Vec<bool>>,
    nodes: u64,
}

impl Search<'_> {
    /// `pos`: next undecided position; `seg`: start of the current
    /// no-transmission segment; `cost`: cost of positions `< pos`.
    fn dive(&mut self, pos: usize, seg: usize, cost: f64) {
        self.nodes += 1;
        if cost + self.future[pos] >= self.best_cost - BOUND_ATOL {
            return;
        }
        if pos == self.len {
            self.best_cost = cost;
            self.best = Some(self.path.clone());
            return;
        }
        let skip_stage = self.suffix[pos][seg];
        // A skip that costs at least lambda this step is dominated by sending.
        let send_first = skip_stage >= self.lambda;
        for send in [send_first, !send_first] {
            self.path.push(!send);
            if send {
                self.dive(pos + 1, pos + 1, cost + self.lambda);
            } else {
                self.dive(pos + 1, seg, cost + skip_stage);
            }
            self.path.pop();
        }
    }
}

/// Branch-and-bound over the skip variables; `mu` is implied by the skips
/// and never branched on.
pub fn solve_bnb(problem: &MilpProblem, incumbent_hint: Option<&SolveResult>) -> Result<SolveResult> {
    let start = Instant::now();
    validate_problem(problem)?;
    let len = problem.len;
    let lambda = problem.lambda;
    let coeff: Vec<Vec<f64>> = (0..len)
        .map(|i| (0..=i).map(|j| problem.mu_coeff(i, j).max(0.0)).collect())
        .collect();
    let suffix = row_suffix_sums(&coeff);
    let mut future = vec![0.0; len + 1];
    for i in (0..len).rev() {
        future[i] = future[i + 1] + lambda.min(coeff[i][i]);
    }

    let mut search = Search {
        suffix: &suffix,
        future,
        lambda,
        len,
        path: Vec::with_capacity(len),
        best_cost: f64::INFINITY,
        best: None,
        nodes: 0,
    };
    if let Some(hint) = incumbent_hint {
        if hint.schedule.len() != len || hint.schedule.k != problem.k {
            return Err(Error::WindowMismatch("incumbent hint covers a different window".into()));
        }
        search.best_cost = unfolded_unchecked(&coeff, &hint.schedule.skip, lambda);
        search.best = Some(hint.schedule.skip.clone());
    }
    search.dive(0, 0, 0.0);

    let skip = search
        .best
        .ok_or_else(|| Error::MalformedProblem("search finished without a schedule".into()))?;
    Ok(SolveResult {
        solver: SolverKind::Bnb,
        schedule: ScheduleVector::new(problem.k, skip),
        objective: search.best_cost,
        nodes_explored: search.nodes,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Dispatches to one solver on a bound kernel table.
pub fn solve(table: &BoundKernels, lambda: f64, kind: SolverKind) -> Result<SolveResult> {
    match kind {
        SolverKind::Dp => solve_dp(table, lambda),
        SolverKind::Brute => solve_bruteforce(table, lambda),
        SolverKind::Bnb => solve_bnb(&build_milp(table, lambda), None),
    }
}

/// Results of running all three solvers on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub bnb: SolveResult,
    pub dp: SolveResult,
    pub brute: SolveResult,
    /// Each returned schedule re-priced by the covariance recursion, in
    /// `[bnb, dp, brute]` order.
    pub recursion_costs: [f64; 3],
    pub agree: bool,
}

impl CrossValidation {
    pub fn results(&self) -> [&SolveResult; 3] {
        [&self.bnb, &self.dp, &self.brute]
    }
}

impl fmt::Display for CrossValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, rec) in self.results().iter().zip(self.recursion_costs) {
            writeln!(
                f,
                "{:>5}: objective {:.12e} (recursion {:.12e}) schedule [{}]",
                r.solver, r.objective, rec, r.schedule
            )?;
        }
        Ok(())
    }
}

/// Runs branch-and-bound, dynamic programming and enumeration on the window
/// starting at `k` with scheduler error `e_s`, and checks that all three
/// agree and that each schedule attains its objective under the covariance
/// recursion.
pub fn cross_validate(
    model: &SystemModel,
    gains: &GainSchedule,
    k: usize,
    e_s: &DVector<f64>,
    lambda: f64,
) -> Result<CrossValidation> {
    let table = build_noise_kernels(gains, model, k)?.bind_error(e_s)?;
    let brute = solve_bruteforce(&table, lambda)?;
    let dp = solve_dp(&table, lambda)?;
    let bnb = solve_bnb(&build_milp(&table, lambda), None)?;

    let priced = model.clone().with_lambda(lambda);
    let mut recursion_costs = [0.0; 3];
    for (slot, r) in recursion_costs.iter_mut().zip([&bnb, &dp, &brute]) {
        *slot = cost_matrix_recursion(&priced, gains, k, e_s, &r.schedule)?;
    }
    let results = [&bnb, &dp, &brute];
    let agree = results
        .iter()
        .all(|r| rel_close(r.objective, brute.objective, OBJECTIVE_RTOL))
        && results
            .iter()
            .zip(recursion_costs)
            .all(|(r, c)| rel_close(r.objective, c, OBJECTIVE_RTOL));
    let report = CrossValidation {
        bnb,
        dp,
        brute,
        recursion_costs,
        agree,
    };
    if agree {
        Ok(report)
    } else {
        Err(Error::OracleDisagreement(Box::new(report)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::solve_gains;
    use nalgebra::{dmatrix, dvector};

    fn scalar_model(lambda: f64) -> (SystemModel, GainSchedule) {
        let m = SystemModel::new(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![0.5], lambda, 2);
        let g = solve_gains(&m).unwrap();
        (m, g)
    }

    fn scalar_table() -> BoundKernels {
        let (m, g) = scalar_model(0.3);
        build_noise_kernels(&g, &m, 0).unwrap().bind_error(&dvector![2.0]).unwrap()
    }

    #[test]
    fn running_example_all_solvers() {
        let t = scalar_table();
        for kind in [SolverKind::Brute, SolverKind::Dp, SolverKind::Bnb] {
            let r = solve(&t, 0.3, kind).unwrap();
            assert!((r.objective - 0.55).abs() < 1e-12, "{kind}");
            assert_eq!(r.schedule.skip, vec![false, true], "{kind}");
        }
    }

    #[test]
    fn free_transmission_sends_everywhere() {
        let t = scalar_table();
        for kind in [SolverKind::Brute, SolverKind::Dp, SolverKind::Bnb] {
            let r = solve(&t, 0.0, kind).unwrap();
            assert_eq!(r.objective, 0.0);
            assert_eq!(r.schedule.sends(), 2, "{kind}");
        }
    }

    #[test]
    fn expensive_transmission_skips_everywhere() {
        let t = scalar_table();
        let lambda = t.total() + 1.0;
        for kind in [SolverKind::Brute, SolverKind::Dp, SolverKind::Bnb] {
            let r = solve(&t, lambda, kind).unwrap();
            assert_eq!(r.schedule.sends(), 0, "{kind}");
            assert!((r.objective - t.total()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_window_compares_init_term_with_lambda() {
        let t = BoundKernels::from_coefficients(4, vec![vec![2.0]]).unwrap();
        assert!(solve_dp(&t, 1.5).unwrap().schedule.first_is_send());
        assert!(!solve_dp(&t, 2.5).unwrap().schedule.first_is_send());
        // equality resolves toward skipping
        assert!(!solve_dp(&t, 2.0).unwrap().schedule.first_is_send());
        assert!(!solve_bruteforce(&t, 2.0).unwrap().schedule.first_is_send());
    }

    #[test]
    fn noiseless_zero_error_costs_nothing() {
        let m = SystemModel::double_integrator(0.1, 0.0, 3.0, 8);
        let g = solve_gains(&m).unwrap();
        let cv = cross_validate(&m, &g, 0, &dvector![0.0, 0.0], 3.0).unwrap();
        for r in cv.results() {
            assert_eq!(r.objective, 0.0);
            assert_eq!(r.schedule.sends(), 0);
        }
    }

    #[test]
    fn cross_validate_zero_lambda() {
        let m = SystemModel::double_integrator(0.1, 0.5, 0.0, 6);
        let g = solve_gains(&m).unwrap();
        let cv = cross_validate(&m, &g, 1, &dvector![1.0, -2.0], 0.0).unwrap();
        for r in cv.results() {
            assert_eq!(r.objective, 0.0);
        }
    }

    #[test]
    fn hint_never_increases_nodes() {
        let m = SystemModel::double_integrator(0.1, 0.5, 0.2, 12);
        let g = solve_gains(&m).unwrap();
        let t = build_noise_kernels(&g, &m, 0).unwrap().bind_error(&dvector![0.5, 1.0]).unwrap();
        let p = build_milp(&t, 0.2);
        let dp = solve_dp(&t, 0.2).unwrap();
        let cold = solve_bnb(&p, None).unwrap();
        let warm = solve_bnb(&p, Some(&dp)).unwrap();
        assert!(warm.nodes_explored <= cold.nodes_explored);
        assert!(rel_close(warm.objective, cold.objective, OBJECTIVE_RTOL));
    }

    #[test]
    fn zero_weights_explore_linear_nodes() {
        let len = 10;
        let coeff = (0..len).map(|i| vec![0.0; i + 1]).collect();
        let t = BoundKernels::from_coefficients(0, coeff).unwrap();
        let r = solve_bnb(&build_milp(&t, 1.0), None).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.schedule.sends(), 0);
        assert!(r.nodes_explored <= 2 * len as u64 + 1, "{}", r.nodes_explored);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        let mut p = build_milp(&scalar_table(), 0.3);
        p.c_mu.pop();
        assert!(matches!(solve_bnb(&p, None), Err(Error::MalformedProblem(_))));
        let mut p = build_milp(&scalar_table(), 0.3);
        p.c_mu[0] = -1.0;
        assert!(matches!(solve_bnb(&p, None), Err(Error::MalformedProblem(_))));
    }

    #[test]
    fn brute_force_cap() {
        let coeff = (0..23).map(|i| vec![0.0; i + 1]).collect();
        let t = BoundKernels::from_coefficients(0, coeff).unwrap();
        assert!(matches!(solve_bruteforce(&t, 1.0), Err(Error::WindowTooLarge { len: 23, .. })));
    }

    #[test]
    fn tie_break_prefers_fewer_sends_then_lexicographic() {
        // Every schedule costs 2: all-skip wins on transmissions.
        let t = BoundKernels::from_coefficients(0, vec![vec![1.0], vec![0.0, 1.0]]).unwrap();
        // skip,skip = 1 + 0 + 1 = 2; send,skip = 1 + 1 = 2; skip,send = 1 + 1 = 2; send,send = 2
        for kind in [SolverKind::Brute, SolverKind::Dp] {
            let r = solve(&t, 1.0, kind).unwrap();
            assert_eq!(r.schedule.skip, vec![true, true], "{kind}");
        }
        // one send forced cheaper than none; both single-send options tie
        let t = BoundKernels::from_coefficients(0, vec![vec![5.0], vec![0.0, 5.0]]).unwrap();
        // skip,skip=10; send,skip=1+5=6; skip,send=5+1=6; send,send=2
        let r = solve_bruteforce(&t, 1.0).unwrap();
        assert_eq!(r.schedule.skip, vec![false, false]);
        let r = solve_dp(&t, 3.0).unwrap();
        // skip,skip=10; send,skip=8; skip,send=8; send,send=6
        assert_eq!(r.schedule.skip, vec![false, false]);
        let r = solve_dp(&t, 4.5).unwrap();
        // skip,skip=10; send,skip=9.5; skip,send=9.5; send,send=9 -> send,send
        assert_eq!(r.schedule.skip, vec![false, false]);
        let r = solve_dp(&t, 5.0).unwrap();
        // all four cost 10 -> skip,skip
        assert_eq!(r.schedule.skip, vec![true, true]);
        let b = solve_bruteforce(&t, 5.0).unwrap();
        assert_eq!(b.schedule.skip, vec![true, true]);
    }

    #[test]
    fn dp_matches_brute_on_double_integrator_windows() {
        let m = SystemModel::double_integrator(0.1, 0.5, 100.0, 25);
        let g = solve_gains(&m).unwrap();
        for (k, e) in [(12, dvector![3.0, -1.0]), (10, dvector![10.0, 4.0]), (13, dvector![0.0, 0.0])] {
            let cv = cross_validate(&m, &g, k, &e, 100.0).unwrap();
            assert!(cv.agree);
        }
    }
}
