//! The scheduling problem as a 0/1 linear program, and the two independent
//! ways of pricing a skip schedule.
//!
//! Decision variables are skip indicators (`true` = no transmission). Each
//! product of skips over a window `[tau, t]` is replaced by a binary `mu`
//! tied to the skips by
//!
//! ```text
//! mu[t][tau] <= skip[s]                          for every s in [tau, t]
//! mu[t][tau] >= sum_{s=tau}^{t} skip[s] - (t - tau)
//! ```
//!
//! which pins `mu` to the product on every binary assignment.

use std::fmt::{self, Write as _};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::BoundKernels;
use crate::linalg::{symmetrize_in_place, trace_product_unchecked, MatrixWorkspace};
use crate::model::SystemModel;
use crate::riccati::GainSchedule;

/// Skip indicators for times `k .. k + len - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleVector {
    pub k: usize,
    pub skip: Vec<bool>,
}

impl ScheduleVector {
    pub fn new(k: usize, skip: Vec<bool>) -> Self {
        Self { k, skip }
    }

    pub fn all_send(k: usize, len: usize) -> Self {
        Self::new(k, vec![false; len])
    }

    pub fn all_skip(k: usize, len: usize) -> Self {
        Self::new(k, vec![true; len])
    }

    /// Schedule whose skip bits read `mask` most-significant-first, so that
    /// numeric order on masks is lexicographic order on schedules.
    pub fn from_mask(k: usize, len: usize, mask: u64) -> Self {
        let skip = (0..len).map(|i| (mask >> (len - 1 - i)) & 1 == 1).collect();
        Self::new(k, skip)
    }

    pub fn len(&self) -> usize {
        self.skip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skip.is_empty()
    }

    /// Number of transmissions in the schedule.
    pub fn sends(&self) -> usize {
        self.skip.iter().filter(|s| !**s).count()
    }

    /// Transmission decisions `theta = 1 - skip`.
    pub fn transmissions(&self) -> Vec<bool> {
        self.skip.iter().map(|s| !s).collect()
    }

    pub fn first_is_send(&self) -> bool {
        !self.skip[0]
    }

    /// `mu` values implied by the skips, in [`MilpProblem::mu_index`] order.
    pub fn implied_mu(&self) -> Vec<bool> {
        let len = self.len();
        let mut mu = Vec::with_capacity(len * (len + 1) / 2);
        for i in 0..len {
            for j in 0..=i {
                mu.push(self.skip[j..=i].iter().all(|s| *s));
            }
        }
        mu
    }
}

impl fmt::Display for ScheduleVector {
    /// Renders transmissions, e.g. `send skip skip`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.skip.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(if *s { "skip" } else { "send" })?;
        }
        Ok(())
    }
}

fn check_window(model_horizon: usize, k: usize, sched: &ScheduleVector) -> Result<()> {
    if sched.k != k || k >= model_horizon || sched.len() != model_horizon - k {
        return Err(Error::WindowMismatch(format!(
            "schedule covers [{}, {}) but the window is [{k}, {model_horizon})",
            sched.k,
            sched.k + sched.len()
        )));
    }
    Ok(())
}

/// Schedule cost by running the error-covariance recursion
/// `Sigma_{t+1} = skip_{t+1} (A Sigma_t A' + Sigma_w)` from
/// `Sigma_k = skip_k e e'`, using the model's `lambda`.
pub fn cost_matrix_recursion(
    model: &SystemModel,
    gains: &GainSchedule,
    k: usize,
    e_s: &DVector<f64>,
    sched: &ScheduleVector,
) -> Result<f64> {
    let mut ws = MatrixWorkspace::new(model.state_dim());
    cost_matrix_recursion_with(&mut ws, model, gains, k, e_s, sched)
}

/// [`cost_matrix_recursion`] with caller-provided scratch buffers.
pub fn cost_matrix_recursion_with(
    ws: &mut MatrixWorkspace,
    model: &SystemModel,
    gains: &GainSchedule,
    k: usize,
    e_s: &DVector<f64>,
    sched: &ScheduleVector,
) -> Result<f64> {
    let n = model.state_dim();
    check_window(gains.horizon(), k, sched)?;
    if e_s.len() != n || ws.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "error vector length {} / workspace {} against state dimension {n}",
            e_s.len(),
            ws.dim()
        )));
    }
    let at = model.a.transpose();
    let lambda = model.lambda;

    if sched.skip[0] {
        e_s.mul_to(&e_s.transpose(), &mut ws.sigma);
    } else {
        ws.sigma.fill(0.0);
    }
    let mut total = 0.0;
    for (i, &skip) in sched.skip.iter().enumerate() {
        let t = k + i;
        if i > 0 {
            if skip {
                model.a.mul_to(&ws.sigma, &mut ws.tmp);
                ws.tmp.mul_to(&at, &mut ws.next);
                ws.next += &model.sigma_w;
                symmetrize_in_place(&mut ws.next);
                std::mem::swap(&mut ws.sigma, &mut ws.next);
            } else {
                ws.sigma.fill(0.0);
            }
        }
        if skip {
            total += trace_product_unchecked(&gains.gamma[t], &ws.sigma);
        } else {
            total += lambda;
        }
    }
    Ok(total)
}

/// Schedule cost from the bound kernel coefficients via running products.
pub fn cost_unfolded(table: &BoundKernels, sched: &ScheduleVector, lambda: f64) -> Result<f64> {
    if sched.k != table.window_start() || sched.len() != table.len() {
        return Err(Error::WindowMismatch(format!(
            "schedule [{}; {}] against kernels [{}; {}]",
            sched.k,
            sched.len(),
            table.window_start(),
            table.len()
        )));
    }
    Ok(unfolded_unchecked(table.coefficients(), &sched.skip, lambda))
}

pub(crate) fn unfolded_unchecked(coeff: &[Vec<f64>], skip: &[bool], lambda: f64) -> f64 {
    let mut total = 0.0;
    for (i, row) in coeff.iter().enumerate() {
        if !skip[i] {
            total += lambda;
            continue;
        }
        // The product over [j, i] stays 1 until the latest send at or before i.
        for j in (0..=i).rev() {
            if !skip[j] {
                break;
            }
            total += row[j];
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    /// Skip indicator at window position `i`.
    Skip(usize),
    /// Product of skips over window positions `[j, i]`.
    Mu(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    fn holds(&self, skip: &[bool], mu: &[bool]) -> bool {
        let lhs: f64 = self
            .terms
            .iter()
            .map(|(v, c)| {
                let x = match *v {
                    Var::Skip(i) => skip[i],
                    Var::Mu(i, j) => mu[MilpProblem::mu_index(i, j)],
                };
                if x {
                    *c
                } else {
                    0.0
                }
            })
            .sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Ge => lhs >= self.rhs,
        }
    }
}

/// Linear 0/1 program over one scheduling window.
///
/// The objective is `sum c_mu * mu + sum c_skip * skip + constant` with
/// `c_skip = -lambda` and `constant = lambda * len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub k: usize,
    pub len: usize,
    pub lambda: f64,
    /// Indexed by [`MilpProblem::mu_index`].
    pub c_mu: Vec<f64>,
    pub c_skip: Vec<f64>,
    pub constant: f64,
    pub constraints: Vec<Constraint>,
}

/// Result of [`check_assignment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignmentCheck {
    pub feasible: bool,
    pub objective: f64,
}

impl MilpProblem {
    /// Flat position of `mu[i][j]`, `j <= i`, ordered by `i` then `j`.
    pub fn mu_index(i: usize, j: usize) -> usize {
        i * (i + 1) / 2 + j
    }

    pub fn num_mu(&self) -> usize {
        self.len * (self.len + 1) / 2
    }

    pub fn num_vars(&self) -> usize {
        self.len + self.num_mu()
    }

    /// Objective coefficient of `mu[i][j]`.
    pub fn mu_coeff(&self, i: usize, j: usize) -> f64 {
        self.c_mu[Self::mu_index(i, j)]
    }

    /// Objective in LP-file form (`Minimize / Subject To / Binary / End`).
    pub fn to_lp_string(&self) -> String {
        let skip_name = |i: usize| format!("sb_{}", self.k + i);
        let mu_name = |i: usize, j: usize| format!("mu_{}_{}", self.k + i, self.k + j);
        let var_name = |v: &Var| match *v {
            Var::Skip(i) => skip_name(i),
            Var::Mu(i, j) => mu_name(i, j),
        };
        let term = |out: &mut String, first: bool, c: f64, name: &str| {
            if first {
                let _ = write!(out, "{c} {name}");
            } else if c < 0.0 {
                let _ = write!(out, " - {} {name}", -c);
            } else {
                let _ = write!(out, " + {c} {name}");
            }
        };

        let mut out = String::new();
        let _ = writeln!(out, "\\ scheduling window k = {} .. {}", self.k, self.k + self.len - 1);
        let _ = writeln!(out, "\\ objective constant (lambda * window length) = {}", self.constant);
        out.push_str("Minimize\n obj: ");
        let mut first = true;
        for i in 0..self.len {
            for j in 0..=i {
                term(&mut out, first, self.mu_coeff(i, j), &mu_name(i, j));
                first = false;
            }
        }
        for (i, c) in self.c_skip.iter().enumerate() {
            term(&mut out, false, *c, &skip_name(i));
        }
        out.push_str("\nSubject To\n");
        for (r, con) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{r}: ");
            for (idx, (v, c)) in con.terms.iter().enumerate() {
                term(&mut out, idx == 0, *c, &var_name(v));
            }
            let op = match con.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {}", con.rhs);
        }
        out.push_str("Binary\n");
        for i in 0..self.len {
            let _ = writeln!(out, " {}", skip_name(i));
        }
        for i in 0..self.len {
            for j in 0..=i {
                let _ = writeln!(out, " {}", mu_name(i, j));
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Emits the linear program for a bound kernel table.
pub fn build_milp(table: &BoundKernels, lambda: f64) -> MilpProblem {
    let len = table.len();
    let coeff = table.coefficients();
    let mut c_mu = Vec::with_capacity(len * (len + 1) / 2);
    for row in coeff {
        c_mu.extend_from_slice(row);
    }
    let mut constraints = Vec::new();
    for i in 0..len {
        for j in 0..=i {
            for s in j..=i {
                constraints.push(Constraint {
                    terms: vec![(Var::Mu(i, j), 1.0), (Var::Skip(s), -1.0)],
                    sense: Sense::Le,
                    rhs: 0.0,
                });
            }
            let mut terms = vec![(Var::Mu(i, j), 1.0)];
            terms.extend((j..=i).map(|s| (Var::Skip(s), -1.0)));
            constraints.push(Constraint {
                terms,
                sense: Sense::Ge,
                rhs: -((i - j) as f64),
            });
        }
    }
    MilpProblem {
        k: table.window_start(),
        len,
        lambda,
        c_mu,
        c_skip: vec![-lambda; len],
        constant: lambda * len as f64,
        constraints,
    }
}

/// Feasibility and objective of a full 0/1 assignment.
pub fn check_assignment(problem: &MilpProblem, skip: &[bool], mu: &[bool]) -> Result<AssignmentCheck> {
    if skip.len() != problem.len {
        return Err(Error::LengthMismatch {
            expected: problem.len,
            got: skip.len(),
        });
    }
    if mu.len() != problem.num_mu() {
        return Err(Error::LengthMismatch {
            expected: problem.num_mu(),
            got: mu.len(),
        });
    }
    let feasible = problem.constraints.iter().all(|c| c.holds(skip, mu));
    let objective = problem.constant
        + problem
            .c_mu
            .iter()
            .zip(mu)
            .filter(|(_, m)| **m)
            .map(|(c, _)| *c)
            .sum::<f64>()
        + problem
            .c_skip
            .iter()
            .zip(skip)
            .filter(|(_, s)| **s)
            .map(|(c, _)| *c)
            .sum::<f64>();
    Ok(AssignmentCheck { feasible, objective })
}
