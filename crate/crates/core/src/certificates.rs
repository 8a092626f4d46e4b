//! One-step send/skip certificates.
//!
//! The benefit of transmitting at `k` (optimal cost with a skip at `k` minus
//! optimal cost with a send) is sandwiched as
//!
//! ```text
//! e' Gamma_k e - lambda  <=  benefit  <=  e' W_k e - lambda
//! ```
//!
//! so a nonnegative lower end certifies sending and a nonpositive upper end
//! certifies skipping, without solving the window.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::build_noise_kernels;
use crate::linalg::quadratic_form;
use crate::milp::{cost_matrix_recursion, unfolded_unchecked, ScheduleVector};
use crate::model::SystemModel;
use crate::riccati::GainSchedule;
use crate::solver::{rel_close, solve_bruteforce, OBJECTIVE_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Send,
    Skip,
    Indeterminate,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Send => "send",
            Verdict::Skip => "skip",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateDecision {
    pub verdict: Verdict,
    /// `e' Gamma_k e - lambda`.
    pub lower: f64,
    /// `e' W_k e - lambda`.
    pub upper: f64,
}

/// Applies both certificates. When both fire (only at `lower = upper = 0`)
/// the verdict is `Skip`.
pub fn evaluate_certificate(
    e_s: &DVector<f64>,
    gamma_k: &DMatrix<f64>,
    tail_k: &DMatrix<f64>,
    lambda: f64,
) -> Result<CertificateDecision> {
    let lower = quadratic_form(e_s, gamma_k)? - lambda;
    let upper = quadratic_form(e_s, tail_k)? - lambda;
    let verdict = if upper <= 0.0 {
        Verdict::Skip
    } else if lower >= 0.0 {
        Verdict::Send
    } else {
        Verdict::Indeterminate
    };
    Ok(CertificateDecision { verdict, lower, upper })
}

/// Certificate at step `k` of a gain schedule.
pub fn certify_step(gains: &GainSchedule, k: usize, e_s: &DVector<f64>, lambda: f64) -> Result<CertificateDecision> {
    if k >= gains.horizon() {
        return Err(Error::WindowMismatch(format!("step {k} outside horizon {}", gains.horizon())));
    }
    if !gains.has_tail() {
        return Err(Error::WindowMismatch("tail Gramians have not been computed".into()));
    }
    evaluate_certificate(e_s, &gains.gamma[k], &gains.tail[k], lambda)
}

/// Outcome of [`certificate_soundness_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoundnessOutcome {
    pub decision: CertificateDecision,
    pub optimum: f64,
    /// Best cost with a send at `k`.
    pub best_send: f64,
    /// Best cost with a skip at `k`.
    pub best_skip: f64,
}

/// Checks a verdict against exhaustive enumeration of the window at `k`.
pub fn certificate_soundness_check(
    model: &SystemModel,
    gains: &GainSchedule,
    k: usize,
    e_s: &DVector<f64>,
    lambda: f64,
) -> Result<SoundnessOutcome> {
    let decision = certify_step(gains, k, e_s, lambda)?;
    let table = build_noise_kernels(gains, model, k)?.bind_error(e_s)?;
    let optimum = solve_bruteforce(&table, lambda)?.objective;

    let len = table.len();
    let coeff = table.coefficients();
    let mut best_send = f64::INFINITY;
    let mut best_skip = f64::INFINITY;
    for mask in 0..(1u64 << len) {
        let sched = ScheduleVector::from_mask(k, len, mask);
        let cost = unfolded_unchecked(coeff, &sched.skip, lambda);
        if sched.skip[0] {
            best_skip = best_skip.min(cost);
        } else {
            best_send = best_send.min(cost);
        }
    }

    let ok = match decision.verdict {
        Verdict::Send => rel_close(best_send, optimum, OBJECTIVE_RTOL) || best_send <= optimum,
        Verdict::Skip => rel_close(best_skip, optimum, OBJECTIVE_RTOL) || best_skip <= optimum,
        Verdict::Indeterminate => true,
    };
    let outcome = SoundnessOutcome {
        decision,
        optimum,
        best_send,
        best_skip,
    };
    if ok {
        Ok(outcome)
    } else {
        Err(Error::SoundnessViolation(format!(
            "step {k}: verdict {} (lower {:.6e}, upper {:.6e}) but best send {:.12e}, best skip {:.12e}, optimum {:.12e}",
            decision.verdict.name(),
            decision.lower,
            decision.upper,
            best_send,
            best_skip,
            optimum
        )))
    }
}

/// Realized benefit of sending at `k` along the two completions that attain
/// the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessWitness {
    /// Skip-minus-send cost when the next transmission is at `k + 1`.
    pub send_next: f64,
    /// Skip-minus-send cost when nothing is transmitted after `k`.
    pub never_again: f64,
}

/// Prices both completions with the covariance recursion; `send_next` equals
/// the lower bound and `never_again` the upper bound.
pub fn tightness_witnesses(
    model: &SystemModel,
    gains: &GainSchedule,
    k: usize,
    e_s: &DVector<f64>,
    lambda: f64,
) -> Result<TightnessWitness> {
    let horizon = gains.horizon();
    if k >= horizon {
        return Err(Error::WindowMismatch(format!("step {k} outside horizon {horizon}")));
    }
    let priced = model.clone().with_lambda(lambda);
    let len = horizon - k;
    let benefit = |tail_skip: bool| -> Result<f64> {
        let mut skip = vec![true; len];
        let mut send = vec![false; len];
        for i in 1..len {
            let v = if i == 1 { tail_skip } else { true };
            skip[i] = v;
            send[i] = v;
        }
        let skip_cost = cost_matrix_recursion(&priced, gains, k, e_s, &ScheduleVector::new(k, skip))?;
        let send_cost = cost_matrix_recursion(&priced, gains, k, e_s, &ScheduleVector::new(k, send))?;
        Ok(skip_cost - send_cost)
    };
    let never_again = benefit(true)?;
    // With a one-step window there is no k+1; both completions coincide.
    let send_next = if len > 1 { benefit(false)? } else { never_again };
    Ok(TightnessWitness { send_next, never_again })
}
