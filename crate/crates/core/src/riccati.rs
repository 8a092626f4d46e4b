//! Finite-horizon Riccati recursion and the derived weighting matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrize_in_place;
use crate::model::SystemModel;

/// Per-step outputs of the backward Riccati pass.
///
/// `gamma[k] = L_k' S_k L_k` prices estimation error at step `k`;
/// `tail[k] = sum_j (A^j)' gamma[k+j] A^j` prices an error that is never
/// corrected again. `tail` is empty until [`tail_gramians`] runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    /// `P_0 .. P_T`, with `P_T = QT`.
    pub p: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub l: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
    pub tail: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.gamma.len()
    }

    pub fn has_tail(&self) -> bool {
        self.tail.len() == self.gamma.len()
    }
}

/// Backward pass `k = T-1 .. 0`; `S_k` is only ever used through its
/// Cholesky factor.
pub fn compute_gains(model: &SystemModel) -> Result<GainSchedule> {
    let t_len = model.horizon;
    let a = &model.a;
    let b = &model.b;
    let at = a.transpose();
    let bt = b.transpose();

    let mut p = vec![model.qt.clone(); t_len + 1];
    let mut s = Vec::with_capacity(t_len);
    let mut l = Vec::with_capacity(t_len);
    let mut gamma = Vec::with_capacity(t_len);

    for k in (0..t_len).rev() {
        let p_next = &p[k + 1];
        let bt_p = &bt * p_next;
        let s_k = &model.r + &bt_p * b;
        let bt_p_a = &bt_p * a;
        let chol = s_k.clone().cholesky().ok_or(Error::SingularS { step: k })?;
        let l_k = chol.solve(&bt_p_a);
        let mut p_k = &at * p_next * a + &model.q - bt_p_a.transpose() * &l_k;
        symmetrize_in_place(&mut p_k);
        let mut g_k = l_k.transpose() * &s_k * &l_k;
        symmetrize_in_place(&mut g_k);
        p[k] = p_k;
        s.push(s_k);
        l.push(l_k);
        gamma.push(g_k);
    }
    s.reverse();
    l.reverse();
    gamma.reverse();

    Ok(GainSchedule {
        p,
        s,
        l,
        gamma,
        tail: Vec::new(),
    })
}

/// Fills `tail` by `W_{T-1} = Gamma_{T-1}`, `W_k = Gamma_k + A' W_{k+1} A`.
pub fn tail_gramians(mut gains: GainSchedule, a: &DMatrix<f64>) -> Result<GainSchedule> {
    let t_len = gains.horizon();
    if t_len == 0 {
        gains.tail.clear();
        return Ok(gains);
    }
    let n = gains.gamma[0].nrows();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, gains are {n}x{n}",
            a.nrows(),
            a.ncols()
        )));
    }
    let at = a.transpose();
    let mut tail = vec![DMatrix::zeros(n, n); t_len];
    tail[t_len - 1] = gains.gamma[t_len - 1].clone();
    for k in (0..t_len - 1).rev() {
        let mut w = &gains.gamma[k] + &at * &tail[k + 1] * a;
        symmetrize_in_place(&mut w);
        tail[k] = w;
    }
    gains.tail = tail;
    Ok(gains)
}

/// Gains and tail Gramians in one call; the form every downstream module uses.
pub fn solve_gains(model: &SystemModel) -> Result<GainSchedule> {
    tail_gramians(compute_gains(model)?, &model.a)
}
