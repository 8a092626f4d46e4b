//! Scalar cost coefficients of the unfolded error-covariance expansion.
//!
//! Over a window starting at `k`, the expected stage cost at time `t` of a
//! skip schedule is
//!
//! ```text
//! tr(Gamma_t Sigma_t) = sum_{tau=k}^{t} (prod_{s=tau}^{t} skip_s) * g[t][tau]
//! ```
//!
//! where `g[t][tau] = tr(Gamma_t A^{t-tau} Sigma_w (A^{t-tau})')` for
//! `tau > k`, and the `tau = k` column is the initial-error term
//! `e' (A^{t-k})' Gamma_t A^{t-k} e`. The noise columns and the matrices
//! `H[t] = (A^{t-k})' Gamma_t A^{t-k}` depend only on the model, so they are
//! built once; only the initial-error column is recomputed when a new error
//! is observed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{quadratic_form_unchecked, symmetrize_in_place, trace_product_unchecked};
use crate::model::SystemModel;
use crate::riccati::GainSchedule;

/// Precomputed kernels for one window start `k`, before an initial error is
/// bound. Indices inside the table are window-relative (`i = t - k`).
#[derive(Debug, Clone)]
pub struct KernelTable {
    k: usize,
    horizon: usize,
    /// `noise[i][j]` for `1 <= j <= i`; `noise[i][0]` is unused and zero.
    noise: Vec<Vec<f64>>,
    h: Vec<DMatrix<f64>>,
}

impl KernelTable {
    pub fn window_start(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of decision steps `T - k`.
    pub fn len(&self) -> usize {
        self.horizon - self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.h[0].nrows()
    }

    /// Noise kernel for absolute times `k < tau <= t <= T-1`.
    pub fn noise_kernel(&self, t: usize, tau: usize) -> f64 {
        assert!(self.k < tau && tau <= t && t < self.horizon, "noise kernel index out of window");
        self.noise[t - self.k][tau - self.k]
    }

    /// `(A^{t-k})' Gamma_t A^{t-k}` for absolute `t`.
    pub fn h(&self, t: usize) -> &DMatrix<f64> {
        &self.h[t - self.k]
    }

    /// Binds a realized scheduler error `e`, i.e. an initial covariance `e e'`.
    pub fn bind_error(&self, e: &DVector<f64>) -> Result<BoundKernels> {
        if e.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "error vector has length {}, state dimension is {}",
                e.len(),
                self.state_dim()
            )));
        }
        let init = self.h.iter().map(|h| quadratic_form_unchecked(e.as_slice(), h)).collect();
        Ok(self.bind_init_column(init))
    }

    /// Binds a full initial covariance instead of a rank-one realization.
    pub fn bind_covariance(&self, cov: &DMatrix<f64>) -> Result<BoundKernels> {
        let n = self.state_dim();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial covariance is {}x{}, state dimension is {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let init = self.h.iter().map(|h| trace_product_unchecked(h, cov)).collect();
        Ok(self.bind_init_column(init))
    }

    fn bind_init_column(&self, init: Vec<f64>) -> BoundKernels {
        let coeff = self
            .noise
            .iter()
            .zip(init)
            .map(|(row, g0)| {
                let mut row = row.clone();
                row[0] = g0;
                row
            })
            .collect();
        BoundKernels { k: self.k, coeff }
    }
}

/// Kernel coefficients with the initial-error column filled in.
///
/// `coeff[i][j]` (window-relative, `0 <= j <= i < len`) multiplies the
/// monomial `prod_{s=j}^{i} skip_s`; column `j = 0` is the initial-error term.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundKernels {
    k: usize,
    coeff: Vec<Vec<f64>>,
}

impl BoundKernels {
    /// Builds a table directly from lower-triangular coefficients.
    pub fn from_coefficients(k: usize, coeff: Vec<Vec<f64>>) -> Result<Self> {
        if coeff.is_empty() {
            return Err(Error::WindowMismatch("empty coefficient table".into()));
        }
        for (i, row) in coeff.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::WindowMismatch(format!(
                    "coefficient row {i} has length {}, expected {}",
                    row.len(),
                    i + 1
                )));
            }
        }
        Ok(Self { k, coeff })
    }

    pub fn window_start(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeff
    }

    /// Coefficient for absolute times `k <= tau <= t`.
    pub fn g(&self, t: usize, tau: usize) -> f64 {
        self.coeff[t - self.k][tau - self.k]
    }

    /// Initial-error term per absolute time, `t = k .. T-1`.
    pub fn g_init(&self) -> Vec<f64> {
        self.coeff.iter().map(|row| row[0]).collect()
    }

    pub fn total(&self) -> f64 {
        self.coeff.iter().flatten().sum()
    }
}

/// Builds the noise kernels and initial-error matrices for window start `k`
/// with `O(T)` matrix products.
pub fn build_noise_kernels(gains: &GainSchedule, model: &SystemModel, k: usize) -> Result<KernelTable> {
    let horizon = gains.horizon();
    if k >= horizon {
        return Err(Error::WindowMismatch(format!(
            "window start {k} outside horizon {horizon}"
        )));
    }
    let len = horizon - k;
    let powers = matrix_powers(&model.a, len);
    let spread = noise_spread(&powers, &model.sigma_w);
    Ok(assemble(gains, k, &powers, &spread))
}

/// Kernel tables for every window start `k = 0 .. T-1`, sharing the powers of
/// `A` and the propagated noise covariances.
pub fn build_all_kernels(gains: &GainSchedule, model: &SystemModel) -> Vec<KernelTable> {
    let horizon = gains.horizon();
    let powers = matrix_powers(&model.a, horizon);
    let spread = noise_spread(&powers, &model.sigma_w);
    (0..horizon).map(|k| assemble(gains, k, &powers, &spread)).collect()
}

fn matrix_powers(a: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut powers = Vec::with_capacity(count);
    let mut cur = DMatrix::<f64>::identity(n, n);
    for _ in 0..count {
        let next = a * &cur;
        powers.push(cur);
        cur = next;
    }
    powers
}

/// `A^d Sigma_w (A^d)'` for `d = 0 .. powers.len()-1`.
fn noise_spread(powers: &[DMatrix<f64>], sigma_w: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    powers
        .iter()
        .map(|ad| {
            let mut m = ad * sigma_w * ad.transpose();
            symmetrize_in_place(&mut m);
            m
        })
        .collect()
}

fn assemble(gains: &GainSchedule, k: usize, powers: &[DMatrix<f64>], spread: &[DMatrix<f64>]) -> KernelTable {
    let horizon = gains.horizon();
    let len = horizon - k;
    let mut noise = Vec::with_capacity(len);
    let mut h = Vec::with_capacity(len);
    for i in 0..len {
        let gamma = &gains.gamma[k + i];
        let mut row = vec![0.0; i + 1];
        for (j, slot) in row.iter_mut().enumerate().skip(1) {
            *slot = trace_product_unchecked(gamma, &spread[i - j]);
        }
        noise.push(row);
        let ad = &powers[i];
        let mut hm = ad.transpose() * gamma * ad;
        symmetrize_in_place(&mut hm);
        h.push(hm);
    }
    KernelTable { k, horizon, noise, h }
}
