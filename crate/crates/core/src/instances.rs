//! Seeded random problem instances for cross-checks, self-tests and timing.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::model::SystemModel;
use crate::riccati::{solve_gains, GainSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

/// One scheduling window drawn at random.
#[derive(Debug, Clone)]
pub struct WindowInstance {
    pub model: SystemModel,
    pub gains: GainSchedule,
    pub k: usize,
    pub e_s: DVector<f64>,
    pub lambda: f64,
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// `G G' / cols` with `G` of the given column count; rank-deficient when
/// `cols < n`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, cols: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, cols);
    (&g * g.transpose()) / cols.max(1) as f64
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Gaussian `A` rescaled to a spectral radius drawn from `[0.5, 0.95]`
/// (stable) or `[1.05, 1.3]` (unstable).
pub fn random_dynamics<R: Rng>(rng: &mut R, n: usize, stability: Stability) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    let rho = spectral_radius(&a).max(1e-6);
    let target = match stability {
        Stability::Stable => rng.random_range(0.5..0.95),
        Stability::Unstable => rng.random_range(1.05..1.3),
    };
    a * (target / rho)
}

/// A random validated model with `m` inputs and the given horizon.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, m: usize, horizon: usize, stability: Stability) -> SystemModel {
    let a = random_dynamics(rng, n, stability);
    let b = gaussian(rng, n, m);
    let q_rank = rng.random_range(1..=n);
    let q = random_psd(rng, n, q_rank) + DMatrix::identity(n, n) * 0.05;
    let qt = random_psd(rng, n, n);
    let r = random_psd(rng, m, m) + DMatrix::identity(m, m) * 0.5;
    let w_rank = rng.random_range(1..=n);
    let sigma_w = random_psd(rng, n, w_rank);
    let mut model = SystemModel::new(a, b, q, r, sigma_w, 1.0, horizon);
    model.qt = qt;
    model.validate().expect("random model satisfies the standing assumptions")
}

/// Random window with `T - k = window`, random error and a penalty drawn
/// log-uniformly over four decades around the window's own cost scale.
pub fn random_window<R: Rng>(rng: &mut R, n: usize, window: usize) -> Result<WindowInstance> {
    let stability = if rng.random_bool(0.5) {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    let m = rng.random_range(1..=n.min(2));
    let k = rng.random_range(0..=3);
    let horizon = k + window;
    let mut model = random_model(rng, n, m, horizon, stability);
    let gains = solve_gains(&model)?;
    let e_s = gaussian_vector(rng, n) * rng.random_range(0.1..3.0);

    let scale = crate::linalg::trace_product_unchecked(&gains.gamma[k], &model.sigma_w)
        + crate::linalg::quadratic_form_unchecked(e_s.as_slice(), &gains.gamma[k]);
    let lambda = scale.max(1e-6) * 10f64.powf(rng.random_range(-2.0..2.0));
    model.lambda = lambda;
    Ok(WindowInstance {
        model,
        gains,
        k,
        e_s,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn dynamics_hit_requested_regime() {
        let mut r = rng(1);
        for n in 1..=5 {
            let a = random_dynamics(&mut r, n, Stability::Stable);
            assert!(spectral_radius(&a) < 1.0);
            let a = random_dynamics(&mut r, n, Stability::Unstable);
            assert!(spectral_radius(&a) > 1.0);
        }
    }

    #[test]
    fn random_psd_is_psd() {
        let mut r = rng(2);
        for n in 1..=6 {
            for cols in 1..=n {
                assert!(min_eigenvalue(&random_psd(&mut r, n, cols)) > -1e-12);
            }
        }
    }

    #[test]
    fn windows_are_reproducible() {
        let a = random_window(&mut rng(7), 3, 6).unwrap();
        let b = random_window(&mut rng(7), 3, 6).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.e_s, b.e_s);
        assert_eq!(a.model.horizon - a.k, 6);
    }
}
