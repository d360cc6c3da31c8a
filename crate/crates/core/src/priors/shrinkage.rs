//! Cumulative (multiplicative-gamma) shrinkage prior on the CP factor
//! columns, local gamma precisions per entry, and the second-difference
//! smoothness prior on the spline-direction factor eta.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sample_gamma_rate, sample_inv_gamma};
use crate::error::{Error, Result};
use crate::spectral::SpectralParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkageConfig {
    /// Gamma shape of the first column multiplier Delta_1.
    pub kappa1: f64,
    /// Gamma shape of the later column multipliers Delta_i, i >= 2.
    pub kappa2: f64,
    /// Gamma shape and rate of the local precisions v.
    pub nu1: f64,
    /// Inverse-gamma shape and scale of sigma_xi and sigma_kappa.
    pub c1: f64,
    /// Ridge added to the second-difference penalty so the eta prior is
    /// proper (the raw penalty has a two-dimensional null space).
    pub penalty_ridge: f64,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self {
            kappa1: 2.1,
            kappa2: 3.1,
            nu1: 3.0,
            c1: 1.0,
            penalty_ridge: 1e-2,
        }
    }
}

/// P = Q^T Q + ridge I, where Q is the (J-2) x J second-difference operator.
pub fn second_difference_penalty(n_basis: usize, ridge: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n_basis.saturating_sub(2), n_basis);
    for r in 0..q.nrows() {
        q[(r, r)] = 1.0;
        q[(r, r + 1)] = -2.0;
        q[(r, r + 2)] = 1.0;
    }
    q.transpose() * q + DMatrix::identity(n_basis, n_basis) * ridge
}

/// One cumulative-shrinkage block: local precisions per factor entry plus the
/// column multipliers and their cumulative products.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageBlock {
    pub v: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ShrinkageBlock {
    fn sample_prior<R: Rng + ?Sized>(
        n_rows: usize,
        rank: usize,
        cfg: &ShrinkageConfig,
        rng: &mut R,
    ) -> Self {
        let v = DMatrix::from_fn(n_rows, rank, |_, _| sample_gamma_rate(rng, cfg.nu1, cfg.nu1));
        let delta: Vec<f64> = (0..rank)
            .map(|i| {
                let shape = if i == 0 { cfg.kappa1 } else { cfg.kappa2 };
                sample_gamma_rate(rng, shape, 1.0)
            })
            .collect();
        let tau = cumulative_products(&delta);
        Self { v, delta, tau }
    }

    /// Conjugate sweep given the factor entries it governs; `scale` is the
    /// extra global variance multiplier on the entries (sigma_xi or 1).
    fn update<R: Rng + ?Sized>(
        &mut self,
        factors: &DMatrix<f64>,
        scale: f64,
        cfg: &ShrinkageConfig,
        rng: &mut R,
    ) {
        let (n_rows, rank) = (factors.nrows(), factors.ncols());
        for r in 0..rank {
            for n in 0..n_rows {
                let x2 = factors[(n, r)] * factors[(n, r)];
                let rate = cfg.nu1 + self.tau[r] * x2 / (2.0 * scale);
                self.v[(n, r)] = sample_gamma_rate(rng, cfg.nu1 + 0.5, rate);
            }
        }
        for i in 0..rank {
            let prior_shape = if i == 0 { cfg.kappa1 } else { cfg.kappa2 };
            let shape = prior_shape + n_rows as f64 * (rank - i) as f64 / 2.0;
            let mut rate = 1.0;
            for r in i..rank {
                let mut tau_wo: f64 = 1.0;
                for (l, d) in self.delta.iter().enumerate().take(r + 1) {
                    if l != i {
                        tau_wo *= d;
                    }
                }
                let mut qsum = 0.0;
                for n in 0..n_rows {
                    qsum += self.v[(n, r)] * factors[(n, r)] * factors[(n, r)];
                }
                rate += tau_wo * qsum / (2.0 * scale);
            }
            self.delta[i] = sample_gamma_rate(rng, shape, rate);
        }
        self.tau = cumulative_products(&self.delta);
    }
}

fn cumulative_products(delta: &[f64]) -> Vec<f64> {
    let mut tau = Vec::with_capacity(delta.len());
    let mut acc = 1.0;
    for &d in delta {
        acc *= d;
        tau.push(acc);
    }
    tau
}

/// Hyper-state of the CP factor priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageState {
    pub xi_block: ShrinkageBlock,
    pub chi_block: ShrinkageBlock,
    /// Global variance multiplier of the xi entries.
    pub sigma_xi: f64,
    /// Scale of the eta smoothness prior N(0, sigma_kappa P^{-1}).
    pub sigma_kappa: f64,
    /// Fixed second-difference penalty P for the eta columns.
    pub penalty: DMatrix<f64>,
}

impl ShrinkageState {
    pub fn sample_prior<R: Rng + ?Sized>(
        n_tasks: usize,
        n_vars: usize,
        n_basis: usize,
        rank: usize,
        cfg: &ShrinkageConfig,
        rng: &mut R,
    ) -> Self {
        Self {
            xi_block: ShrinkageBlock::sample_prior(n_tasks, rank, cfg, rng),
            chi_block: ShrinkageBlock::sample_prior(n_vars, rank, cfg, rng),
            sigma_xi: sample_inv_gamma(rng, cfg.c1, cfg.c1),
            sigma_kappa: sample_inv_gamma(rng, cfg.c1, cfg.c1),
            penalty: second_difference_penalty(n_basis, cfg.penalty_ridge),
        }
    }

    pub fn rank(&self) -> usize {
        self.xi_block.delta.len()
    }

    /// Forward draw of the CP factors given the current hyper-state.
    pub fn sample_factors<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpectralParams> {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let rank = self.rank();
        let xi = DMatrix::from_fn(self.xi_block.v.nrows(), rank, |s, r| {
            let var = self.sigma_xi / (self.xi_block.v[(s, r)] * self.xi_block.tau[r]);
            std_normal.sample(rng) * var.sqrt()
        });
        let chi = DMatrix::from_fn(self.chi_block.v.nrows(), rank, |k, r| {
            let var = 1.0 / (self.chi_block.v[(k, r)] * self.chi_block.tau[r]);
            std_normal.sample(rng) * var.sqrt()
        });
        let n_basis = self.penalty.nrows();
        let chol = self
            .penalty
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("penalty not positive definite".into()))?;
        let mut eta = DMatrix::zeros(n_basis, rank);
        for r in 0..rank {
            let z = DVector::from_fn(n_basis, |_, _| std_normal.sample(rng));
            // eta_r = sqrt(sigma_kappa) L^{-T} z  has covariance sigma_kappa P^{-1}
            let x = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::NumericalFailure("penalty solve failed".into()))?;
            eta.set_column(r, &(x * self.sigma_kappa.sqrt()));
        }
        SpectralParams::new(xi, chi, eta)
    }

    /// Conjugate sweep of all hyperparameters given the CP factors.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        factors: &SpectralParams,
        cfg: &ShrinkageConfig,
        rng: &mut R,
    ) {
        self.xi_block.update(&factors.xi, self.sigma_xi, cfg, rng);
        self.chi_block.update(&factors.chi, 1.0, cfg, rng);

        let rank = self.rank();
        let mut quad_xi = 0.0;
        for r in 0..rank {
            for s in 0..factors.xi.nrows() {
                quad_xi +=
                    self.xi_block.v[(s, r)] * self.xi_block.tau[r] * factors.xi[(s, r)].powi(2);
            }
        }
        let n_xi = (factors.xi.nrows() * rank) as f64;
        self.sigma_xi = sample_inv_gamma(rng, cfg.c1 + n_xi / 2.0, cfg.c1 + quad_xi / 2.0);

        let mut quad_eta = 0.0;
        for r in 0..rank {
            let eta_r = factors.eta.column(r);
            quad_eta += (&self.penalty * eta_r).dot(&eta_r);
        }
        let n_eta = (factors.eta.nrows() * rank) as f64;
        self.sigma_kappa = sample_inv_gamma(rng, cfg.c1 + n_eta / 2.0, cfg.c1 + quad_eta / 2.0);
    }

    /// Log prior density of the factors given the hyper-state, up to terms
    /// not involving the factors.
    pub fn log_prior_factors(&self, factors: &SpectralParams) -> f64 {
        let rank = self.rank();
        let mut acc = 0.0;
        for r in 0..rank {
            for s in 0..factors.xi.nrows() {
                acc -= 0.5 * self.xi_block.v[(s, r)] * self.xi_block.tau[r]
                    * factors.xi[(s, r)].powi(2)
                    / self.sigma_xi;
            }
            for k in 0..factors.chi.nrows() {
                acc -= 0.5
                    * self.chi_block.v[(k, r)]
                    * self.chi_block.tau[r]
                    * factors.chi[(k, r)].powi(2);
            }
            let eta_r = factors.eta.column(r);
            acc -= 0.5 * (&self.penalty * eta_r).dot(&eta_r) / self.sigma_kappa;
        }
        acc
    }

    /// Gradient of [`Self::log_prior_factors`] with respect to each factor
    /// block, in the same shapes as the factors.
    pub fn grad_log_prior_factors(
        &self,
        factors: &SpectralParams,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let rank = self.rank();
        let g_xi = DMatrix::from_fn(factors.xi.nrows(), rank, |s, r| {
            -self.xi_block.v[(s, r)] * self.xi_block.tau[r] * factors.xi[(s, r)] / self.sigma_xi
        });
        let g_chi = DMatrix::from_fn(factors.chi.nrows(), rank, |k, r| {
            -self.chi_block.v[(k, r)] * self.chi_block.tau[r] * factors.chi[(k, r)]
        });
        let mut g_eta = DMatrix::zeros(factors.eta.nrows(), rank);
        for r in 0..rank {
            let col = -(&self.penalty * factors.eta.column(r)) / self.sigma_kappa;
            g_eta.set_column(r, &col);
        }
        (g_xi, g_chi, g_eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn penalty_shape_and_symmetry() {
        let p = second_difference_penalty(6, 1e-2);
        assert_eq!(p.nrows(), 6);
        assert!((p.clone() - p.transpose()).norm() < 1e-14);
        assert!(p.cholesky().is_some());
    }

    #[test]
    fn tau_is_cumulative_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = ShrinkageConfig::default();
        let mut state = ShrinkageState::sample_prior(2, 3, 6, 4, &cfg, &mut rng);
        let factors = state.sample_factors(&mut rng).unwrap();
        state.update(&factors, &cfg, &mut rng);
        for block in [&state.xi_block, &state.chi_block] {
            let mut acc = 1.0;
            for (i, &d) in block.delta.iter().enumerate() {
                acc *= d;
                assert_abs_diff_eq!(block.tau[i], acc, epsilon = 1e-12 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_factors_delta_rate_reduces_to_prior() {
        // With all factor entries zero the quadratic terms vanish, so the
        // Delta_i conditionals are Ga(kappa + n(R-i)/2, 1): the rate is the
        // prior rate while the shape keeps the Gaussian normalizer counts.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = ShrinkageConfig::default();
        let n_rows = 3;
        let rank = 2;
        let mut state = ShrinkageState::sample_prior(n_rows, 4, 6, rank, &cfg, &mut rng);
        let zero = SpectralParams::new(
            DMatrix::zeros(n_rows, rank),
            DMatrix::zeros(4, rank),
            DMatrix::zeros(6, rank),
        )
        .unwrap();
        // Monte-Carlo check on the first Delta of the xi block.
        let n = 40_000;
        let mut acc = 0.0;
        for _ in 0..n {
            state.update(&zero, &cfg, &mut rng);
            acc += state.xi_block.delta[0];
        }
        let mean = acc / n as f64;
        let expect = cfg.kappa1 + n_rows as f64 * rank as f64 / 2.0; // shape / rate 1
        assert!(
            (mean - expect).abs() < 0.05 * expect,
            "mean {mean}, expected {expect}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = ShrinkageConfig::default();
        let state = ShrinkageState::sample_prior(2, 3, 5, 2, &cfg, &mut rng);
        let factors = state.sample_factors(&mut rng).unwrap();
        let (g_xi, g_chi, g_eta) = state.grad_log_prior_factors(&factors);
        let eps = 1e-6;
        fn bump(f: &mut SpectralParams, idx: (usize, usize), block: char, by: f64) {
            match block {
                'x' => f.xi[idx] += by,
                'c' => f.chi[idx] += by,
                _ => f.eta[idx] += by,
            }
        }
        let check = |idx: (usize, usize), block: char, analytic: f64| {
            let mut plus = factors.clone();
            let mut minus = factors.clone();
            bump(&mut plus, idx, block, eps);
            bump(&mut minus, idx, block, -eps);
            let fd =
                (state.log_prior_factors(&plus) - state.log_prior_factors(&minus)) / (2.0 * eps);
            assert_abs_diff_eq!(analytic, fd, epsilon = 1e-5 * analytic.abs().max(1.0));
        };
        check((0, 1), 'x', g_xi[(0, 1)]);
        check((2, 0), 'c', g_chi[(2, 0)]);
        check((3, 1), 'e', g_eta[(3, 1)]);
    }

    #[test]
    fn forward_eta_matches_penalty_covariance() {
        // Covariance of eta under the prior is sigma_kappa P^{-1}; check one
        // diagonal entry by Monte Carlo.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cfg = ShrinkageConfig::default();
        let mut state = ShrinkageState::sample_prior(2, 2, 5, 1, &cfg, &mut rng);
        state.sigma_kappa = 2.0;
        let p_inv = state.penalty.clone().try_inverse().unwrap();
        let n = 60_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let f = state.sample_factors(&mut rng).unwrap();
            acc += f.eta[(2, 0)] * f.eta[(2, 0)];
        }
        let var = acc / n as f64;
        let expect = 2.0 * p_inv[(2, 2)];
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "var {var}, expected {expect}"
        );
    }
}
