//! Horseshoe prior on the off-diagonal entries of W via the inverse-gamma
//! scale-mixture representation: w_{i,j} ~ N(0, d_i lambda^2_{i,j} tau^2)
//! with lambda_{i,j}, tau ~ C+(0,1) marginally.

use nalgebra::DMatrix;
use rand::Rng;

use super::sample_inv_gamma;
use crate::graph::DagWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeState {
    /// Local scales lambda^2_{i,j}; diagonal entries are unused.
    pub lambda2: DMatrix<f64>,
    /// Auxiliary nu_{i,j} with lambda^2 ~ IG(1/2, 1/nu).
    pub nu: DMatrix<f64>,
    /// Global scale tau^2.
    pub tau2: f64,
    /// Auxiliary for the global scale, tau^2 ~ IG(1/2, 1/xi).
    pub xi_aux: f64,
}

/// Conditional of one local scale given its coefficient:
/// lambda^2 | . ~ IG(1, 1/nu + w^2 / (2 d_i tau^2)); returns (shape, scale).
pub(crate) fn lambda2_conditional(nu: f64, w_ij: f64, d_i: f64, tau2: f64) -> (f64, f64) {
    (1.0, 1.0 / nu + w_ij * w_ij / (2.0 * d_i * tau2))
}

impl HorseshoeState {
    /// Forward draw from the joint scale prior.
    pub fn sample_prior<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let nu = DMatrix::from_fn(p, p, |_, _| sample_inv_gamma(rng, 0.5, 1.0));
        let lambda2 = DMatrix::from_fn(p, p, |i, j| sample_inv_gamma(rng, 0.5, 1.0 / nu[(i, j)]));
        let xi_aux = sample_inv_gamma(rng, 0.5, 1.0);
        let tau2 = sample_inv_gamma(rng, 0.5, 1.0 / xi_aux);
        Self {
            lambda2,
            nu,
            tau2,
            xi_aux,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda2.nrows()
    }

    /// Prior variance of w_{i,j} given the current scales.
    #[inline]
    pub fn prior_variance(&self, i: usize, j: usize, d_i: f64) -> f64 {
        (d_i * self.lambda2[(i, j)] * self.tau2).clamp(1e-300, 1e300)
    }

    /// Exact conjugate sweep over (lambda^2, nu, tau^2, xi) given W and D.
    pub fn gibbs_update<R: Rng + ?Sized>(&mut self, w: &DagWeights, d: &[f64], rng: &mut R) {
        let p = self.dim();
        let wm = w.matrix();
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                let (shape, scale) =
                    lambda2_conditional(self.nu[(i, j)], wm[(i, j)], d[i], self.tau2);
                self.lambda2[(i, j)] = sample_inv_gamma(rng, shape, scale);
                self.nu[(i, j)] = sample_inv_gamma(rng, 1.0, 1.0 + 1.0 / self.lambda2[(i, j)]);
            }
        }
        let n_off = (p * (p - 1)) as f64;
        let mut quad = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    quad += wm[(i, j)] * wm[(i, j)] / (d[i] * self.lambda2[(i, j)]);
                }
            }
        }
        self.tau2 = sample_inv_gamma(rng, (n_off + 1.0) / 2.0, 1.0 / self.xi_aux + quad / 2.0);
        self.xi_aux = sample_inv_gamma(rng, 1.0, 1.0 + 1.0 / self.tau2);
    }
}
