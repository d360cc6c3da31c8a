//! The unrestricted-posterior MCMC: Gaussian row updates for W, the
//! stick-breaking block for D, adaptive Metropolis for the task-correlation
//! angles and soft-threshold level, and Langevin (MALA) moves on the CP
//! spectral factors.

mod chain;
pub mod geweke;
mod loglik;
mod updates;

pub use chain::{run_chain, ArchiveMeta, Draw, DrawArchive};
pub use loglik::{whittle_loglik, SpectralCtx, WhittleData};
pub(crate) use loglik::{loglik_given_residuals, residual_coefficients, MixState, TWO_PI};
pub use updates::spectral_target_grad;
pub(crate) use updates::{gibbs_sweep, FaultInjection};

use nalgebra::DMatrix;
use rand::Rng;

use crate::config::{PriorConfig, SamplerSettings};
use crate::error::Result;
use crate::graph::DagWeights;
use crate::priors::{HorseshoeState, NoiseScale, ShrinkageState, TaskCorrelation};
use crate::spectral::SpectralParams;

/// Adaptive proposal scales (stored as log step sizes). Adaptation runs only
/// during burn-in; afterwards every scale is frozen and the per-iteration
/// history makes that checkable.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    pub mala_log: f64,
    pub angle_log: Vec<f64>,
    pub lambda_log: f64,
    pub rotation_log: Vec<f64>,
    pub frozen: bool,
    pub history: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub mala_log: f64,
    pub first_angle_log: f64,
    pub lambda_log: f64,
}

impl StepSizes {
    fn new(settings: &SamplerSettings, n_angles: usize, n_rotation: usize) -> Self {
        Self {
            mala_log: settings.mala_step_init.ln(),
            angle_log: vec![settings.rw_step_init.ln(); n_angles],
            lambda_log: settings.lambda_step_init.ln(),
            rotation_log: vec![settings.rotation_step_init.ln(); n_rotation],
            frozen: false,
            history: Vec::new(),
        }
    }

    fn record(&mut self, iteration: usize) {
        self.history.push(StepRecord {
            iteration,
            mala_log: self.mala_log,
            first_angle_log: self.angle_log.first().copied().unwrap_or(0.0),
            lambda_log: self.lambda_log,
        });
    }

    /// Robbins-Monro step toward the target acceptance rate.
    pub(crate) fn adapt(log_step: &mut f64, iteration: usize, observed: f64, target: f64) {
        let gamma = (1.0 + iteration as f64).powf(-0.6).min(0.25);
        *log_step = (*log_step + gamma * (observed - target)).clamp(-12.0, 4.0);
    }
}

/// Full state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub w: DagWeights,
    pub noise: NoiseScale,
    pub corr: TaskCorrelation,
    /// Cayley parameters of the orthogonal task rotation U; empty means
    /// U is the identity.
    pub rotation: Vec<f64>,
    pub spectral: SpectralParams,
    pub horseshoe: HorseshoeState,
    pub shrink: ShrinkageState,
    pub steps: StepSizes,
    pub iteration: usize,
}

impl ChainState {
    /// Deterministic-given-seed initialization: hyperparameters from their
    /// priors, W at zero, factors forward-drawn from the shrinkage state.
    pub fn init<R: Rng + ?Sized>(
        n_vars: usize,
        n_tasks: usize,
        settings: &SamplerSettings,
        priors: &PriorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let horseshoe = HorseshoeState::sample_prior(n_vars, rng);
        let noise = NoiseScale::sample_prior(n_vars, &priors.stick_breaking, rng)?;
        let corr = TaskCorrelation::sample_prior(n_tasks, &priors.polar, rng)?;
        let shrink = ShrinkageState::sample_prior(
            n_tasks,
            n_vars,
            settings.n_basis,
            settings.rank,
            &priors.shrinkage,
            rng,
        );
        let spectral = shrink.sample_factors(rng)?;
        let n_angles = n_tasks * (n_tasks - 1) / 2;
        let n_rotation = if settings.update_rotation { n_angles } else { 0 };
        Ok(Self {
            w: DagWeights::zeros(n_vars),
            noise,
            corr,
            rotation: vec![0.0; n_rotation],
            spectral,
            horseshoe,
            shrink,
            steps: StepSizes::new(settings, n_angles, n_rotation),
            iteration: 0,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.w.dim()
    }

    pub fn n_tasks(&self) -> usize {
        self.corr.n_tasks()
    }

    /// The orthogonal rotation U implied by the Cayley parameters.
    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        cayley_rotation(&self.rotation, self.n_tasks())
    }

    /// Task mixing matrix M = B U.
    pub fn mixing_matrix(&self, priors: &PriorConfig) -> DMatrix<f64> {
        let b = self.corr.build_b(&priors.polar);
        if self.rotation.is_empty() {
            b
        } else {
            b * self.rotation_matrix()
        }
    }
}

/// U = (I - K)(I + K)^{-1} for the skew-symmetric K packed in `params`
/// (strict lower triangle, row by row).
pub(crate) fn cayley_rotation(params: &[f64], s: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(s, s);
    let mut idx = 0;
    for i in 1..s {
        for j in 0..i {
            if idx < params.len() {
                k[(i, j)] = params[idx];
                k[(j, i)] = -params[idx];
                idx += 1;
            }
        }
    }
    let eye = DMatrix::identity(s, s);
    let plus = (&eye + &k).lu();
    plus
        .solve(&(eye - k))
        .expect("I + K is always invertible for skew-symmetric K")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_is_orthogonal() {
        let u = cayley_rotation(&[0.3, -0.7, 0.2], 3);
        let should_be_eye = &u * u.transpose();
        assert!((should_be_eye - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn empty_cayley_is_identity() {
        let u = cayley_rotation(&[], 2);
        assert!((u - DMatrix::identity(2, 2)).norm() == 0.0);
    }
}
