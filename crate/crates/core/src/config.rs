//! Run configuration: a single JSON document with sections
//! {data, prior, sampler, projection, threshold}. Every field has a default,
//! so partial documents are valid.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::priors::{PolarConfig, ShrinkageConfig, StickBreakingConfig};
use crate::synth::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub data: SimConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerSettings,
    pub projection: ProjectionSettings,
    pub threshold: ThresholdSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PriorConfig {
    pub stick_breaking: StickBreakingConfig,
    pub polar: PolarConfig,
    pub shrinkage: ShrinkageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    /// Number of B-spline basis functions J.
    pub n_basis: usize,
    /// CP rank R.
    pub rank: usize,
    pub degree: usize,
    /// Diagonal jitter added to conditional precisions before factorization.
    pub jitter: f64,
    pub mala_step_init: f64,
    pub mala_target_accept: f64,
    pub rw_step_init: f64,
    pub rw_target_accept: f64,
    pub lambda_step_init: f64,
    /// Enables the Cayley-parameterized Metropolis update of the orthogonal
    /// task rotation U; off by default (U fixed at the identity).
    pub update_rotation: bool,
    pub rotation_step_init: f64,
    /// Truncation device on the W prior: singular values of I - W must stay
    /// inside [w_singular_lo, w_singular_hi]. Keeps the unrestricted SEM away
    /// from the singular manifold without touching any other conditional.
    pub w_singular_lo: f64,
    pub w_singular_hi: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burnin: 2500,
            thin: 5,
            chains: 1,
            n_basis: 10,
            rank: 3,
            degree: 3,
            jitter: 1e-8,
            mala_step_init: 0.02,
            mala_target_accept: 0.574,
            rw_step_init: 0.5,
            rw_target_accept: 0.30,
            lambda_step_init: 0.3,
            update_rotation: false,
            rotation_step_init: 0.2,
            w_singular_lo: 1e-3,
            w_singular_hi: 1e3,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "sampler.iterations ({}) must exceed sampler.burnin ({})",
                self.iterations, self.burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("sampler.thin must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("sampler.chains must be positive".into()));
        }
        if self.n_basis < 4 {
            return Err(Error::Config("sampler.n_basis must be at least 4".into()));
        }
        if self.rank == 0 {
            return Err(Error::Config("sampler.rank must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of archived draws per chain.
    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burnin).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionSettings {
    /// Adaptive LASSO weight exponent; weights are 1/|beta_A|^zeta.
    pub zeta: f64,
    /// Cap applied to adaptive weights when the preliminary estimate is zero.
    pub weight_cap: f64,
    pub cv_folds: usize,
    pub lambda_grid_size: usize,
    /// Smallest grid value as a fraction of lambda_max.
    pub lambda_grid_min_ratio: f64,
    pub alpha_init: f64,
    pub rho_init: f64,
    pub rho_max: f64,
    pub rho_growth: f64,
    /// The acyclicity value must drop by this factor per outer round,
    /// otherwise rho is increased.
    pub h_drop_factor: f64,
    pub h_tol: f64,
    pub max_outer: usize,
    pub lbfgs_memory: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Project every `project_thin`-th archived draw.
    pub project_thin: usize,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            weight_cap: 1e6,
            cv_folds: 5,
            lambda_grid_size: 50,
            lambda_grid_min_ratio: 1e-4,
            alpha_init: 0.0,
            rho_init: 1.0,
            rho_max: 1e16,
            rho_growth: 10.0,
            h_drop_factor: 4.0,
            h_tol: 1e-8,
            max_outer: 30,
            lbfgs_memory: 10,
            max_iter: 500,
            tol: 1e-6,
            project_thin: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSettings {
    /// Magnitude cutoff H of the majority-vote rule.
    pub h: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self { h: 0.3 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("failed to parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.sampler.validate()?;
        if self.projection.cv_folds < 2 {
            return Err(Error::Config("projection.cv_folds must be >= 2".into()));
        }
        if self.projection.lambda_grid_size == 0 {
            return Err(Error::Config(
                "projection.lambda_grid_size must be >= 1".into(),
            ));
        }
        if self.threshold.h < 0.0 {
            return Err(Error::Config("threshold.h must be nonnegative".into()));
        }
        Ok(())
    }

    /// Content hash of the canonical JSON form, for run manifests.
    pub fn content_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex_digest(canon.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg =
            RunConfig::from_json(r#"{"sampler": {"iterations": 100, "burnin": 50}}"#).unwrap();
        assert_eq!(cfg.sampler.iterations, 100);
        assert_eq!(cfg.sampler.thin, 5);
        assert_eq!(cfg.threshold.h, 0.3);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(RunConfig::from_json(r#"{"sampler": {"iterations": 10, "burnin": 20}}"#).is_err());
        assert!(RunConfig::from_json("not json").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.content_hash(), b.content_hash());
        b.threshold.h = 0.4;
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn draw_count_formula() {
        let s = SamplerSettings {
            iterations: 2000,
            burnin: 1000,
            thin: 5,
            ..Default::default()
        };
        assert_eq!(s.n_draws(), 200);
    }
}
