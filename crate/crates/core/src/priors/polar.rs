//! Polar (spherical-coordinate) parameterization of the lower-triangular
//! factor B with Q = B B^T a correlation matrix, plus the soft-threshold
//! prior that shrinks angles toward pi/2 (zeroing the corresponding factor
//! entries).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::link;

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnglePriorKind {
    /// a* = pi * Psi(u) with u ~ N(0, sigma_t2); the default.
    LatentNormal,
    /// a*/pi ~ Beta(a, a).
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolarConfig {
    pub angle_prior: AnglePriorKind,
    /// Variance of the latent normal under [`AnglePriorKind::LatentNormal`].
    pub sigma_t2: f64,
    /// Symmetric Beta parameter under [`AnglePriorKind::Beta`].
    pub beta_a: f64,
    /// Uniform prior bounds for the soft-threshold parameter.
    pub lambda_lower: f64,
    pub lambda_upper: f64,
}

impl Default for PolarConfig {
    fn default() -> Self {
        Self {
            angle_prior: AnglePriorKind::LatentNormal,
            sigma_t2: 1.0,
            beta_a: 1.0,
            lambda_lower: 0.0,
            lambda_upper: PI / 2.0,
        }
    }
}

/// Soft threshold toward pi/2:
/// a = sign(a* - pi/2) (|a* - pi/2| - lambda)_+ + pi/2.
#[inline]
pub fn soft_threshold(a_star: f64, lambda: f64) -> f64 {
    let centered = a_star - PI / 2.0;
    centered.signum() * (centered.abs() - lambda).max(0.0) + PI / 2.0
}

/// Lower-triangular spherical factor from per-row angles in [0, pi].
/// `angles[l]` holds the l+1 angles of row l+1 (row 0 is e_1). Every row has
/// unit Euclidean norm; the last entry of each row is the full sine product.
pub fn polar_build(angles: &[Vec<f64>]) -> DMatrix<f64> {
    let s = angles.len() + 1;
    let mut b = DMatrix::zeros(s, s);
    b[(0, 0)] = 1.0;
    for (row_idx, row_angles) in angles.iter().enumerate() {
        let l = row_idx + 1;
        debug_assert_eq!(row_angles.len(), l);
        let mut sin_prod = 1.0;
        for (k, &a) in row_angles.iter().enumerate() {
            b[(l, k)] = sin_prod * a.cos();
            sin_prod *= a.sin();
        }
        b[(l, l)] = sin_prod;
    }
    b
}

/// Latent state of the task-correlation block.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCorrelation {
    /// Packed rows 2..=S. Meaning depends on the angle prior: latent normals
    /// (default) or raw angles a* in (0, pi) under the Beta prior.
    pub latent: Vec<f64>,
    /// Soft-threshold level, in [lambda_lower, lambda_upper].
    pub threshold: f64,
    n_tasks: usize,
}

pub(crate) fn angle_count(n_tasks: usize) -> usize {
    n_tasks * (n_tasks - 1) / 2
}

impl TaskCorrelation {
    pub fn identity(n_tasks: usize) -> Self {
        // pi/2 angles give B = I; the latent-normal origin maps there.
        Self {
            latent: vec![0.0; angle_count(n_tasks)],
            threshold: 0.0,
            n_tasks,
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(
        n_tasks: usize,
        cfg: &PolarConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n = angle_count(n_tasks);
        let latent = match cfg.angle_prior {
            AnglePriorKind::LatentNormal => {
                let normal = Normal::new(0.0, cfg.sigma_t2.sqrt())
                    .map_err(|e| Error::Config(format!("sigma_t2: {e}")))?;
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            AnglePriorKind::Beta => {
                let beta = Beta::new(cfg.beta_a, cfg.beta_a)
                    .map_err(|e| Error::Config(format!("beta_a: {e}")))?;
                (0..n).map(|_| PI * beta.sample(rng)).collect()
            }
        };
        let unif = Uniform::new_inclusive(cfg.lambda_lower, cfg.lambda_upper)
            .map_err(|e| Error::Config(format!("lambda bounds: {e}")))?;
        Ok(Self {
            latent,
            threshold: unif.sample(rng),
            n_tasks,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    /// Raw angles a* in (0, pi), before soft thresholding.
    pub fn angles_raw(&self, cfg: &PolarConfig) -> Vec<f64> {
        match cfg.angle_prior {
            AnglePriorKind::LatentNormal => self.latent.iter().map(|&u| PI * link(u)).collect(),
            AnglePriorKind::Beta => self.latent.clone(),
        }
    }

    /// Thresholded angles grouped by row (row l has l angles).
    pub fn angle_rows(&self, cfg: &PolarConfig) -> Vec<Vec<f64>> {
        let raw = self.angles_raw(cfg);
        let mut rows = Vec::with_capacity(self.n_tasks.saturating_sub(1));
        let mut idx = 0;
        for l in 1..self.n_tasks {
            let row: Vec<f64> = raw[idx..idx + l]
                .iter()
                .map(|&a| soft_threshold(a, self.threshold))
                .collect();
            idx += l;
            rows.push(row);
        }
        rows
    }

    /// The lower-triangular factor implied by the current state.
    pub fn build_b(&self, cfg: &PolarConfig) -> DMatrix<f64> {
        polar_build(&self.angle_rows(cfg))
    }

    /// Log prior density of one latent coordinate.
    pub fn log_prior_latent(&self, value: f64, cfg: &PolarConfig) -> f64 {
        match cfg.angle_prior {
            AnglePriorKind::LatentNormal => {
                -0.5 * value * value / cfg.sigma_t2 - 0.5 * (2.0 * PI * cfg.sigma_t2).ln()
            }
            AnglePriorKind::Beta => {
                let x = value / PI;
                if !(0.0..1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let a = cfg.beta_a;
                (a - 1.0) * (x.ln() + (1.0 - x).ln()) - log_beta_fn(a, a) - PI.ln()
            }
        }
    }
}

fn log_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos log-gamma.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, &g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}
