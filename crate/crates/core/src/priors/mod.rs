//! Prior components of the model and their Gibbs machinery: the horseshoe on
//! W, the stick-breaking mixture on the noise scales, the soft-thresholded
//! polar angles of the task-correlation factor, and the cumulative shrinkage
//! prior on the CP factors.

pub mod gig;
mod horseshoe;
mod polar;
mod shrinkage;
mod stickbreak;

pub use horseshoe::HorseshoeState;
pub use polar::{polar_build, soft_threshold, AnglePriorKind, PolarConfig, TaskCorrelation};
pub use shrinkage::{
    second_difference_penalty, ShrinkageBlock, ShrinkageConfig, ShrinkageState,
};
pub use stickbreak::{DSufficientStats, NoiseScale, StickBreakingConfig};

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Inverse-gamma draw with density proportional to x^{-shape-1} e^{-scale/x}.
pub(crate) fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("valid inverse-gamma parameters");
    let draw: f64 = g.sample(rng);
    (1.0 / draw).clamp(1e-300, 1e300)
}

/// Gamma draw parameterized by shape and *rate*.
pub(crate) fn sample_gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    g.sample(rng)
}

/// One-dimensional slice sampler (stepping out + shrinkage) for log-concave
/// or mildly multimodal conditionals without conjugate form.
pub(crate) fn slice_sample_1d<R: Rng + ?Sized>(
    rng: &mut R,
    x0: f64,
    log_density: impl Fn(f64) -> f64,
    width: f64,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    let f0 = log_density(x0);
    if !f0.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "slice sampler started at zero-density point x0={x0}"
        )));
    }
    let level = f0 + rng.random::<f64>().ln();
    let mut lo = (x0 - width * rng.random::<f64>()).max(lower);
    let mut hi = (lo + width).min(upper);
    for _ in 0..64 {
        if lo <= lower || log_density(lo) < level {
            break;
        }
        lo = (lo - width).max(lower);
    }
    for _ in 0..64 {
        if hi >= upper || log_density(hi) < level {
            break;
        }
        hi = (hi + width).min(upper);
    }
    for _ in 0..200 {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if log_density(x) >= level {
            return Ok(x);
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Ok(x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inv_gamma_moments() {
        // IG(shape 3, scale 4): mean = 4/2 = 2, var = 16/(4*1) = 4.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_inv_gamma(&mut rng, 3.0, 4.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn slice_sampler_targets_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let logf = |x: f64| -0.5 * (x - 1.5) * (x - 1.5) / 0.25;
        let mut x = 0.0;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 50_000;
        for _ in 0..n {
            x = slice_sample_1d(&mut rng, x, logf, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - 1.5).abs() < 0.02, "mean {mean}");
        assert!((var - 0.25).abs() < 0.02, "var {var}");
    }
}
