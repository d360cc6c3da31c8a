//! Generalized inverse-Gaussian sampling via ratio-of-uniforms with mode
//! shift. The parameterization is
//!
//!   f(x | p, a, b)  proportional to  x^{p-1} exp(-(a x + b / x) / 2),  x > 0,
//!
//! which covers both the noise-scale atom prior (p = -1/2, a = 1, b = mu^2)
//! and its posterior under Gaussian scale likelihood terms.

use rand::Rng;

use crate::error::{Error, Result};

/// Log unnormalized GIG density.
#[inline]
pub fn log_density_unnorm(x: f64, p: f64, a: f64, b: f64) -> f64 {
    (p - 1.0) * x.ln() - 0.5 * (a * x + b / x)
}

/// Log normalizing constant for the case p = -1/2 (the inverse-Gaussian
/// prior): density = |mu| e^{|mu|} / sqrt(2 pi) * x^{-3/2} e^{-(x + mu^2/x)/2}.
pub fn log_norm_const_half(mu: f64) -> f64 {
    mu.abs().ln() + mu.abs() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Mode of the GIG density: the positive root of the stationarity quadratic.
pub fn mode(p: f64, a: f64, b: f64) -> f64 {
    ((p - 1.0) + ((p - 1.0).powi(2) + a * b).sqrt()) / a
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Scans outward from the mode and refines the extremum of
/// h(x) = (x - m) sqrt(g(x)) on one side; `dir` is +1 (right) or -1 (left).
fn side_extremum(h: impl Fn(f64) -> f64 + Copy, m: f64, width: f64, dir: f64) -> f64 {
    let mut best_x = m;
    let mut best_h = 0.0f64;
    let mut prev_x = m;
    let mut step = width;
    for _ in 0..400 {
        let x = m + dir * step;
        if x <= 0.0 {
            break;
        }
        let hv = h(x);
        if hv.abs() > best_h.abs() {
            best_h = hv;
            best_x = x;
        } else if hv.abs() < 1e-4 * best_h.abs() {
            break;
        }
        prev_x = x;
        step *= 2.0;
        if step > 1e300 {
            break;
        }
    }
    // refine in a bracket around the best point
    let (lo, hi) = if dir > 0.0 {
        ((best_x / 2.0).max(m), (best_x * 2.0).max(prev_x))
    } else {
        ((best_x - (m - best_x)).max(best_x / 2.0).max(1e-300), m)
    };
    let (_, refined) = golden_max(|x| h(x).abs(), lo, hi);
    dir * refined.max(best_h.abs())
}

/// Draws one GIG(p, a, b) variate. Requires a > 0 and b > 0.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, p: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "GIG needs a > 0, b > 0; got a={a}, b={b}"
        )));
    }
    let m = mode(p, a, b);
    let log_fm = log_density_unnorm(m, p, a, b);
    if !log_fm.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "GIG mode density not finite at m={m} (p={p}, a={a}, b={b})"
        )));
    }
    // Curvature-based width for the outward scan.
    let curv = (p - 1.0) / (m * m) + b / (m * m * m);
    let width = if curv > 0.0 && curv.is_finite() {
        (1.0 / curv).sqrt()
    } else {
        m.max(1.0)
    };
    let h = |x: f64| (x - m) * (0.5 * (log_density_unnorm(x, p, a, b) - log_fm)).exp();
    // Safety margin keeps the box a superset of the acceptance region even if
    // the scan lands slightly off the true extremum.
    let v_hi = 1.05 * side_extremum(h, m, width, 1.0).max(f64::MIN_POSITIVE);
    let v_lo = 1.05 * side_extremum(h, m, width, -1.0).min(-f64::MIN_POSITIVE);

    for _ in 0..100_000 {
        let u: f64 = rng.random();
        if u == 0.0 {
            continue;
        }
        let v = v_lo + (v_hi - v_lo) * rng.random::<f64>();
        let x = m + v / u;
        if x <= 0.0 {
            continue;
        }
        if 2.0 * u.ln() <= log_density_unnorm(x, p, a, b) - log_fm {
            return Ok(x);
        }
    }
    Err(Error::NumericalFailure(format!(
        "GIG rejection sampler stalled (p={p}, a={a}, b={b})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_is_stationary_point() {
        for &(p, a, b) in &[(-0.5, 1.0, 4.0), (-80.0, 1.0, 120.0), (2.0, 3.0, 0.5)] {
            let m = mode(p, a, b);
            let eps = m * 1e-6;
            let d = (log_density_unnorm(m + eps, p, a, b) - log_density_unnorm(m - eps, p, a, b))
                / (2.0 * eps);
            assert!(d.abs() < 1e-5, "gradient {d} at mode for ({p},{a},{b})");
        }
    }

    #[test]
    fn moments_match_inverse_gaussian() {
        // GIG(-1/2, 1, mu^2) is inverse-Gaussian with mean mu and shape mu^2:
        // E X = mu, Var X = mu.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mu = 3.0f64;
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample(&mut rng, -0.5, 1.0, mu * mu).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!((mean - mu).abs() < 0.02, "mean {mean}");
        assert!((var - mu).abs() < 0.15, "var {var}");
    }

    #[test]
    fn extreme_shape_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x = sample(&mut rng, -400.0, 1.0, 900.0).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }
}
