//! Small statistical test helpers shared by the validation suites.

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
/// `sorted` must be ascending.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic two-sided KS p-value via the Kolmogorov distribution.
pub fn ks_pvalue(n: usize, d: f64) -> f64 {
    let t = (n as f64).sqrt() * d;
    let mut p = 0.0;
    for k in 1..101 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Sample mean and the batch-means standard error of the mean, for z-scores
/// on autocorrelated chains.
pub fn mean_and_batch_se(samples: &[f64], n_batches: usize) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let b = n_batches.min(n).max(2);
    let batch_len = n / b;
    let mut batch_means = Vec::with_capacity(b);
    for i in 0..b {
        let chunk = &samples[i * batch_len..(i + 1) * batch_len];
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let bm = batch_means.iter().sum::<f64>() / b as f64;
    let var_bm = batch_means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (b as f64 - 1.0);
    (mean, (var_bm / b as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_accepts_uniform_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks_pvalue(xs.len(), d) > 0.01);
    }

    #[test]
    fn ks_rejects_shifted_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powi(2)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks_pvalue(xs.len(), d) < 1e-6);
    }

    #[test]
    fn batch_se_shrinks_with_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small: Vec<f64> = (0..1_000).map(|_| rng.random::<f64>()).collect();
        let large: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let (_, se_small) = mean_and_batch_se(&small, 50);
        let (_, se_large) = mean_and_batch_se(&large, 50);
        assert!(se_large < se_small);
    }
}
