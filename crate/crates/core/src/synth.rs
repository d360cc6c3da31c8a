//! Synthetic benchmark generator: random DAGs with two-sided uniform weights,
//! folded-normal noise scales, a small-world task correlation, and three
//! latent stationary process families (exponential GP, cosine-mixture GP,
//! ARMA(1,1)).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DagWeights;
use crate::series::MatrixSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Exponential,
    Cosine,
    Arma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub p: usize,
    pub s: usize,
    pub t: usize,
    pub expected_neighbors: f64,
    pub kernel: KernelKind,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: 10,
            s: 3,
            t: 48,
            expected_neighbors: 2.0,
            kernel: KernelKind::Exponential,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.s < 1 || self.t < 4 {
            return Err(Error::Config(format!(
                "data dimensions must satisfy p >= 2, S >= 1, T >= 4; got p={}, S={}, T={}",
                self.p, self.s, self.t
            )));
        }
        if !(self.expected_neighbors > 0.0) || self.expected_neighbors >= self.p as f64 {
            return Err(Error::Config(format!(
                "data.expected_neighbors must lie in (0, p); got {}",
                self.expected_neighbors
            )));
        }
        Ok(())
    }
}

/// Everything the generator drew: the true weights, scales, task correlation,
/// and the latent unit-variance processes.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub w: DagWeights,
    pub d: Vec<f64>,
    pub q: DMatrix<f64>,
    pub latents: MatrixSeries,
}

/// Uniformly random topological order, then each order-compatible edge kept
/// independently with probability expected_neighbors / (p - 1); weights from
/// Unif((-2, -0.5) u (0.5, 2)).
pub fn random_dag<R: Rng + ?Sized>(p: usize, expected_neighbors: f64, rng: &mut R) -> DagWeights {
    let mut order: Vec<usize> = (0..p).collect();
    // Fisher-Yates
    for i in (1..p).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let prob = expected_neighbors / (p as f64 - 1.0);
    let mut w = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            if rng.random::<f64>() < prob {
                // order[a] precedes order[b]: edge order[a] -> order[b]
                let weight = sample_edge_weight(rng);
                w[(order[b], order[a])] = weight;
            }
        }
    }
    DagWeights::from_matrix(w).expect("construction keeps the diagonal zero")
}

fn sample_edge_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mag = 0.5 + 1.5 * rng.random::<f64>();
    if rng.random::<f64>() < 0.5 {
        mag
    } else {
        -mag
    }
}

/// Absolute values of N(7, variance 2) draws.
pub fn sample_noise_scales<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(7.0, 2.0f64.sqrt()).expect("valid normal");
    (0..p).map(|_| normal.sample(rng).abs()).collect()
}

/// Small-world-structured sparse precision, inverted and rescaled to a
/// correlation matrix. Blocks of about five tasks each get a rewired ring
/// lattice; the precision is made diagonally dominant on that support.
pub fn sample_task_correlation<R: Rng + ?Sized>(s: usize, rng: &mut R) -> DMatrix<f64> {
    let support = small_world_support(s, rng);
    let precision = fill_precision(&support, rng);
    let sigma = precision
        .clone()
        .try_inverse()
        .expect("diagonally dominant precision is invertible");
    let mut q = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            q[(i, j)] = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
        }
    }
    q
}

/// Symmetric boolean support of the small-world precision (diagonal false).
pub(crate) fn small_world_support<R: Rng + ?Sized>(s: usize, rng: &mut R) -> DMatrix<bool> {
    let mut support = DMatrix::from_element(s, s, false);
    let n_blocks = (s as f64 / 5.0).round().max(1.0) as usize;
    let base = s / n_blocks;
    let extra = s % n_blocks;
    let mut start = 0;
    for b in 0..n_blocks {
        let size = base + usize::from(b < extra);
        if size >= 2 {
            // ring lattice of nearest neighbors with rewiring
            for i in 0..size {
                let j = (i + 1) % size;
                if i == j {
                    continue;
                }
                let (mut a, mut c) = (start + i, start + j);
                if size > 3 && rng.random::<f64>() < 0.2 {
                    // rewire within the block
                    let r = start + rng.random_range(0..size);
                    if r != a {
                        c = r;
                    }
                }
                if a > c {
                    std::mem::swap(&mut a, &mut c);
                }
                support[(a, c)] = true;
                support[(c, a)] = true;
            }
        }
        start += size;
    }
    support
}

fn fill_precision<R: Rng + ?Sized>(support: &DMatrix<bool>, rng: &mut R) -> DMatrix<f64> {
    let s = support.nrows();
    let mut prec = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            if support[(i, j)] {
                let mag = 0.2 + 0.3 * rng.random::<f64>();
                let v = if rng.random::<f64>() < 0.5 { mag } else { -mag };
                prec[(i, j)] = v;
                prec[(j, i)] = v;
            }
        }
    }
    for i in 0..s {
        let row_sum: f64 = (0..s).filter(|&j| j != i).map(|j| prec[(i, j)].abs()).sum();
        prec[(i, i)] = row_sum + 0.5 + rng.random::<f64>();
    }
    prec
}

/// Draws the p*S latent unit-variance component processes.
pub fn simulate_latent<R: Rng + ?Sized>(
    kernel: KernelKind,
    s: usize,
    p: usize,
    t: usize,
    rng: &mut R,
) -> Result<MatrixSeries> {
    let mut z = MatrixSeries::zeros(p, s, t)?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    for k in 0..p {
        for task in 0..s {
            let comp = z.component_mut(k, task);
            match kernel {
                KernelKind::Exponential => {
                    // OU on the integer grid: AR(1) with phi = exp(-1/range)
                    // reproduces the exponential kernel exactly.
                    let range = 10.0 * rng.random::<f64>();
                    let phi = (-1.0 / range.max(1e-12)).exp();
                    let innov = (1.0 - phi * phi).sqrt();
                    let mut prev: f64 = std_normal.sample(rng);
                    for v in comp.iter_mut() {
                        *v = prev;
                        prev = phi * prev + innov * std_normal.sample(rng);
                    }
                }
                KernelKind::Cosine => {
                    let m = rng.random_range(1..=t);
                    let k0: f64 = (1..=m).map(|h| 1.0 / (h as f64 * h as f64)).sum();
                    let scale = 1.0 / k0.sqrt();
                    let coeffs: Vec<(f64, f64, f64)> = (1..=m)
                        .map(|h| {
                            (
                                1.0 / h as f64, // sqrt(a_h)
                                std_normal.sample(rng),
                                std_normal.sample(rng),
                            )
                        })
                        .collect();
                    for (i, v) in comp.iter_mut().enumerate() {
                        let ti = i as f64 / t as f64;
                        let mut acc = 0.0;
                        for (h, &(amp, a, b)) in coeffs.iter().enumerate() {
                            let arg = (h as f64 + 1.0) * std::f64::consts::PI * ti;
                            acc += amp * (a * arg.cos() + b * arg.sin());
                        }
                        *v = acc * scale;
                    }
                }
                KernelKind::Arma => {
                    let phi = sample_strong_coeff(rng);
                    let theta = sample_strong_coeff(rng);
                    let sigma_e2 = (1.0 - phi * phi) / (1.0 + 2.0 * theta * phi + theta * theta);
                    let sd = sigma_e2.sqrt();
                    let mut z_prev = 0.0;
                    let mut e_prev = 0.0;
                    for _ in 0..200 {
                        let e = sd * std_normal.sample(rng);
                        z_prev = phi * z_prev + theta * e_prev + e;
                        e_prev = e;
                    }
                    for v in comp.iter_mut() {
                        let e = sd * std_normal.sample(rng);
                        z_prev = phi * z_prev + theta * e_prev + e;
                        e_prev = e;
                        *v = z_prev;
                    }
                }
            }
        }
    }
    Ok(z)
}

fn sample_strong_coeff<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mag = 0.9 + 0.1 * rng.random::<f64>();
    if rng.random::<f64>() < 0.5 {
        mag
    } else {
        -mag
    }
}

/// Exact forward map Y^{(s)} = (I - W)^{-1} D^{1/2} X^{(s)} with
/// X_{k,.} = B Z_{k,.} and B the Cholesky factor of Q.
pub fn forward_simulate(truth: &GroundTruth) -> Result<MatrixSeries> {
    let p = truth.w.dim();
    let s = truth.latents.n_tasks();
    let t = truth.latents.n_time();
    if truth.latents.n_vars() != p || truth.d.len() != p || truth.q.nrows() != s {
        return Err(Error::DimensionMismatch(
            "ground truth pieces disagree on dimensions".into(),
        ));
    }
    let b = truth
        .q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("task correlation not positive definite".into()))?;
    let b = b.l();
    let eye = DMatrix::identity(p, p);
    let lu = (eye - truth.w.matrix()).lu();
    if lu.determinant().abs() < 1e-12 {
        return Err(Error::SingularSystem("I - W is numerically singular".into()));
    }

    let mut y = MatrixSeries::zeros(p, s, t)?;
    let mut zvec = DVector::zeros(s);
    let mut rvec = DVector::zeros(p);
    for time in 0..t {
        // mix tasks per variable, scale, then solve the SEM
        let mut r = DMatrix::zeros(p, s);
        for k in 0..p {
            for task in 0..s {
                zvec[task] = truth.latents.get(k, task, time);
            }
            let x = &b * &zvec;
            for task in 0..s {
                r[(k, task)] = truth.d[k].sqrt() * x[task];
            }
        }
        for task in 0..s {
            for k in 0..p {
                rvec[k] = r[(k, task)];
            }
            let yv = lu.solve(&rvec).expect("checked determinant");
            for k in 0..p {
                y.set(k, task, time, yv[k]);
            }
        }
    }
    Ok(y)
}

/// Full generation pass for one replicate.
pub fn generate<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(GroundTruth, MatrixSeries)> {
    cfg.validate()?;
    let w = random_dag(cfg.p, cfg.expected_neighbors, rng);
    let d = sample_noise_scales(cfg.p, rng);
    let q = sample_task_correlation(cfg.s, rng);
    let latents = simulate_latent(cfg.kernel, cfg.s, cfg.p, cfg.t, rng)?;
    let truth = GroundTruth { w, d, q, latents };
    let y = forward_simulate(&truth)?;
    Ok((truth, y))
}

/// Serializable ground-truth record. Indices in the edge list are 1-based to
/// match the CSV column naming.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub p: usize,
    pub s: usize,
    pub t: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    pub edges: Vec<TruthEdge>,
    pub d: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthEdge {
    pub parent: usize,
    pub child: usize,
    pub weight: f64,
}

impl TruthFile {
    pub fn new(cfg: &SimConfig, truth: &GroundTruth) -> Self {
        let p = truth.w.dim();
        let wm = truth.w.matrix();
        let mut edges = Vec::new();
        for child in 0..p {
            for parent in 0..p {
                if wm[(child, parent)] != 0.0 {
                    edges.push(TruthEdge {
                        parent: parent + 1,
                        child: child + 1,
                        weight: wm[(child, parent)],
                    });
                }
            }
        }
        let q = (0..truth.q.nrows())
            .map(|i| (0..truth.q.ncols()).map(|j| truth.q[(i, j)]).collect())
            .collect();
        Self {
            p,
            s: cfg.s,
            t: cfg.t,
            seed: cfg.seed,
            kernel: cfg.kernel,
            edges,
            d: truth.d.clone(),
            q,
        }
    }

    pub fn weights(&self) -> Result<DagWeights> {
        let mut w = DMatrix::zeros(self.p, self.p);
        for e in &self.edges {
            if e.parent == 0 || e.child == 0 || e.parent > self.p || e.child > self.p {
                return Err(Error::Schema(format!(
                    "edge ({}, {}) outside 1..={}",
                    e.parent, e.child, self.p
                )));
            }
            w[(e.child - 1, e.parent - 1)] = e.weight;
        }
        DagWeights::from_matrix(w)
    }
}

/// Derives a decorrelated child seed; used to give replicates and chains
/// independent streams from one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 step
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_dag_always_acyclic_with_valid_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let w = random_dag(8, 2.0, &mut rng);
            assert!(w.support(0.0).is_acyclic());
            for v in w.matrix().iter() {
                if *v != 0.0 {
                    assert!((0.5..=2.0).contains(&v.abs()), "weight {v}");
                }
            }
        }
    }

    #[test]
    fn random_dag_expected_edge_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0usize;
        let n = 1000;
        for _ in 0..n {
            total += random_dag(40, 2.0, &mut rng).support(0.0).edge_count();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 40.0).abs() < 3.0, "mean edge count {mean}");
    }

    #[test]
    fn noise_scales_positive_with_mean_seven() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = sample_noise_scales(100_000, &mut rng);
        assert!(draws.iter().all(|d| *d > 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 7.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn noise_scales_reproducible() {
        let a = sample_noise_scales(5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_noise_scales(5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn task_correlation_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &s in &[3usize, 5, 15] {
            let q = sample_task_correlation(s, &mut rng);
            for i in 0..s {
                assert_abs_diff_eq!(q[(i, i)], 1.0, epsilon = 1e-12);
            }
            assert!(q.clone().cholesky().is_some(), "Q not PD at S={s}");
        }
    }

    #[test]
    fn precision_support_respects_blocks() {
        // Off-block precision entries must be zero before inversion.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let support = small_world_support(15, &mut rng);
        let blocks = [(0usize, 5usize), (5, 10), (10, 15)];
        for i in 0..15 {
            for j in 0..15 {
                if support[(i, j)] {
                    let bi = blocks.iter().position(|&(a, b)| i >= a && i < b);
                    let bj = blocks.iter().position(|&(a, b)| j >= a && j < b);
                    assert_eq!(bi, bj, "support edge ({i},{j}) crosses blocks");
                }
            }
        }
    }

    #[test]
    fn arma_innovation_variance_formula() {
        let phi = 0.9f64;
        let theta = 0.9f64;
        let sigma_e2 = (1.0 - phi * phi) / (1.0 + 2.0 * theta * phi + theta * theta);
        assert_abs_diff_eq!(sigma_e2, 0.19 / 3.43, epsilon = 1e-12);
        assert!((sigma_e2 - 0.05539).abs() < 1e-5);
    }

    #[test]
    fn latent_components_have_unit_variance() {
        // Exponential and ARMA mix, so per-component time averages
        // concentrate at one. The cosine kernel is a finite random Fourier
        // series (non-ergodic): its unit variance is an ensemble property,
        // so average the time-averaged variances over many components.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = 10_000;
        for kernel in [KernelKind::Exponential, KernelKind::Arma] {
            let z = simulate_latent(kernel, 1, 2, t, &mut rng).unwrap();
            for k in 0..2 {
                let comp = z.component(k, 0);
                let mean = comp.iter().sum::<f64>() / t as f64;
                let var = comp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
                assert!(
                    (var - 1.0).abs() < 0.25,
                    "{kernel:?} component variance {var}"
                );
            }
        }
        let z = simulate_latent(KernelKind::Cosine, 1, 400, 64, &mut rng).unwrap();
        let mut acc = 0.0;
        for k in 0..400 {
            let comp = z.component(k, 0);
            let mean = comp.iter().sum::<f64>() / comp.len() as f64;
            acc += comp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / comp.len() as f64;
        }
        let mean_var = acc / 400.0;
        assert!(
            (mean_var - 1.0).abs() < 0.15,
            "cosine ensemble variance {mean_var}"
        );
    }

    #[test]
    fn cosine_process_pointwise_unit_variance() {
        // The raw spectral sum has K(0) = sum 1/h^2; after dividing by
        // sqrt(K(0)) every time point has variance one, whatever M was drawn.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let z = simulate_latent(KernelKind::Cosine, 1, 4000, 16, &mut rng).unwrap();
        for t in [0usize, 7, 15] {
            let vals: Vec<f64> = (0..4000).map(|k| z.get(k, 0, t)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!((var - 1.0).abs() < 0.08, "variance {var} at t={t}");
        }
    }

    #[test]
    fn forward_simulate_identity_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let latents = simulate_latent(KernelKind::Exponential, 1, 3, 32, &mut rng).unwrap();
        let truth = GroundTruth {
            w: DagWeights::zeros(3),
            d: vec![1.0; 3],
            q: DMatrix::identity(1, 1),
            latents: latents.clone(),
        };
        let y = forward_simulate(&truth).unwrap();
        for k in 0..3 {
            for t in 0..32 {
                assert_abs_diff_eq!(y.get(k, 0, t), latents.get(k, 0, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residual_recovers_scaled_mixed_latents() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = SimConfig {
            p: 5,
            s: 3,
            t: 24,
            expected_neighbors: 2.0,
            kernel: KernelKind::Arma,
            seed: 0,
        };
        let (truth, y) = generate(&cfg, &mut rng).unwrap();
        let r = crate::series::residual_series(&y, &truth.w).unwrap();
        let b = truth.q.clone().cholesky().unwrap();
        let b = b.l();
        for k in 0..5 {
            for task in 0..3 {
                for t in 0..24 {
                    let mut x = 0.0;
                    for j in 0..3 {
                        x += b[(task, j)] * truth.latents.get(k, j, t);
                    }
                    let expect = truth.d[k].sqrt() * x;
                    assert_abs_diff_eq!(r.get(k, task, t), expect, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn task_covariance_matches_d_times_q() {
        // Sample covariance across time of the residual rows approaches
        // d_k * Q for long series.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = SimConfig {
            p: 3,
            s: 3,
            t: 10_000,
            expected_neighbors: 1.5,
            kernel: KernelKind::Exponential,
            seed: 0,
        };
        let (truth, y) = generate(&cfg, &mut rng).unwrap();
        let r = crate::series::residual_series(&y, &truth.w).unwrap();
        for k in 0..3 {
            let mut cov = DMatrix::zeros(3, 3);
            for t in 0..cfg.t {
                for a in 0..3 {
                    for b in 0..3 {
                        cov[(a, b)] += r.get(k, a, t) * r.get(k, b, t);
                    }
                }
            }
            cov /= cfg.t as f64;
            let expect = truth.q.clone() * truth.d[k];
            let rel = (cov - &expect).norm() / expect.norm();
            assert!(rel < 0.15, "variable {k}: relative error {rel}");
        }
    }

    #[test]
    fn seed_derivation_decorrelates() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
