//! Latent spectral densities: normalized B-spline series on [0, 1], the
//! bounded link to simplex weights, and the CP low-rank coefficient tensor.
//!
//! Every density is a symmetric probability density on [-pi, pi], so the
//! latent component processes have unit variance by construction:
//!
//!   f(w) = (1/pi) * sum_j theta_j B*_j(|w|/pi),   sum_j theta_j = 1/2,
//!
//! where B*_j = B_j / integral(B_j) and the 1/pi factor absorbs the change
//! of variables from [0, 1] to [0, pi].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const PI: f64 = std::f64::consts::PI;

/// Cubic by default; degree is configurable through [`BsplineBasis::new`].
pub const DEFAULT_DEGREE: usize = 3;

/// Clamped B-spline basis with equispaced interior knots on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineBasis {
    degree: usize,
    knots: Vec<f64>,
    /// Integral of each raw basis function over [0, 1].
    integrals: Vec<f64>,
}

impl BsplineBasis {
    pub fn new(n_basis: usize, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidBasis("degree must be at least 1".into()));
        }
        if n_basis < degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "need at least degree+1 = {} basis functions, got {n_basis}",
                degree + 1
            )));
        }
        let spans = n_basis - degree;
        let mut knots = Vec::with_capacity(n_basis + degree + 1);
        for _ in 0..=degree {
            knots.push(0.0);
        }
        for i in 1..spans {
            knots.push(i as f64 / spans as f64);
        }
        for _ in 0..=degree {
            knots.push(1.0);
        }
        let integrals = (0..n_basis)
            .map(|j| (knots[j + degree + 1] - knots[j]) / (degree + 1) as f64)
            .collect();
        Ok(Self {
            degree,
            knots,
            integrals,
        })
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Integral of the raw basis function B_j over [0, 1].
    pub fn raw_integral(&self, j: usize) -> f64 {
        self.integrals[j]
    }

    /// Distinct knot values, i.e. the smoothness breakpoints in [0, 1].
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &k in &self.knots {
            if k > *out.last().unwrap() {
                out.push(k);
            }
        }
        out
    }

    fn find_span(&self, u: f64) -> usize {
        let n = self.len();
        let spans = n - self.degree;
        if u >= 1.0 {
            return n - 1;
        }
        let i = (u * spans as f64).floor() as usize;
        (self.degree + i).min(n - 1)
    }

    /// All raw basis values at u in [0, 1] (partition of unity).
    pub fn eval_raw(&self, u: f64) -> Vec<f64> {
        let d = self.degree;
        let span = self.find_span(u);
        let mut local = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        local[0] = 1.0;
        for r in 1..=d {
            left[r] = u - self.knots[span + 1 - r];
            right[r] = self.knots[span + r] - u;
            let mut saved = 0.0;
            for k in 0..r {
                let tmp = local[k] / (right[k + 1] + left[r - k]);
                local[k] = saved + right[k + 1] * tmp;
                saved = left[r - k] * tmp;
            }
            local[r] = saved;
        }
        let mut out = vec![0.0; self.len()];
        for (k, v) in local.into_iter().enumerate() {
            out[span - d + k] = v;
        }
        out
    }

    /// All normalized basis values B*_j(u) = B_j(u) / integral(B_j).
    pub fn eval_normalized(&self, u: f64) -> Vec<f64> {
        let mut vals = self.eval_raw(u);
        for (v, n) in vals.iter_mut().zip(self.integrals.iter()) {
            *v /= n;
        }
        vals
    }
}

/// Normalized B-spline design matrix: rows are grid points, column j holds
/// B*_j evaluated along the grid.
pub fn bspline_basis(n_basis: usize, degree: usize, grid: &[f64]) -> Result<DMatrix<f64>> {
    if grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::OutOfDomain("grid points must lie in [0, 1]".into()));
    }
    let basis = BsplineBasis::new(n_basis, degree)?;
    let mut m = DMatrix::zeros(grid.len(), n_basis);
    for (r, &u) in grid.iter().enumerate() {
        for (c, v) in basis.eval_normalized(u).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

/// Monotone link from the real line onto (0, 1): Psi(u) = (1 + u/(1+|u|))/2.
#[inline]
pub fn link(u: f64) -> f64 {
    0.5 * (1.0 + u / (1.0 + u.abs()))
}

/// Derivative of [`link`]; continuous everywhere.
#[inline]
pub fn link_deriv(u: f64) -> f64 {
    let a = 1.0 + u.abs();
    0.5 / (a * a)
}

/// CP factors of the latent spectral coefficient tensor: kappa_{s,k,j} =
/// sum_r xi_{s,r} chi_{k,r} eta_{j,r}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    pub xi: DMatrix<f64>,  // S x R
    pub chi: DMatrix<f64>, // p x R
    pub eta: DMatrix<f64>, // J x R
}

impl SpectralParams {
    pub fn new(xi: DMatrix<f64>, chi: DMatrix<f64>, eta: DMatrix<f64>) -> Result<Self> {
        let r = xi.ncols();
        if r == 0 {
            return Err(Error::DimensionMismatch("CP rank must be >= 1".into()));
        }
        if chi.ncols() != r || eta.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "CP factor ranks disagree: xi {}, chi {}, eta {}",
                r,
                chi.ncols(),
                eta.ncols()
            )));
        }
        if eta.nrows() < 4 {
            return Err(Error::DimensionMismatch(
                "basis size J must be at least 4".into(),
            ));
        }
        for m in [&xi, &chi, &eta] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure("non-finite CP factor".into()));
            }
        }
        Ok(Self { xi, chi, eta })
    }

    pub fn n_tasks(&self) -> usize {
        self.xi.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.chi.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.eta.nrows()
    }

    pub fn rank(&self) -> usize {
        self.xi.ncols()
    }
}

/// Dense S x p x J tensor with contiguous (s, k) rows of length J.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Vec<f64>,
    n_tasks: usize,
    n_vars: usize,
    n_basis: usize,
}

impl Tensor3 {
    pub fn zeros(n_tasks: usize, n_vars: usize, n_basis: usize) -> Self {
        Self {
            data: vec![0.0; n_tasks * n_vars * n_basis],
            n_tasks,
            n_vars,
            n_basis,
        }
    }

    #[inline]
    pub fn get(&self, s: usize, k: usize, j: usize) -> f64 {
        self.data[(s * self.n_vars + k) * self.n_basis + j]
    }

    #[inline]
    pub fn set(&mut self, s: usize, k: usize, j: usize, v: f64) {
        self.data[(s * self.n_vars + k) * self.n_basis + j] = v;
    }

    pub fn row(&self, s: usize, k: usize) -> &[f64] {
        let o = (s * self.n_vars + k) * self.n_basis;
        &self.data[o..o + self.n_basis]
    }

    pub fn row_mut(&mut self, s: usize, k: usize) -> &mut [f64] {
        let o = (s * self.n_vars + k) * self.n_basis;
        &mut self.data[o..o + self.n_basis]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_tasks, self.n_vars, self.n_basis)
    }
}

/// Exact trilinear contraction of the CP factors.
pub fn cp_kappa(params: &SpectralParams) -> Tensor3 {
    let (s_n, p_n, j_n) = (params.n_tasks(), params.n_vars(), params.n_basis());
    let mut out = Tensor3::zeros(s_n, p_n, j_n);
    for s in 0..s_n {
        for k in 0..p_n {
            let row = out.row_mut(s, k);
            for r in 0..params.rank() {
                let sc = params.xi[(s, r)] * params.chi[(k, r)];
                if sc == 0.0 {
                    continue;
                }
                for (j, v) in row.iter_mut().enumerate() {
                    *v += sc * params.eta[(j, r)];
                }
            }
        }
    }
    out
}

/// Simplex weights from one kappa row: theta_j = Psi(kappa_j) / (2 sum Psi),
/// renormalized so the sum is exactly 1/2.
pub fn theta_from_kappa(kappa_row: &[f64]) -> Vec<f64> {
    let psi: Vec<f64> = kappa_row.iter().map(|&k| link(k)).collect();
    let total: f64 = psi.iter().sum();
    let mut theta: Vec<f64> = psi.iter().map(|&p| p / (2.0 * total)).collect();
    let sum: f64 = theta.iter().sum();
    let fix = 0.5 / sum;
    for t in theta.iter_mut() {
        *t *= fix;
    }
    theta
}

/// All simplex weight rows induced by the CP factors.
pub fn theta_tensor(params: &SpectralParams) -> Tensor3 {
    let kappa = cp_kappa(params);
    let (s_n, p_n, j_n) = kappa.dims();
    let mut out = Tensor3::zeros(s_n, p_n, j_n);
    for s in 0..s_n {
        for k in 0..p_n {
            let theta = theta_from_kappa(kappa.row(s, k));
            out.row_mut(s, k).copy_from_slice(&theta);
        }
    }
    out
}

/// f_{s,k}(w) = (1/pi) sum_j theta_{s,k,j} B*_j(|w|/pi) for w in [-pi, pi].
pub fn eval_spectral_density(
    params: &SpectralParams,
    basis: &BsplineBasis,
    s: usize,
    k: usize,
    omega: f64,
) -> Result<f64> {
    if s >= params.n_tasks() || k >= params.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "component index ({s},{k}) outside {}x{}",
            params.n_tasks(),
            params.n_vars()
        )));
    }
    let kappa = cp_kappa(params);
    let theta = theta_from_kappa(kappa.row(s, k));
    density_from_weights(&theta, basis, omega)
}

pub(crate) fn density_from_weights(
    weights: &[f64],
    basis: &BsplineBasis,
    omega: f64,
) -> Result<f64> {
    if omega.abs() > PI + 1e-12 {
        return Err(Error::OutOfDomain(format!(
            "frequency {omega} outside [-pi, pi]"
        )));
    }
    let u = (omega.abs() / PI).min(1.0);
    let b = basis.eval_normalized(u);
    Ok(weights.iter().zip(b.iter()).map(|(t, b)| t * b).sum::<f64>() / PI)
}

/// A single latent spectral density: simplex weights plus their basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    weights: Vec<f64>,
    basis: BsplineBasis,
}

impl SpectralDensity {
    pub fn new(weights: Vec<f64>, basis: BsplineBasis) -> Result<Self> {
        if weights.len() != basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a basis of {} functions",
                weights.len(),
                basis.len()
            )));
        }
        if weights.iter().any(|t| *t <= 0.0) {
            return Err(Error::OutOfDomain("weights must be strictly positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 0.5).abs() > 1e-12 {
            return Err(Error::OutOfDomain(format!(
                "weights must sum to 1/2, got {sum}"
            )));
        }
        Ok(Self { weights, basis })
    }

    pub fn from_kappa(kappa_row: &[f64], basis: &BsplineBasis) -> Result<Self> {
        Self::new(theta_from_kappa(kappa_row), basis.clone())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval(&self, omega: f64) -> Result<f64> {
        density_from_weights(&self.weights, &self.basis, omega)
    }

    /// gamma(h) = integral of f(w) cos(hw) over [-pi, pi]; gamma(0) = 1.
    ///
    /// Composite Gauss-Legendre per knot span, so the piecewise-polynomial
    /// part is integrated essentially exactly.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        let spans: Vec<f64> = self.basis.breakpoints().iter().map(|u| u * PI).collect();
        2.0 * quadrature::integrate_piecewise(quadrature::panel_rule(), &spans, |w| {
            self.eval(w).expect("omega within domain") * (lag as f64 * w).cos()
        })
    }
}

/// Autocovariance of an arbitrary symmetric density evaluator, by composite
/// Gauss-Legendre on [0, pi] doubled by symmetry.
pub fn autocovariance_of(f: impl Fn(f64) -> f64, lag: usize) -> f64 {
    let panels: Vec<f64> = (0..=8).map(|i| PI * i as f64 / 8.0).collect();
    2.0 * quadrature::integrate_piecewise(quadrature::panel_rule(), &panels, |w| {
        f(w) * (lag as f64 * w).cos()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernstein_case() {
        // J = 4, degree 3 has no interior knots: B_1(u) = (1-u)^3 with
        // integral 1/4, so B*_1(u) = 4 (1-u)^3.
        let basis = BsplineBasis::new(4, 3).unwrap();
        assert_abs_diff_eq!(basis.raw_integral(0), 0.25, epsilon = 1e-15);
        for &u in &[0.0, 0.15, 0.5, 0.9, 1.0] {
            let raw = basis.eval_raw(u);
            assert_abs_diff_eq!(raw[0], (1.0 - u).powi(3), epsilon = 1e-12);
            let norm = basis.eval_normalized(u);
            assert_abs_diff_eq!(norm[0], 4.0 * (1.0 - u).powi(3), epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_of_unity() {
        let basis = BsplineBasis::new(10, 3).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let sum: f64 = basis.eval_raw(u).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_columns_integrate_to_one() {
        let basis = BsplineBasis::new(8, 3).unwrap();
        let breaks = basis.breakpoints();
        for j in 0..basis.len() {
            let integral = quadrature::integrate_piecewise(quadrature::panel_rule(), &breaks, |u| {
                basis.eval_normalized(u)[j]
            });
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn basis_too_small_rejected() {
        assert!(matches!(
            BsplineBasis::new(3, 3),
            Err(Error::InvalidBasis(_))
        ));
    }

    #[test]
    fn link_values() {
        assert_abs_diff_eq!(link(0.0), 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(link(1.0), 0.75, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = 20.0 * (rng.random::<f64>() - 0.5);
            assert_abs_diff_eq!(link(u) + link(-u), 1.0, epsilon = 1e-14);
            assert!(link(u + 1e-9) > link(u));
        }
    }

    fn random_params(rng: &mut ChaCha8Rng, s: usize, p: usize, j: usize, r: usize) -> SpectralParams {
        let xi = DMatrix::from_fn(s, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let chi = DMatrix::from_fn(p, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let eta = DMatrix::from_fn(j, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        SpectralParams::new(xi, chi, eta).unwrap()
    }

    #[test]
    fn cp_kappa_rank_one_ones() {
        let params = SpectralParams::new(
            DMatrix::from_element(3, 1, 1.0),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_element(5, 1, 1.0),
        )
        .unwrap();
        let kappa = cp_kappa(&params);
        for s in 0..3 {
            for k in 0..2 {
                for j in 0..5 {
                    assert_eq!(kappa.get(s, k, j), 1.0);
                }
            }
        }
    }

    #[test]
    fn cp_kappa_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = random_params(&mut rng, 3, 4, 6, 2);
        let kappa = cp_kappa(&params);
        for s in 0..3 {
            for k in 0..4 {
                for j in 0..6 {
                    let mut expect = 0.0;
                    for r in 0..2 {
                        expect += params.xi[(s, r)] * params.chi[(k, r)] * params.eta[(j, r)];
                    }
                    assert_abs_diff_eq!(kappa.get(s, k, j), expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn cp_kappa_linear_in_xi() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_params(&mut rng, 2, 3, 5, 2);
        let mut b = a.clone();
        b.xi *= 2.5;
        let ka = cp_kappa(&a);
        let kb = cp_kappa(&b);
        for s in 0..2 {
            for k in 0..3 {
                for j in 0..5 {
                    assert_abs_diff_eq!(kb.get(s, k, j), 2.5 * ka.get(s, k, j), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn theta_sums_to_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let kappa: Vec<f64> = (0..7).map(|_| 6.0 * (rng.random::<f64>() - 0.5)).collect();
            let theta = theta_from_kappa(&kappa);
            let sum: f64 = theta.iter().sum();
            assert_abs_diff_eq!(sum, 0.5, epsilon = 1e-15);
            assert!(theta.iter().all(|t| *t > 0.0));
        }
    }

    #[test]
    fn theta_equal_kappas_uniform() {
        let theta = theta_from_kappa(&[0.7; 8]);
        for t in theta {
            assert_abs_diff_eq!(t, 1.0 / 16.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn theta_limit_case() {
        // J=2, kappa = (0, M): Psi -> (1/2, 1), theta -> (1/6, 1/3).
        let theta = theta_from_kappa(&[0.0, 1e6]);
        assert_abs_diff_eq!(theta[0], 1.0 / 6.0, epsilon = 1e-5);
        assert_abs_diff_eq!(theta[1], 1.0 / 3.0, epsilon = 1e-5);
    }

    #[test]
    fn theta_invariant_under_cp_column_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = random_params(&mut rng, 2, 3, 6, 3);
        let perm = [2usize, 0, 1];
        let permute = |m: &DMatrix<f64>| {
            DMatrix::from_fn(m.nrows(), m.ncols(), |i, r| m[(i, perm[r])])
        };
        let permuted = SpectralParams::new(
            permute(&params.xi),
            permute(&params.chi),
            permute(&params.eta),
        )
        .unwrap();
        let ta = theta_tensor(&params);
        let tb = theta_tensor(&permuted);
        for s in 0..2 {
            for k in 0..3 {
                for j in 0..6 {
                    assert_abs_diff_eq!(ta.get(s, k, j), tb.get(s, k, j), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_symmetric_positive_unit_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = BsplineBasis::new(10, 3).unwrap();
        for _ in 0..20 {
            let params = random_params(&mut rng, 2, 2, 10, 3);
            for s in 0..2 {
                for k in 0..2 {
                    let w = rng.random::<f64>() * PI;
                    let f_pos = eval_spectral_density(&params, &basis, s, k, w).unwrap();
                    let f_neg = eval_spectral_density(&params, &basis, s, k, -w).unwrap();
                    assert_abs_diff_eq!(f_pos, f_neg, epsilon = 1e-14);
                    assert!(f_pos >= 0.0);
                    let kappa = cp_kappa(&params);
                    let f = SpectralDensity::from_kappa(kappa.row(s, k), &basis).unwrap();
                    assert_abs_diff_eq!(f.autocovariance(0), 1.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn density_rejects_out_of_domain() {
        let basis = BsplineBasis::new(6, 3).unwrap();
        let theta = theta_from_kappa(&[0.0; 6]);
        let f = SpectralDensity::new(theta, basis).unwrap();
        assert!(matches!(f.eval(3.5), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn uniform_weights_density_integrates_to_one() {
        let basis = BsplineBasis::new(8, 3).unwrap();
        let f = SpectralDensity::new(vec![1.0 / 16.0; 8], basis).unwrap();
        assert_abs_diff_eq!(f.autocovariance(0), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn autocovariance_flat_density() {
        // f = 1/(2 pi): gamma(h) = 0 for h >= 1.
        for h in 1..6 {
            let g = autocovariance_of(|_| 1.0 / (2.0 * PI), h);
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(autocovariance_of(|_| 1.0 / (2.0 * PI), 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn autocovariance_cosine_density() {
        // f = (1 + cos w)/(2 pi): gamma(1) = 1/2.
        let f = |w: f64| (1.0 + w.cos()) / (2.0 * PI);
        assert_abs_diff_eq!(autocovariance_of(f, 0), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(autocovariance_of(f, 1), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(autocovariance_of(f, 2), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn autocovariance_bounded_by_gamma0() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let basis = BsplineBasis::new(10, 3).unwrap();
        for _ in 0..10 {
            let params = random_params(&mut rng, 1, 1, 10, 2);
            let kappa = cp_kappa(&params);
            let f = SpectralDensity::from_kappa(kappa.row(0, 0), &basis).unwrap();
            for h in 1..20 {
                assert!(f.autocovariance(h).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
