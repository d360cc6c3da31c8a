//! Whittle pseudo-likelihood on the orthonormal Fourier coefficients.
//!
//! For variable k and schedule slot m >= 2 (slot 1 is the mean coefficient,
//! which centering zeroes and the likelihood excludes), the task vector of
//! transformed residual coefficients is modeled as
//!
//!   r~_{k,.,m} ~ N_S(0, d_k * M * diag(2 pi f_{s,k}(w_m)) * M^T),  M = B U.
//!
//! The 2 pi factor makes a unit-variance white-noise component (f = 1/(2 pi))
//! produce unit-variance coefficients, matching the preprocessing contract.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::DagWeights;
use crate::series::FourierSeries;
use crate::spectral::{BsplineBasis, SpectralParams, Tensor3};

pub(crate) const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Fourier-domain data arranged for the sampler: column (s, m) of `ytilde`
/// holds the p-vector of coefficients at task s, schedule slot m.
#[derive(Debug, Clone)]
pub struct WhittleData {
    pub(crate) ytilde: DMatrix<f64>,
    n_vars: usize,
    n_tasks: usize,
    n_time: usize,
}

impl WhittleData {
    pub fn new(fy: &FourierSeries) -> Self {
        let (p, s_n, t_n) = (fy.n_vars(), fy.n_tasks(), fy.n_time());
        let mut ytilde = DMatrix::zeros(p, s_n * t_n);
        for k in 0..p {
            for s in 0..s_n {
                for m in 0..t_n {
                    ytilde[(k, s * t_n + m)] = fy.coeff(k, s, m);
                }
            }
        }
        Self {
            ytilde,
            n_vars: p,
            n_tasks: s_n,
            n_time: t_n,
        }
    }

    /// Directly wraps a coefficient matrix in the (s, m) column layout; used
    /// when data are synthesized in the frequency domain.
    pub(crate) fn from_matrix(
        ytilde: DMatrix<f64>,
        n_vars: usize,
        n_tasks: usize,
        n_time: usize,
    ) -> Self {
        debug_assert_eq!(ytilde.nrows(), n_vars);
        debug_assert_eq!(ytilde.ncols(), n_tasks * n_time);
        Self {
            ytilde,
            n_vars,
            n_tasks,
            n_time,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    #[inline]
    pub(crate) fn col_index(&self, task: usize, m: usize) -> usize {
        task * self.n_time + m
    }

    /// Number of coefficient slots entering the likelihood (the DC slot is
    /// excluded).
    pub fn n_used(&self) -> usize {
        self.n_time - 1
    }
}

/// Basis values precomputed at the schedule frequencies:
/// `bvals[(j, m)] = B*_j(w_m / pi)`.
#[derive(Debug, Clone)]
pub struct SpectralCtx {
    pub basis: BsplineBasis,
    pub bvals: DMatrix<f64>,
}

impl SpectralCtx {
    pub fn new(n_basis: usize, degree: usize, frequencies: &[f64]) -> Result<Self> {
        let basis = BsplineBasis::new(n_basis, degree)?;
        let mut bvals = DMatrix::zeros(n_basis, frequencies.len());
        for (m, &w) in frequencies.iter().enumerate() {
            let u = (w.abs() / std::f64::consts::PI).min(1.0);
            for (j, v) in basis.eval_normalized(u).into_iter().enumerate() {
                bvals[(j, m)] = v;
            }
        }
        Ok(Self { basis, bvals })
    }

    /// f_{s,k}(w_m) for every component and schedule slot.
    pub fn density_table(&self, params: &SpectralParams) -> Tensor3 {
        let theta = crate::spectral::theta_tensor(params);
        let (s_n, p_n, j_n) = theta.dims();
        let t_n = self.bvals.ncols();
        let mut out = Tensor3::zeros(s_n, p_n, t_n);
        for s in 0..s_n {
            for k in 0..p_n {
                let th = theta.row(s, k);
                let row = out.row_mut(s, k);
                for (m, f) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..j_n {
                        acc += th[j] * self.bvals[(j, m)];
                    }
                    *f = acc / std::f64::consts::PI;
                }
            }
        }
        out
    }
}

/// Factorized task-mixing matrix M = B U with its inverse and log |det|.
#[derive(Debug, Clone)]
pub(crate) struct MixState {
    pub mix: DMatrix<f64>,
    pub inv: DMatrix<f64>,
    pub logdet: f64,
}

impl MixState {
    pub fn new(mix: DMatrix<f64>) -> Result<Self> {
        let lu = mix.clone().lu();
        let det = lu.determinant();
        if !(det.abs() > 1e-300) {
            return Err(Error::SingularCovariance(format!(
                "task mixing matrix has |det| = {}",
                det.abs()
            )));
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::SingularCovariance("mixing matrix not invertible".into()))?;
        Ok(Self {
            mix,
            inv,
            logdet: det.abs().ln(),
        })
    }
}

/// Residual coefficients (I - W) ytilde, same column layout as the data.
pub(crate) fn residual_coefficients(data: &WhittleData, w: &DagWeights) -> DMatrix<f64> {
    &data.ytilde - w.matrix() * &data.ytilde
}

/// Whittle log pseudo-likelihood given residual coefficients.
pub(crate) fn loglik_given_residuals(
    data: &WhittleData,
    rtilde: &DMatrix<f64>,
    d: &[f64],
    mix: &MixState,
    f_vals: &Tensor3,
) -> Result<f64> {
    let (p, s_n, t_n) = (data.n_vars, data.n_tasks, data.n_time);
    let mut u = DVector::zeros(s_n);
    let mut r = DVector::zeros(s_n);
    let mut total = 0.0;
    for k in 0..p {
        let d_k = d[k];
        if !(d_k > 0.0) {
            return Err(Error::SingularCovariance(format!("d[{k}] = {d_k}")));
        }
        let ld_k = d_k.ln();
        for m in 1..t_n {
            for s in 0..s_n {
                r[s] = rtilde[(k, data.col_index(s, m))];
            }
            mix.inv.mul_to(&r, &mut u);
            let mut quad = 0.0;
            let mut logdet_f = 0.0;
            for s in 0..s_n {
                let f = f_vals.get(s, k, m);
                if !(f > 0.0) {
                    return Err(Error::SingularCovariance(format!(
                        "spectral density f[{s},{k}] at slot {m} = {f}"
                    )));
                }
                let v = TWO_PI * f;
                quad += u[s] * u[s] / v;
                logdet_f += v.ln();
            }
            total += -0.5
                * (s_n as f64 * (TWO_PI.ln() + ld_k)
                    + 2.0 * mix.logdet
                    + logdet_f
                    + quad / d_k);
        }
    }
    Ok(total)
}

/// Whittle log pseudo-likelihood of the full state pieces.
pub fn whittle_loglik(
    data: &WhittleData,
    w: &DagWeights,
    d: &[f64],
    mixing: &DMatrix<f64>,
    ctx: &SpectralCtx,
    params: &SpectralParams,
) -> Result<f64> {
    let mix = MixState::new(mixing.clone())?;
    let f_vals = ctx.density_table(params);
    let rtilde = residual_coefficients(data, w);
    loglik_given_residuals(data, &rtilde, d, &mix, &f_vals)
}
