//! Matrix-variate time-series container, preprocessing, the orthonormal real
//! Fourier layer, and the Whittle variance schedule.
//!
//! Data layout is p variables x S tasks x T time points, with each component
//! series (variable, task) stored contiguously along time. The Fourier layer
//! uses the orthonormal real basis {1/sqrt(T), sqrt(2/T)cos(w_k t),
//! sqrt(2/T)sin(w_k t), (-1)^t/sqrt(T)} so that Parseval holds exactly and
//! each coefficient pairs with one entry of the Whittle variance schedule.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::graph::DagWeights;

/// Observed (or simulated) series: p variables, S tasks, T time points.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    values: Vec<f64>, // [var][task][time], time fastest
    n_vars: usize,
    n_tasks: usize,
    n_time: usize,
}

impl MatrixSeries {
    pub fn new(n_vars: usize, n_tasks: usize, n_time: usize, values: Vec<f64>) -> Result<Self> {
        if n_vars < 2 || n_tasks < 1 || n_time < 4 {
            return Err(Error::DimensionMismatch(format!(
                "need p >= 2, S >= 1, T >= 4; got p={n_vars}, S={n_tasks}, T={n_time}"
            )));
        }
        if values.len() != n_vars * n_tasks * n_time {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                n_vars * n_tasks * n_time,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "series contains non-finite values".into(),
            ));
        }
        Ok(Self {
            values,
            n_vars,
            n_tasks,
            n_time,
        })
    }

    pub fn zeros(n_vars: usize, n_tasks: usize, n_time: usize) -> Result<Self> {
        Self::new(n_vars, n_tasks, n_time, vec![0.0; n_vars * n_tasks * n_time])
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
    fn offset(&self, var: usize, task: usize) -> usize {
        (var * self.n_tasks + task) * self.n_time
    }

    #[inline]
    pub fn get(&self, var: usize, task: usize, t: usize) -> f64 {
        self.values[self.offset(var, task) + t]
    }

    #[inline]
    pub fn set(&mut self, var: usize, task: usize, t: usize, v: f64) {
        let o = self.offset(var, task);
        self.values[o + t] = v;
    }

    /// One component series, contiguous along time.
    pub fn component(&self, var: usize, task: usize) -> &[f64] {
        let o = self.offset(var, task);
        &self.values[o..o + self.n_time]
    }

    pub fn component_mut(&mut self, var: usize, task: usize) -> &mut [f64] {
        let o = self.offset(var, task);
        &mut self.values[o..o + self.n_time]
    }

    /// Writes the CSV interchange format: header `v{k}_s{s}`, one row per
    /// time point, columns grouped by task then variable.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = Vec::with_capacity(self.n_vars * self.n_tasks);
        for s in 0..self.n_tasks {
            for k in 0..self.n_vars {
                header.push(format!("v{}_s{}", k + 1, s + 1));
            }
        }
        wtr.write_record(&header)?;
        let mut row = String::new();
        for t in 0..self.n_time {
            let mut record = Vec::with_capacity(header.len());
            for s in 0..self.n_tasks {
                for k in 0..self.n_vars {
                    row.clear();
                    write!(row, "{:.17e}", self.get(k, s, t)).expect("write to string");
                    record.push(row.clone());
                }
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV interchange format, inferring p and S from the header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let mut col_map = Vec::with_capacity(header.len());
        let mut max_var = 0usize;
        let mut max_task = 0usize;
        for name in header.iter() {
            let (var, task) = parse_column_name(name)
                .ok_or_else(|| Error::Schema(format!("unrecognized column name '{name}'")))?;
            max_var = max_var.max(var);
            max_task = max_task.max(task);
            col_map.push((var - 1, task - 1));
        }
        if col_map.len() != max_var * max_task {
            return Err(Error::Schema(format!(
                "header names {} columns but implies p={max_var}, S={max_task}",
                col_map.len()
            )));
        }
        let mut seen = vec![false; max_var * max_task];
        for &(k, s) in &col_map {
            let idx = k * max_task + s;
            if seen[idx] {
                return Err(Error::Schema(format!("duplicate column v{}_s{}", k + 1, s + 1)));
            }
            seen[idx] = true;
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != col_map.len() {
                return Err(Error::Schema(format!(
                    "row {} has {} fields, expected {}",
                    rows.len() + 2,
                    record.len(),
                    col_map.len()
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|v| v.trim().parse::<f64>()).collect();
            rows.push(parsed.map_err(|e| Error::Schema(format!("bad numeric field: {e}")))?);
        }
        let n_time = rows.len();
        let mut series = MatrixSeries::zeros(max_var, max_task, n_time)?;
        for (t, row) in rows.iter().enumerate() {
            for (c, &(k, s)) in col_map.iter().enumerate() {
                series.set(k, s, t, row[c]);
            }
        }
        Ok(series)
    }
}

fn parse_column_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('v')?;
    let (var, task) = rest.split_once("_s")?;
    let var: usize = var.parse().ok()?;
    let task: usize = task.parse().ok()?;
    if var == 0 || task == 0 {
        return None;
    }
    Some((var, task))
}

/// Output of [`preprocess`]: the standardized series plus the per-component
/// transform needed to map fitted coefficients back to the working scale.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub series: MatrixSeries,
    /// Standard deviation removed from each (variable, task) component,
    /// indexed `var * n_tasks + task`.
    pub scales: Vec<f64>,
    /// Fitted (intercept, slope) of the removed linear trend per component.
    pub trends: Vec<(f64, f64)>,
}

impl Preprocessed {
    /// Root-mean-square of a variable's per-task scales. Under the model all
    /// tasks share one marginal variance per variable, so this pools them.
    pub fn pooled_scale(&self, var: usize) -> f64 {
        let s = self.series.n_tasks();
        let sum: f64 = (0..s).map(|t| self.scales[var * s + t].powi(2)).sum();
        (sum / s as f64).sqrt()
    }

    /// The detrended, centered series with original variances restored.
    pub fn working_series(&self) -> MatrixSeries {
        let mut out = self.series.clone();
        for k in 0..out.n_vars() {
            for s in 0..out.n_tasks() {
                let scale = self.scales[k * out.n_tasks() + s];
                for v in out.component_mut(k, s) {
                    *v *= scale;
                }
            }
        }
        out
    }
}

/// Per component: OLS linear trend in t removed, then centered, then scaled
/// to unit variance (mean-square convention). Components that are constant
/// after detrending are rejected.
pub fn preprocess(raw: &MatrixSeries) -> Result<Preprocessed> {
    let mut series = raw.clone();
    let mut scales = Vec::with_capacity(raw.n_vars() * raw.n_tasks());
    let mut trends = Vec::with_capacity(scales.capacity());
    for k in 0..raw.n_vars() {
        for s in 0..raw.n_tasks() {
            let comp = series.component_mut(k, s);
            let raw_var = population_variance(comp);
            let trend = detrend_in_place(comp);
            trends.push(trend);
            let mean = comp.iter().sum::<f64>() / comp.len() as f64;
            for v in comp.iter_mut() {
                *v -= mean;
            }
            let var = comp.iter().map(|v| v * v).sum::<f64>() / comp.len() as f64;
            if var <= 1e-12 * raw_var.max(1.0) {
                return Err(Error::ConstantComponent { var: k, task: s });
            }
            let sd = var.sqrt();
            for v in comp.iter_mut() {
                *v /= sd;
            }
            scales.push(sd);
        }
    }
    Ok(Preprocessed {
        series,
        scales,
        trends,
    })
}

fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// OLS fit of y on (1, t) with t = 0..T-1; subtracts the fit, returns
/// (intercept, slope).
fn detrend_in_place(y: &mut [f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    for (t, v) in y.iter_mut().enumerate() {
        *v -= intercept + slope * t as f64;
    }
    (intercept, slope)
}

/// Orthonormal real Fourier coefficients of every component, ordered so that
/// 1-based coefficient index m matches entry m of the Whittle variance
/// schedule: slot 1 holds the (zeroed-by-centering) mean coefficient, slots
/// 2k and 2k+1 hold the cosine/sine pair at frequency w_k, and for even T the
/// last slot holds the Nyquist coefficient.
#[derive(Debug, Clone)]
pub struct FourierSeries {
    coefficients: Vec<f64>, // same layout as MatrixSeries
    frequencies: Vec<f64>,
    n_vars: usize,
    n_tasks: usize,
    n_time: usize,
}

impl FourierSeries {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Frequency assigned to each coefficient slot (schedule order).
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    #[inline]
    pub fn coeff(&self, var: usize, task: usize, m: usize) -> f64 {
        self.coefficients[(var * self.n_tasks + task) * self.n_time + m]
    }

    pub fn component(&self, var: usize, task: usize) -> &[f64] {
        let o = (var * self.n_tasks + task) * self.n_time;
        &self.coefficients[o..o + self.n_time]
    }

    pub(crate) fn component_mut(&mut self, var: usize, task: usize) -> &mut [f64] {
        let o = (var * self.n_tasks + task) * self.n_time;
        &mut self.coefficients[o..o + self.n_time]
    }

    /// An all-zero coefficient array with the schedule frequency layout;
    /// used when synthesizing frequency-domain data directly.
    pub fn zeros(n_vars: usize, n_tasks: usize, n_time: usize) -> Self {
        Self {
            coefficients: vec![0.0; n_vars * n_tasks * n_time],
            frequencies: whittle_frequencies(n_time),
            n_vars,
            n_tasks,
            n_time,
        }
    }
}

/// Fourier frequency w_k = 2 pi k / T.
#[inline]
pub fn fourier_frequency(k: usize, n_time: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 / n_time as f64
}

/// The frequency assigned to each 1-based schedule slot m = 1..T: slot 1 uses
/// w_1, slots 2k and 2k+1 use w_k, and for even T slot T uses w_{T/2}.
pub fn whittle_frequencies(n_time: usize) -> Vec<f64> {
    assert!(n_time >= 4, "schedule needs T >= 4");
    let mut freqs = Vec::with_capacity(n_time);
    freqs.push(fourier_frequency(1, n_time));
    for k in 1..=(n_time - 1) / 2 {
        freqs.push(fourier_frequency(k, n_time));
        freqs.push(fourier_frequency(k, n_time));
    }
    if n_time % 2 == 0 {
        freqs.push(fourier_frequency(n_time / 2, n_time));
    }
    debug_assert_eq!(freqs.len(), n_time);
    freqs
}

/// Evaluates `f` along the Whittle schedule, returning the length-T sequence
/// S_1, ..., S_T of per-frequency values.
pub fn whittle_variance_schedule<V>(n_time: usize, f: impl Fn(f64) -> V) -> Vec<V> {
    whittle_frequencies(n_time).into_iter().map(f).collect()
}

/// Orthonormal real DFT of every component series.
pub fn fourier_transform(series: &MatrixSeries) -> FourierSeries {
    let t_len = series.n_time();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(t_len);
    let mut out = FourierSeries::zeros(series.n_vars(), series.n_tasks(), t_len);
    let scale_pair = (2.0 / t_len as f64).sqrt();
    let scale_single = 1.0 / (t_len as f64).sqrt();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); t_len];
    for k in 0..series.n_vars() {
        for s in 0..series.n_tasks() {
            for (b, v) in buf.iter_mut().zip(series.component(k, s)) {
                *b = Complex::new(*v, 0.0);
            }
            fft.process(&mut buf);
            let coeffs = out.component_mut(k, s);
            coeffs[0] = buf[0].re * scale_single;
            for h in 1..=(t_len - 1) / 2 {
                coeffs[2 * h - 1] = buf[h].re * scale_pair;
                coeffs[2 * h] = -buf[h].im * scale_pair;
            }
            if t_len % 2 == 0 {
                coeffs[t_len - 1] = buf[t_len / 2].re * scale_single;
            }
        }
    }
    out
}

/// Inverse of [`fourier_transform`].
pub fn inverse_fourier_transform(fs: &FourierSeries) -> Result<MatrixSeries> {
    let t_len = fs.n_time();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(t_len);
    let mut out = MatrixSeries::zeros(fs.n_vars(), fs.n_tasks(), t_len)?;
    let scale_pair = (2.0 / t_len as f64).sqrt();
    let scale_single = 1.0 / (t_len as f64).sqrt();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); t_len];
    for k in 0..fs.n_vars() {
        for s in 0..fs.n_tasks() {
            let coeffs = fs.component(k, s);
            for b in buf.iter_mut() {
                *b = Complex::new(0.0, 0.0);
            }
            // Each slot holds X_k / T so that rustfft's unnormalized inverse
            // (which omits the 1/T factor) lands back on the time series.
            buf[0] = Complex::new(coeffs[0] * scale_single, 0.0);
            for h in 1..=(t_len - 1) / 2 {
                let c = Complex::new(coeffs[2 * h - 1], -coeffs[2 * h]) * (scale_pair / 2.0);
                buf[h] = c;
                buf[t_len - h] = c.conj();
            }
            if t_len % 2 == 0 {
                buf[t_len / 2] = Complex::new(coeffs[t_len - 1] * scale_single, 0.0);
            }
            ifft.process(&mut buf);
            let comp = out.component_mut(k, s);
            for (v, b) in comp.iter_mut().zip(buf.iter()) {
                *v = b.re;
            }
        }
    }
    Ok(out)
}

/// R_t = (I - W) Y_t per task: residual of the structural equation.
pub fn residual_series(y: &MatrixSeries, w: &DagWeights) -> Result<MatrixSeries> {
    let p = y.n_vars();
    if w.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{} but series has p={p}",
            w.dim(),
            w.dim()
        )));
    }
    let mut out = y.clone();
    let wm = w.matrix();
    for s in 0..y.n_tasks() {
        for t in 0..y.n_time() {
            for i in 0..p {
                let mut acc = y.get(i, s, t);
                for j in 0..p {
                    let wij = wm[(i, j)];
                    if wij != 0.0 {
                        acc -= wij * y.get(j, s, t);
                    }
                }
                out.set(i, s, t, acc);
            }
        }
    }
    Ok(out)
}
