//! Gauss-Legendre quadrature.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], computed
/// by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Default 256-point rule shared by the spectral-density integrals.
pub fn default_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(256))
}

/// Integral of `f` over [a, b] with the given rule.
pub fn integrate_with(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(rule.1.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integral of `f` over [a, b] with the default 256-point rule.
pub fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    integrate_with(default_rule(), a, b, f)
}

/// Composite rule over consecutive breakpoints. Needed when the integrand is
/// only piecewise smooth (B-splines have derivative kinks at the knots).
pub fn integrate_piecewise(
    rule: &(Vec<f64>, Vec<f64>),
    breakpoints: &[f64],
    f: impl Fn(f64) -> f64,
) -> f64 {
    breakpoints
        .windows(2)
        .map(|seg| integrate_with(rule, seg[0], seg[1], &f))
        .sum()
}

/// 32-point panel rule for composite integration.
pub fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        // 5-point rule is exact through degree 9
        let rule = gauss_legendre(5);
        let val = integrate_with(&rule, 0.0, 1.0, |x| x.powi(9));
        assert_abs_diff_eq!(val, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn integrates_cosine() {
        let val = integrate(0.0, std::f64::consts::PI, |x| (3.0 * x).cos().powi(2));
        assert_abs_diff_eq!(val, std::f64::consts::PI / 2.0, epsilon = 1e-12);
    }
}
