//! Numerical oracles shared by the test suites and the `selftest` command:
//! periodic trapezoid integration, adaptive Simpson quadrature and
//! Kolmogorov–Smirnov distances.

use std::f64::consts::TAU;

/// Grid size used by the normalization checks.
pub const NORMALIZATION_GRID: usize = 1 << 17;

/// Trapezoid rule over one period of `exp(log_density)` on `n` uniform
/// points. For smooth periodic integrands this converges spectrally.
pub fn trapezoid_circle(n: usize, log_density: impl Fn(f64) -> f64) -> f64 {
    let h = TAU / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        sum += log_density(i as f64 * h).exp();
    }
    sum * h
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Two-sided KS distance between a sample and a continuous CDF.
/// `sorted` must be ascending; `cdf` is evaluated at each sample.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// KS distance of samples against a density on `[lo, lo + 2π)`, with the
/// CDF accumulated piecewise by adaptive Simpson between sorted samples.
/// Samples are unwrapped into that window before sorting.
pub fn ks_against_density(samples: &[f64], lo: f64, pdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = samples
        .iter()
        .map(|&x| lo + (x - lo).rem_euclid(TAU))
        .collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut acc = 0.0;
    let mut prev = lo;
    let mut worst: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        acc += adaptive_simpson(&pdf, prev, x, 1e-13);
        prev = x;
        let d = (acc - i as f64 / n).abs().max(((i + 1) as f64 / n - acc).abs());
        worst = worst.max(d);
    }
    worst
}

/// Asymptotic two-sided KS critical value `sqrt(−ln(α/2)/2)/√n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
