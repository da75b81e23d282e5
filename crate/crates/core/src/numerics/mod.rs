//! Scalar numerical kernels: summation, bracketing root finders, adaptive
//! quadrature (including improper tails) and the Dormand-Prince 5(4) pair.

pub mod quad;
pub mod rk;
pub mod roots;

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// with O(log n) error growth instead of O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `weights[i] * f(values[i])`.
pub fn weighted_sum(weights: &[f64], values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let terms: Vec<f64> = weights
        .iter()
        .zip(values)
        .map(|(&w, &v)| w * f(v))
        .collect();
    pairwise_sum(&terms)
}

/// `n` points spaced evenly from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
            v[n - 1] = b;
            v
        }
    }
}

/// `n` points spaced evenly in log from `a` to `b` inclusive (`0 < a < b`).
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            if i == 0 {
                a
            } else if i + 1 == n {
                b
            } else {
                x.exp()
            }
        })
        .collect()
}

/// Mean and spread (max - min) of the trailing `fraction` of a series.
pub fn trailing_window(series: &[f64], fraction: f64) -> (f64, f64) {
    if series.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = series.len();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    let tail = &series[n - k..];
    let mean = pairwise_sum(tail) / k as f64;
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    (mean, hi - lo)
}
