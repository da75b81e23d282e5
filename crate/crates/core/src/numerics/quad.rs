//! Adaptive Gauss-Kronrod quadrature and truncated improper tails.
//!
//! Finite integrals use a global adaptive G7/K15 scheme: the interval with the
//! largest local error estimate is halved until the summed estimate falls
//! below tolerance. Kronrod nodes never touch the endpoints, so integrable
//! endpoint singularities (e.g. `1/ln z` at `z = 0`) are handled by repeated
//! halving toward the singular end.
//!
//! Improper tails `∫_a^∞ f` are summed over geometrically doubling segments.
//! The ratio of successive segment contributions is a Cauchy test: a stable
//! ratio below one gives a geometric tail that is added by extrapolation, a
//! ratio near one signals divergence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn abs(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut finite = fc.is_finite();
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        finite &= s.is_finite();
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    if !finite {
        return Err(Error::QuadratureDivergence(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

/// Adaptive integration of `f` over `[a, b]` (either orientation).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let q = integrate(f, b, a, opts)?;
        return Ok(Quadrature {
            value: -q.value,
            ..q
        });
    }
    let (v, e) = gk15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    let mut evaluations = 15;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureDivergence(format!(
                "error estimate {total_err:e} above tolerance after {} subintervals on [{a}, {b}]",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at machine resolution; keep its estimate.
            heap.push(Segment { error: 0.0, ..worst });
            total_err = heap.iter().map(|s| s.error).sum();
            if heap.iter().all(|s| s.error == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid)?;
        let (v2, e2) = gk15(&f, mid, worst.b)?;
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        if heap.len() % 64 == 0 {
            // Resum to stop cancellation drift in the running totals.
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let abs_error = heap.iter().map(|s| s.error).sum();
    Ok(Quadrature {
        value,
        abs_error,
        evaluations,
    })
}

/// Outcome of the Cauchy test on a tail `∫_a^∞ f`.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// Geometric decay of segment contributions; `value` includes the
    /// extrapolated remainder.
    Converged { value: f64, ratio: f64, segments: usize },
    /// Segment contributions do not shrink.
    Diverged { ratio: f64, partial: f64 },
    /// Decay too slow to decide within the segment budget.
    Indeterminate { ratio: f64, partial: f64 },
}

impl Tail {
    pub fn value(&self) -> Option<f64> {
        match self {
            Tail::Converged { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn ratio(&self) -> f64 {
        match self {
            Tail::Converged { ratio, .. }
            | Tail::Diverged { ratio, .. }
            | Tail::Indeterminate { ratio, .. } => *ratio,
        }
    }
}

/// Ratio above which segment contributions count as non-decaying.
const DIVERGENT_RATIO: f64 = 0.95;
/// Ratio below which the geometric tail is trusted.
const CONVERGENT_RATIO: f64 = 0.9;
const MAX_SEGMENTS: usize = 90;

/// Truncated improper integral `∫_a^∞ f(z) dz` for `a > 0` over segments
/// `[a 2^k, a 2^{k+1}]`, with geometric (Aitken) tail extrapolation.
pub fn tail_integral(f: impl Fn(f64) -> f64, a: f64, abs_tol: f64) -> Result<Tail> {
    if !(a > 0.0) {
        return Err(Error::QuadratureDivergence(format!(
            "tail start must be positive, got {a}"
        )));
    }
    let seg_opts = QuadOptions {
        abs_tol: abs_tol * 1e-3,
        rel_tol: 1e-13,
        max_intervals: 2000,
    };
    let mut partial = 0.0;
    let mut x = a;
    let mut increments: Vec<f64> = Vec::new();
    for k in 0..MAX_SEGMENTS {
        let d = integrate(&f, x, 2.0 * x, seg_opts)?.value;
        partial += d;
        increments.push(d);
        x *= 2.0;
        if k < 4 {
            continue;
        }
        let n = increments.len();
        let ratios: Vec<f64> = (n - 3..n)
            .map(|i| {
                let prev = increments[i - 1];
                if prev == 0.0 {
                    0.0
                } else {
                    increments[i] / prev
                }
            })
            .collect();
        let r = ratios[2];
        let stable = ratios
            .iter()
            .all(|&q| (0.0..CONVERGENT_RATIO).contains(&q));
        if stable {
            let remainder = d * r / (1.0 - r);
            if remainder.abs() < abs_tol {
                return Ok(Tail::Converged {
                    value: partial + remainder,
                    ratio: r,
                    segments: n,
                });
            }
        }
        if d == 0.0 {
            return Ok(Tail::Converged {
                value: partial,
                ratio: 0.0,
                segments: n,
            });
        }
        if k >= 8 && ratios.iter().all(|&q| q >= DIVERGENT_RATIO) {
            return Ok(Tail::Diverged { ratio: r, partial });
        }
    }
    let n = increments.len();
    let r = increments[n - 1] / increments[n - 2];
    Ok(Tail::Indeterminate { ratio: r, partial })
}

/// Finds `x ≥ a` with `∫_x^∞ f = target` for positive integrable `f`, by
/// bisection in `ln x`. `tail_from(x)` must return the tail value at `x`.
pub fn invert_tail(
    tail_from: impl Fn(f64) -> Result<f64>,
    target: f64,
    a: f64,
    rel_tol: f64,
) -> Result<f64> {
    let t_a = tail_from(a)?;
    if target >= t_a {
        return Ok(a);
    }
    let mut lo = a;
    let mut hi = 2.0 * a;
    while tail_from(hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Bracket(format!(
                "tail never drops below {target:e}"
            )));
        }
    }
    let (mut l, mut h) = (lo.ln(), hi.ln());
    while h - l > rel_tol {
        let m = 0.5 * (l + h);
        if tail_from(m.exp())? > target {
            l = m;
        } else {
            h = m;
        }
    }
    Ok((0.5 * (l + h)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| x.powi(5) - 2.0 * x, -1.0, 2.0, QuadOptions::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (4.0 - 1.0);
        assert!((q.value - exact).abs() < 1e-13);
    }

    #[test]
    fn reversed_orientation_flips_sign() {
        let f = |x: f64| x.exp();
        let q1 = integrate(f, 0.0, 1.0, QuadOptions::default()).unwrap().value;
        let q2 = integrate(f, 1.0, 0.0, QuadOptions::default()).unwrap().value;
        assert_eq!(q1, -q2);
    }

    #[test]
    fn log_singular_endpoint() {
        // ∫_0^1 ln z dz = -1
        let q = integrate(|z| z.ln(), 0.0, 1.0, QuadOptions::abs(1e-10)).unwrap();
        assert!((q.value + 1.0).abs() < 1e-9, "{}", q.value);
    }

    #[test]
    fn inverse_sqrt_singularity() {
        let q = integrate(|z| 1.0 / z.sqrt(), 0.0, 4.0, QuadOptions::abs(1e-9)).unwrap();
        assert!((q.value - 4.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn tail_of_inverse_square() {
        let t = tail_integral(|z| 1.0 / (z * z), 3.0, 1e-11).unwrap();
        let v = t.value().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10, "{v}");
        assert!((t.ratio() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tail_of_inverse_log_diverges() {
        let t = tail_integral(|z| 1.0 / z.ln(), 2.0, 1e-9).unwrap();
        assert!(matches!(t, Tail::Diverged { .. }), "{t:?}");
    }

    #[test]
    fn tail_of_inverse_linear_diverges() {
        let t = tail_integral(|z| 1.0 / z, 2.0, 1e-9).unwrap();
        assert!(matches!(t, Tail::Diverged { .. }), "{t:?}");
    }

    #[test]
    fn invert_tail_of_inverse_square() {
        let x = invert_tail(|x| Ok(1.0 / x), 1e-3, 1.0, 1e-13).unwrap();
        assert!((x - 1e3).abs() < 1e-8);
    }
}
