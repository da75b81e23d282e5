//! Data-independent bound curves: `P₁ ≤ p ≤ P₂` for the pointwise flow
//! `ṗ = −σ(p)` and `ε(t) < pᵢ(t) < E(t)` for the nonlocal flow with mean μ.
//! Constants are certified on finite grids with safety factors, so the
//! curves are valid but not sharp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, invert_tail, tail_integral, QuadOptions, Tail};
use crate::numerics::{linspace, logspace, roots::invert_increasing};
use crate::stress::{Domain, Hypothesis, StressModel};

/// Absolute tolerance of every bound quadrature.
pub const BOUND_QUAD_TOL: f64 = 1e-9;
/// Safety factor dividing the certified difference-quotient constant.
pub const C_SAFETY: f64 = 1.05;
/// Safety factor multiplying the certified threshold `M`.
pub const M_SAFETY: f64 = 1.1;

/// The default log-spaced time grid, 400 nodes over `[1e-6, 1e3]`.
pub fn default_time_grid() -> Vec<f64> {
    logspace(1e-6, 1e3, 400)
}

/// Tabulated monotone time → strain curve, linearly interpolated between
/// nodes (which preserves monotonicity) and held constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 {
            return f64::NAN;
        }
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn tabulate(times: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Ok(Curve {
            times: times.to_vec(),
            values,
        })
    }
}

fn hypothesis(h: Hypothesis, detail: impl Into<String>) -> Error {
    Error::hypothesis(h.name(), detail)
}

/// `P₁(t) = min{p₋, g⁻¹(t)}` with `g(p) = ∫₀^p −dz/σ(z)`.
#[derive(Debug, Clone)]
pub struct MixedLower {
    model: StressModel,
    pub p_minus: f64,
}

impl MixedLower {
    pub fn new(model: &StressModel) -> Result<Self> {
        if model.domain != Domain::PositiveOnly {
            return Err(hypothesis(
                Hypothesis::SingularAtZero,
                format!("σ(0) = {} is finite", model.sigma(0.0)),
            ));
        }
        let p_minus = model
            .p_minus()
            .ok_or_else(|| hypothesis(Hypothesis::SingularAtZero, "σ has no root on the window"))?;
        if model.sigma(0.5 * model.eval_window.0.min(p_minus)) >= 0.0 {
            return Err(hypothesis(
                Hypothesis::SingularAtZero,
                "σ is not negative near 0",
            ));
        }
        Ok(Self {
            model: model.clone(),
            p_minus,
        })
    }

    /// `g(p)`.
    pub fn g(&self, p: f64) -> Result<f64> {
        if p <= 0.0 {
            return Ok(0.0);
        }
        if p >= self.p_minus {
            return Ok(f64::INFINITY);
        }
        // Subtract the logarithmic singularity `1/(σ′(p₋)(p₋ − z))` at p₋.
        let pm = self.p_minus;
        let s = self.model.sigma_prime(pm);
        let (pole, closed) = if s > 0.0 {
            (1.0 / s, (pm / (pm - p)).ln() / s)
        } else {
            (0.0, 0.0)
        };
        let q = integrate(
            |z| -1.0 / self.model.sigma(z) - pole / (pm - z),
            0.0,
            p,
            QuadOptions::abs(BOUND_QUAD_TOL),
        )?;
        let g = q.value + closed;
        if !g.is_finite() {
            return Err(Error::QuadratureDivergence(format!("g({p}) is not finite")));
        }
        Ok(g)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        // g blows up at p₋; bisect below it until the bracket is 1e-10 wide.
        let (mut lo, mut hi) = (0.0, self.p_minus);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.g(mid) {
                Ok(g) if g < t => lo = mid,
                Ok(_) => hi = mid,
                // Past the reach of the quadrature: g is effectively infinite.
                Err(_) => hi = mid,
            }
        }
        Ok(lo.min(self.p_minus))
    }
}

/// `P₂(t) = max{p₊+1, h⁻¹(t)}` with `h(p) = ∫_p^∞ dz/σ(z)`.
#[derive(Debug, Clone)]
pub struct MixedUpper {
    model: StressModel,
    pub p_plus: f64,
    /// `h(p₊ + 1)`.
    pub h_start: f64,
}

impl MixedUpper {
    pub fn new(model: &StressModel) -> Result<Self> {
        let p_plus = model
            .p_plus()
            .ok_or_else(|| hypothesis(Hypothesis::TailIntegrability, "σ has no root"))?;
        let start = p_plus + 1.0;
        let h_start = match tail_integral(|z| 1.0 / model.sigma(z), start, BOUND_QUAD_TOL)? {
            Tail::Converged { value, .. } => value,
            t => {
                return Err(hypothesis(
                    Hypothesis::TailIntegrability,
                    format!(
                        "∫ dz/σ from {start} to ∞ does not converge (segment ratio {:.4})",
                        t.ratio()
                    ),
                ))
            }
        };
        Ok(Self {
            model: model.clone(),
            p_plus,
            h_start,
        })
    }

    /// `h(p)` for `p ≥ p₊ + 1`.
    pub fn h(&self, p: f64) -> Result<f64> {
        tail_value(|z| 1.0 / self.model.sigma(z), p)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let start = self.p_plus + 1.0;
        if t >= self.h_start {
            return Ok(start);
        }
        if t <= 0.0 {
            return Ok(f64::INFINITY);
        }
        invert_tail(|x| self.h(x), t, start, 1e-12)
    }
}

fn tail_value(f: impl Fn(f64) -> f64, from: f64) -> Result<f64> {
    match tail_integral(f, from, BOUND_QUAD_TOL * 1e-3)? {
        Tail::Converged { value, .. } => Ok(value),
        t => Err(Error::QuadratureDivergence(format!(
            "tail from {from} did not converge (ratio {:.4})",
            t.ratio()
        ))),
    }
}

/// `ε(t) = μ(1 − e^{−Ct})` up to `t₀`, then `ε₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementLower {
    pub mu: f64,
    pub c: f64,
    pub eps0: f64,
    pub t0: f64,
}

impl DisplacementLower {
    /// Certifies `C` and `ε₀`: scanning `ε₀` down from `min(θ, μ)/2`, `C` is
    /// the grid infimum of `(σ(p)−σ(δ))/(p−δ)` over `δ ≤ ε₀`, which must be
    /// positive, and `σ(p) > σ(ε₀)` must hold on the grid for `p > ε₀`.
    pub fn new(model: &StressModel, mu: f64) -> Result<Self> {
        if model.domain != Domain::PositiveOnly {
            return Err(hypothesis(
                Hypothesis::SingularAtZero,
                "the lower bound needs σ → −∞ at 0",
            ));
        }
        if !(mu > 0.0) {
            return Err(Error::Precondition(format!("mu must be positive, got {mu}")));
        }
        if !(model.theta > 0.0) {
            return Err(Error::Certification("θ = 0: no convex zone near 0".into()));
        }
        let p_top = model.eval_window.1.max(10.0);
        let mut p_grid = logspace(1e-9, p_top, 3000);
        p_grid.extend(linspace(1e-3, p_top, 3000));
        p_grid.extend((1..=10).map(|k| p_top * 2f64.powi(k)));
        p_grid.sort_by(f64::total_cmp);
        p_grid.dedup();
        let s_grid: Vec<f64> = p_grid.iter().map(|&p| model.sigma(p)).collect();

        let mut eps0 = 0.5 * model.theta.min(mu);
        for _ in 0..40 {
            let s_eps = model.sigma(eps0);
            let separated = p_grid
                .iter()
                .zip(&s_grid)
                .filter(|(&p, _)| p > eps0)
                .all(|(_, &s)| s > s_eps);
            if separated {
                let mut deltas = logspace(1e-9 * eps0, eps0, 120);
                deltas.extend(linspace(0.0, eps0, 121).into_iter().skip(1));
                let quotient = |p: f64, d: f64| {
                    if p == d {
                        model.sigma_prime(d)
                    } else {
                        (model.sigma(p) - model.sigma(d)) / (p - d)
                    }
                };
                let (mut c, mut arg) = (f64::INFINITY, (eps0, eps0));
                for &d in &deltas {
                    let sd = model.sigma(d);
                    for (&p, &sp) in p_grid.iter().zip(&s_grid) {
                        let q = if p == d { f64::INFINITY } else { (sp - sd) / (p - d) };
                        if q < c {
                            (c, arg) = (q, (p, d));
                        }
                    }
                    // Adjacent-point limit: the derivative at δ.
                    let q = model.sigma_prime(d);
                    if q < c {
                        (c, arg) = (q, (d, d));
                    }
                }
                // Polish the grid minimiser along p, then along δ.
                let (p, d) = arg;
                let k = p_grid.partition_point(|&x| x < p);
                let (a, b) = (
                    p_grid[k.saturating_sub(1)],
                    p_grid[(k + 1).min(p_grid.len() - 1)],
                );
                let p = golden_min(|x| quotient(x, d), a, b);
                let d = golden_min(|x| quotient(p, x), (d * 0.9).max(1e-12), (d * 1.1).min(eps0));
                c = c.min(quotient(p, d));
                if c > 0.0 && c.is_finite() {
                    let c = c / C_SAFETY;
                    return Ok(Self {
                        mu,
                        c,
                        eps0,
                        t0: (mu / (mu - eps0)).ln() / c,
                    });
                }
            }
            eps0 *= 0.5;
        }
        Err(Error::Certification(format!(
            "no ε₀ with a positive difference-quotient constant for `{}`",
            model.name
        )))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t <= self.t0 {
            self.mu * -(-self.c * t).exp_m1()
        } else {
            self.eps0
        }
    }
}

/// `E(t) = g⁻¹(t₀ − t)` up to `t₀`, then `M`, with
/// `g(E) = ∫_M^E dz / [(σ(z)/2z)(z − 2μ)]` and `t₀ = g(∞)`.
#[derive(Debug, Clone)]
pub struct DisplacementUpper {
    model: StressModel,
    pub mu: f64,
    pub m: f64,
    pub t0: f64,
}

impl DisplacementUpper {
    /// `M` is `1.1×` the smallest grid `γ > 2μ` beyond which
    /// `σ(γ)/2μ > σ(p)/p − σ(γ)/γ` holds for every grid `p ∈ (0, γ]`, with
    /// `σ(M) > 0` and `σ(M) ≥ σ(p)` for all `p ≤ M`.
    pub fn new(model: &StressModel, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Precondition(format!("mu must be positive, got {mu}")));
        }
        let g_hi = (100.0f64).max(50.0 * mu).max(model.eval_window.1);
        let p_lo = match model.domain {
            Domain::PositiveOnly => 1e-9,
            Domain::FullLine => 1e-9,
        };
        let mut p_grid = logspace(p_lo, g_hi, 4000);
        p_grid.extend(linspace(2.0 * mu, g_hi, 4000));
        p_grid.sort_by(f64::total_cmp);
        p_grid.dedup();
        // Running maximum of σ(p)/p over p ≤ γ.
        let ratio_max: Vec<f64> = p_grid
            .iter()
            .scan(f64::NEG_INFINITY, |m, &p| {
                *m = m.max(model.sigma(p) / p);
                Some(*m)
            })
            .collect();
        let lemma = |k: usize| {
            let g = p_grid[k];
            let s = model.sigma(g);
            s > 0.0 && s / (2.0 * mu) > ratio_max[k] - s / g
        };
        let gammas: Vec<usize> = (0..p_grid.len()).filter(|&k| p_grid[k] > 2.0 * mu).collect();
        let mut first_good = None;
        for &k in gammas.iter().rev() {
            if lemma(k) {
                first_good = Some(k);
            } else {
                break;
            }
        }
        let k_star = first_good.ok_or_else(|| {
            Error::Certification(format!(
                "Lemma inequality fails at the top of the γ-grid ({g_hi})"
            ))
        })?;
        if k_star == *gammas.last().expect("nonempty") {
            return Err(Error::Certification(
                "Lemma inequality holds only at the end of the γ-grid".into(),
            ));
        }
        let mut m = M_SAFETY * p_grid[k_star];
        // σ(M) must dominate σ on everything below M.
        let lo = model.eval_window.0;
        for _ in 0..200 {
            let s_m = model.sigma(m);
            let dominated = linspace(lo, m, 4001)
                .into_iter()
                .filter(|&p| model.contains(p))
                .all(|p| model.sigma(p) <= s_m);
            if s_m > 0.0 && dominated {
                break;
            }
            m *= M_SAFETY;
        }
        let integrand = |z: f64| 2.0 * z / (model.sigma(z) * (z - 2.0 * mu));
        let t0 = match tail_integral(integrand, m, BOUND_QUAD_TOL)? {
            Tail::Converged { value, .. } => value,
            t => {
                return Err(hypothesis(
                    Hypothesis::PositiveIntegrableTail,
                    format!("t₀ = g(∞) is not finite (segment ratio {:.4})", t.ratio()),
                ))
            }
        };
        Ok(Self {
            model: model.clone(),
            mu,
            m,
            t0,
        })
    }

    /// `∫_E^∞` of the defining integrand, i.e. `t₀ − g(E)`.
    pub fn remaining(&self, e: f64) -> Result<f64> {
        let mu = self.mu;
        tail_value(
            |z| 2.0 * z / (self.model.sigma(z) * (z - 2.0 * mu)),
            e,
        )
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t >= self.t0 {
            return Ok(self.m);
        }
        if t <= 0.0 {
            return Ok(f64::INFINITY);
        }
        invert_tail(|e| self.remaining(e), t, self.m, 1e-12)
    }
}

/// Golden-section minimiser of a unimodal `f` on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// `P₁` on a time grid.
pub fn mixed_lower(model: &StressModel, t_grid: &[f64]) -> Result<Curve> {
    let b = MixedLower::new(model)?;
    Curve::tabulate(t_grid, |t| b.eval(t))
}

/// `P₂` on a time grid.
pub fn mixed_upper(model: &StressModel, t_grid: &[f64]) -> Result<Curve> {
    let b = MixedUpper::new(model)?;
    Curve::tabulate(t_grid, |t| b.eval(t))
}

/// `ε` on a time grid with its constants.
pub fn displacement_lower(
    model: &StressModel,
    mu: f64,
    t_grid: &[f64],
) -> Result<(Curve, DisplacementLower)> {
    let b = DisplacementLower::new(model, mu)?;
    Ok((Curve::tabulate(t_grid, |t| Ok(b.eval(t)))?, b))
}

/// `E` on a time grid with `(M, t₀)`.
pub fn displacement_upper(
    model: &StressModel,
    mu: f64,
    t_grid: &[f64],
) -> Result<(Curve, DisplacementUpper)> {
    let b = DisplacementUpper::new(model, mu)?;
    Ok((Curve::tabulate(t_grid, |t| b.eval(t))?, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsKind {
    Mixed,
    Displacement,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: Option<f64>,
    pub eps0: Option<f64>,
    pub t0_lower: Option<f64>,
    pub m: Option<f64>,
    pub t0_upper: Option<f64>,
    pub p_minus: Option<f64>,
    pub p_plus: Option<f64>,
}

/// Both bound curves on one grid. A curve that cannot be certified is
/// `None` and its error is kept in `lower_error`/`upper_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsProfile {
    pub kind: BoundsKind,
    pub times: Vec<f64>,
    pub lower_curve: Option<Curve>,
    pub upper_curve: Option<Curve>,
    pub lower_error: Option<Error>,
    pub upper_error: Option<Error>,
    pub constants: BoundConstants,
    pub mu: Option<f64>,
}

impl BoundsProfile {
    pub fn mixed(model: &StressModel, t_grid: &[f64]) -> Self {
        let mut constants = BoundConstants {
            p_minus: model.p_minus(),
            p_plus: model.p_plus(),
            ..Default::default()
        };
        let (lower_curve, lower_error) = split(mixed_lower(model, t_grid));
        let (upper_curve, upper_error) = split(mixed_upper(model, t_grid));
        if upper_curve.is_none() {
            constants.p_plus = model.p_plus();
        }
        BoundsProfile {
            kind: BoundsKind::Mixed,
            times: t_grid.to_vec(),
            lower_curve,
            upper_curve,
            lower_error,
            upper_error,
            constants,
            mu: None,
        }
    }

    pub fn displacement(model: &StressModel, mu: f64, t_grid: &[f64]) -> Self {
        let mut constants = BoundConstants {
            p_minus: model.p_minus(),
            p_plus: model.p_plus(),
            ..Default::default()
        };
        let (lower_curve, lower_error) = match displacement_lower(model, mu, t_grid) {
            Ok((c, b)) => {
                constants.c = Some(b.c);
                constants.eps0 = Some(b.eps0);
                constants.t0_lower = Some(b.t0);
                (Some(c), None)
            }
            Err(e) => (None, Some(e)),
        };
        let (upper_curve, upper_error) = match displacement_upper(model, mu, t_grid) {
            Ok((c, b)) => {
                constants.m = Some(b.m);
                constants.t0_upper = Some(b.t0);
                (Some(c), None)
            }
            Err(e) => (None, Some(e)),
        };
        BoundsProfile {
            kind: BoundsKind::Displacement,
            times: t_grid.to_vec(),
            lower_curve,
            upper_curve,
            lower_error,
            upper_error,
            constants,
            mu: Some(mu),
        }
    }
}

fn split(r: Result<Curve>) -> (Option<Curve>, Option<Error>) {
    match r {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e)),
    }
}

/// Inverse of an increasing tabulated map, for callers holding only a curve.
pub fn invert_curve(curve: &Curve, value: f64) -> f64 {
    let (lo, hi) = (curve.times[0], *curve.times.last().expect("nonempty"));
    invert_increasing(|t| curve.eval(t), value, lo, hi, 1e-14 * hi)
}
