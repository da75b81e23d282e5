//! Stress laws σ, stored energies W, critical points, roots, inverse branches
//! and the λ-convexity constant.

mod branches;
mod hypotheses;
mod registry;

pub use branches::{find_branches, Branch, BranchSet, MAX_BRANCHES};
pub use hypotheses::{check_hypotheses, Hypothesis, HypothesisCheck, HypothesisReport, Verdict};
pub use registry::ModelSpec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::numerics::{linspace, roots::bisect};

/// Closed-form stress laws understood by the laboratory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Law {
    /// `σ(p) = Σ coeffs[k] p^k − kappa / p`.
    Polynomial { coeffs: Vec<f64>, kappa: f64 },
    /// `σ(p) = ln p`.
    Log,
}

impl Law {
    fn sigma(&self, p: f64) -> f64 {
        match self {
            Law::Polynomial { coeffs, kappa } => {
                let poly = coeffs.iter().rev().fold(0.0, |acc, &a| acc * p + a);
                if *kappa != 0.0 {
                    poly - kappa / p
                } else {
                    poly
                }
            }
            Law::Log => p.ln(),
        }
    }

    fn sigma_prime(&self, p: f64) -> f64 {
        match self {
            Law::Polynomial { coeffs, kappa } => {
                let d = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, &a)| acc * p + k as f64 * a);
                if *kappa != 0.0 {
                    d + kappa / (p * p)
                } else {
                    d
                }
            }
            Law::Log => 1.0 / p,
        }
    }

    /// `∫₁^p σ`.
    fn energy(&self, p: f64) -> f64 {
        match self {
            Law::Polynomial { coeffs, kappa } => {
                let mut w = 0.0;
                for (k, &a) in coeffs.iter().enumerate() {
                    let n = (k + 1) as i32;
                    w += a * (p.powi(n) - 1.0) / n as f64;
                }
                if *kappa != 0.0 {
                    w -= kappa * p.ln();
                }
                w
            }
            Law::Log => {
                if p == 0.0 {
                    1.0
                } else {
                    p * p.ln() - p + 1.0
                }
            }
        }
    }

    fn positive_only(&self) -> bool {
        match self {
            Law::Polynomial { kappa, .. } => *kappa != 0.0,
            Law::Log => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// Strains in `(0, ∞)`.
    PositiveOnly,
    /// Strains in `ℝ`.
    FullLine,
}

/// Density of the uniform grid used for window scans.
pub const SCAN_POINTS: usize = 4001;
/// Safety inflation applied to the estimated λ.
pub const LAMBDA_SAFETY: f64 = 1.05;

/// A stress law with its cached structural data. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StressModel {
    pub name: String,
    pub law: Law,
    pub domain: Domain,
    /// Convexity threshold: σ′ > 0 on `(0, θ)`.
    pub theta: f64,
    /// `min σ′` on `(0, θ]`.
    pub alpha: f64,
    /// `min σ(p)/p` for `p ∈ [1/θ, window end]`.
    pub c_growth: f64,
    pub lambda: f64,
    pub eval_window: (f64, f64),
    critical: Vec<f64>,
    critical_values: Vec<f64>,
    roots: Vec<f64>,
}

impl StressModel {
    pub fn new(name: impl Into<String>, law: Law, eval_window: (f64, f64)) -> Result<Self> {
        let name = name.into();
        let domain = if law.positive_only() {
            Domain::PositiveOnly
        } else {
            Domain::FullLine
        };
        let (lo, hi) = eval_window;
        if !(lo < hi) || (domain == Domain::PositiveOnly && lo <= 0.0) {
            return Err(Error::ModelInconsistency(format!(
                "evaluation window [{lo}, {hi}] invalid for model `{name}`"
            )));
        }
        if let Law::Polynomial { coeffs, .. } = &law {
            if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::ModelInconsistency(format!(
                    "model `{name}` needs finite polynomial coefficients"
                )));
            }
        }
        let mut model = StressModel {
            name,
            law,
            domain,
            theta: 0.0,
            alpha: 0.0,
            c_growth: 0.0,
            lambda: 0.0,
            eval_window,
            critical: Vec::new(),
            critical_values: Vec::new(),
            roots: Vec::new(),
        };
        model.critical = model.scan_critical_points();
        model.critical_values = model.critical.iter().map(|&z| model.sigma(z)).collect();
        model.roots = model.solve_level(0.0);
        model.lambda = estimate_lambda(&model)?;
        model.set_threshold_constants();
        Ok(model)
    }

    #[inline]
    pub fn sigma(&self, p: f64) -> f64 {
        self.law.sigma(p)
    }

    #[inline]
    pub fn sigma_prime(&self, p: f64) -> f64 {
        self.law.sigma_prime(p)
    }

    /// Central difference with step `1e-6·max(1, |p|)`, shrunk to stay inside
    /// the domain.
    pub fn sigma_prime_fd(&self, p: f64) -> f64 {
        let mut h = fd_step(p);
        if self.domain == Domain::PositiveOnly {
            h = h.min(0.5 * p);
        }
        (self.sigma(p + h) - self.sigma(p - h)) / (2.0 * h)
    }

    pub fn contains(&self, p: f64) -> bool {
        match self.domain {
            Domain::PositiveOnly => p > 0.0 && p.is_finite(),
            Domain::FullLine => p.is_finite(),
        }
    }

    pub fn check_domain(&self, p: f64) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain {
                model: self.name.clone(),
                p,
            })
        }
    }

    /// Stored energy `W(p) = ∫₁^p σ`, closed form. `W(1) = 0` exactly.
    pub fn eval_w(&self, p: f64) -> Result<f64> {
        self.check_domain(p)?;
        if p == 1.0 {
            return Ok(0.0);
        }
        Ok(self.law.energy(p))
    }

    /// Stored energy by adaptive quadrature (absolute tolerance 1e-10).
    pub fn eval_w_numeric(&self, p: f64) -> Result<f64> {
        self.check_domain(p)?;
        if p == 1.0 {
            return Ok(0.0);
        }
        Ok(integrate(|z| self.sigma(z), 1.0, p, QuadOptions::abs(1e-10))?.value)
    }

    /// Energy without the domain check, for hot loops on validated states.
    #[inline]
    pub(crate) fn w_unchecked(&self, p: f64) -> f64 {
        if p == 1.0 {
            0.0
        } else {
            self.law.energy(p)
        }
    }

    /// Critical points of σ in the window and their critical values.
    pub fn critical_points(&self) -> (&[f64], &[f64]) {
        (&self.critical, &self.critical_values)
    }

    /// Roots of σ in the window, increasing.
    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    /// Smallest root of σ.
    pub fn p_minus(&self) -> Option<f64> {
        self.roots.first().copied()
    }

    /// Largest root of σ.
    pub fn p_plus(&self) -> Option<f64> {
        self.roots.last().copied()
    }

    /// Exactly two critical points `z₁ < z₂` with `σ(z₂) < σ(z₁)` and nonzero
    /// curvature at both.
    pub fn two_critical_points(&self) -> Option<(f64, f64)> {
        if self.critical.len() != 2 {
            return None;
        }
        let (z1, z2) = (self.critical[0], self.critical[1]);
        let curv = |z: f64| {
            let h = fd_step(z);
            (self.sigma_prime(z + h) - self.sigma_prime(z - h)) / (2.0 * h)
        };
        (self.sigma(z2) < self.sigma(z1) && curv(z1) != 0.0 && curv(z2) != 0.0)
            .then_some((z1, z2))
    }

    /// Every solution of `σ(p) = c` in the window, increasing. Monotone pieces
    /// are delimited by the critical points; each sign change is bisected to
    /// machine resolution.
    pub fn solve_level(&self, c: f64) -> Vec<f64> {
        let (lo, hi) = self.eval_window;
        let mut knots = Vec::with_capacity(self.critical.len() + 2);
        knots.push(lo);
        knots.extend(self.critical.iter().copied());
        knots.push(hi);
        let f = |p: f64| self.sigma(p) - c;
        let mut out: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            if let Some(r) = bisect(f, w[0], w[1], 0.0) {
                if out.last().is_none_or(|&last| r > last) {
                    out.push(r);
                }
            }
        }
        out
    }

    fn scan_critical_points(&self) -> Vec<f64> {
        let (lo, hi) = self.eval_window;
        let grid = linspace(lo, hi, 4 * SCAN_POINTS);
        let d: Vec<f64> = grid.iter().map(|&p| self.sigma_prime(p)).collect();
        let mut out = Vec::new();
        for i in 0..grid.len() - 1 {
            if d[i] == 0.0 {
                // Exact zero on the grid: keep it only if the sign flips across.
                if i > 0 && d[i - 1].signum() != d[i + 1].signum() && d[i + 1] != 0.0 {
                    out.push(grid[i]);
                }
                continue;
            }
            if d[i + 1] != 0.0 && d[i].signum() != d[i + 1].signum() {
                if let Some(z) = bisect(|p| self.sigma_prime(p), grid[i], grid[i + 1], 0.0) {
                    out.push(z);
                }
            }
        }
        out
    }

    fn set_threshold_constants(&mut self) {
        let (lo, hi) = self.eval_window;
        let start = match self.domain {
            Domain::PositiveOnly => 0.0,
            Domain::FullLine => {
                if self.sigma_prime(0.0) <= 0.0 {
                    self.theta = 0.0;
                    self.alpha = self.sigma_prime(0.0).min(0.0);
                    self.c_growth = 0.0;
                    return;
                }
                0.0
            }
        };
        let mut theta: f64 = 1.0;
        if let Some(&z) = self.critical.iter().find(|&&z| z > start) {
            theta = theta.min(z);
        }
        if let Some(pp) = self.p_plus().filter(|&r| r > 0.0) {
            theta = theta.min(1.0 / pp);
        }
        theta *= 0.9;
        let a_lo = if self.domain == Domain::PositiveOnly {
            lo.min(1e-3 * theta)
        } else {
            0.0
        };
        self.theta = theta;
        self.alpha = linspace(a_lo, theta, SCAN_POINTS)
            .into_iter()
            .filter(|&p| self.contains(p))
            .map(|p| self.sigma_prime(p))
            .fold(f64::INFINITY, f64::min);
        let g_lo = 1.0 / theta;
        let g_hi = hi.max(10.0 * g_lo);
        self.c_growth = linspace(g_lo, g_hi, SCAN_POINTS)
            .into_iter()
            .map(|p| self.sigma(p) / p)
            .fold(f64::INFINITY, f64::min);
    }
}

#[inline]
pub(crate) fn fd_step(p: f64) -> f64 {
    1e-6 * p.abs().max(1.0)
}

/// `λ = 1.05·max(0, −inf σ′)` over a dense window grid. The grid is refined
/// three times; if the minimum keeps dropping by more than 1% per refinement
/// σ′ is treated as unbounded below on the window.
pub fn estimate_lambda(model: &StressModel) -> Result<f64> {
    let (lo, hi) = model.eval_window;
    let mins: Vec<(f64, f64)> = [SCAN_POINTS, 2 * SCAN_POINTS, 4 * SCAN_POINTS]
        .iter()
        .map(|&n| {
            linspace(lo, hi, n)
                .into_iter()
                .map(|p| (model.sigma_prime(p), p))
                .fold((f64::INFINITY, lo), |a, b| if b.0 < a.0 { b } else { a })
        })
        .collect();
    if mins.iter().any(|m| !m.0.is_finite()) {
        return Err(Error::EstimationFailure(format!(
            "σ′ not finite on the window of `{}`",
            model.name
        )));
    }
    let drop1 = mins[0].0 - mins[1].0;
    let drop2 = mins[1].0 - mins[2].0;
    let scale = mins[2].0.abs().max(1.0);
    if drop1 > 1e-2 * scale && drop2 > 1e-2 * scale {
        return Err(Error::EstimationFailure(format!(
            "grid minimum of σ′ does not saturate ({:e}, {:e}, {:e})",
            mins[0].0, mins[1].0, mins[2].0
        )));
    }
    // Polish the grid minimiser by golden-section search on its neighbourhood.
    let h = (hi - lo) / (4 * SCAN_POINTS - 1) as f64;
    let (_, p_star) = mins[2];
    let refined = golden_min(
        |p| model.sigma_prime(p),
        (p_star - h).max(lo),
        (p_star + h).min(hi),
    );
    let inf = refined.min(mins[2].0);
    Ok(LAMBDA_SAFETY * (-inf).max(0.0))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..80 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    f(0.5 * (a + b)).min(f(a)).min(f(b))
}

/// Uniform grid on the evaluation window.
pub fn window_grid(model: &StressModel, n: usize) -> Vec<f64> {
    linspace(model.eval_window.0, model.eval_window.1, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cubic() -> StressModel {
        StressModel::cubic()
    }

    #[test]
    fn cubic_energy_is_double_well() {
        let m = cubic();
        assert_eq!(m.eval_w(1.0).unwrap(), 0.0);
        for &p in &[-2.5, -1.0, 0.0, 0.3, 2.0] {
            let w = 0.25 * (p * p - 1.0f64).powi(2);
            assert!((m.eval_w(p).unwrap() - w).abs() < 1e-13);
        }
    }

    #[test]
    fn log_energy_at_e_is_one() {
        let m = StressModel::log_law();
        let e = std::f64::consts::E;
        assert!((m.eval_w(e).unwrap() - 1.0).abs() < 1e-14);
        assert!((m.eval_w_numeric(e).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(m.eval_w(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn numeric_energy_matches_closed_form_for_cubic() {
        let m = cubic();
        for p in linspace(-3.0, 3.0, 61) {
            let a = m.eval_w(p).unwrap();
            let b = m.eval_w_numeric(p).unwrap();
            assert!((a - b).abs() < 1e-9, "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn lambda_examples() {
        assert!((cubic().lambda - 1.05).abs() < 1e-9);
        assert_eq!(StressModel::linear(1.0).unwrap().lambda, 0.0);
        assert_eq!(StressModel::p_minus_inv().lambda, 0.0);
    }

    #[test]
    fn cubic_critical_points() {
        let m = cubic();
        let (z, cv) = m.critical_points();
        let s = 1.0 / 3f64.sqrt();
        assert_eq!(z.len(), 2);
        assert!((z[0] + s).abs() < 1e-13 && (z[1] - s).abs() < 1e-13);
        let c = 2.0 / (3.0 * 3f64.sqrt());
        assert!((cv[0] - c).abs() < 1e-13 && (cv[1] + c).abs() < 1e-13);
        assert!(m.two_critical_points().is_some());
    }

    #[test]
    fn shifted_cubic_keeps_critical_points() {
        let m = StressModel::shifted_cubic(1.0, 0.0, -1.0, 1e-3).unwrap();
        let (z, cv) = m.critical_points();
        let s = 1.0 / 3f64.sqrt();
        assert!((z[0] + s).abs() < 1e-13 && (z[1] - s).abs() < 1e-13);
        let c = 2.0 / (3.0 * 3f64.sqrt());
        assert!((cv[0] - c - 1e-3).abs() < 1e-13);
    }

    #[test]
    fn monotone_law_has_no_critical_points() {
        let m = StressModel::linear(1.0).unwrap();
        assert!(m.critical_points().0.is_empty());
        assert_eq!(m.roots(), &[1.0]);
    }

    #[test]
    fn cubic_roots() {
        let r = cubic().roots().to_vec();
        assert_eq!(r.len(), 3);
        assert!((r[0] + 1.0).abs() < 1e-14 && r[1].abs() < 1e-14 && (r[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_cubic_structure() {
        let m = StressModel::singular_cubic(1.0, -3.0, 2.2, 0.3, 0.5).unwrap();
        assert_eq!(m.domain, Domain::PositiveOnly);
        let (z, _) = m.critical_points();
        assert_eq!(z.len(), 2);
        assert_eq!(m.roots().len(), 3);
        assert!(m.theta > 0.0 && m.alpha > 0.0 && m.c_growth > 0.0);
        assert!(m.two_critical_points().is_some());
    }

    #[test]
    fn analytic_derivative_matches_difference_quotient() {
        for m in [cubic(), StressModel::singular_cubic_default(), StressModel::log_law()] {
            for p in window_grid(&m, 301) {
                let h = fd_step(p);
                let curv = ((m.sigma_prime(p + h) - m.sigma_prime(p - h)) / (2.0 * h)).abs();
                let d = (m.sigma_prime(p) - m.sigma_prime_fd(p)).abs();
                assert!(d <= 10.0 * h * curv.max(1.0), "{} p={p}", m.name);
            }
        }
    }

    #[test]
    fn positive_only_sanity_at_window_start() {
        let m = StressModel::singular_cubic_default();
        let s0 = m.sigma(m.eval_window.0);
        assert!(window_grid(&m, 501)
            .into_iter()
            .filter(|&p| p > m.theta)
            .all(|p| m.sigma(p) > s0));
    }

    proptest! {
        #[test]
        fn sigma_plus_lambda_id_is_nondecreasing(
            which in 0usize..3, a in 0.0f64..1.0, b in 0.0f64..1.0
        ) {
            let m = match which {
                0 => cubic(),
                1 => StressModel::singular_cubic_default(),
                _ => StressModel::p2_minus_inv(),
            };
            let (lo, hi) = m.eval_window;
            let (p, q) = (lo + a.min(b) * (hi - lo), lo + a.max(b) * (hi - lo));
            let lhs = (m.sigma(q) + m.lambda * q) - (m.sigma(p) + m.lambda * p);
            prop_assert!(lhs >= -1e-9 * (1.0 + m.sigma(q).abs()));
        }

        #[test]
        fn level_sets_recompose(c in -3.0f64..3.0) {
            let m = StressModel::singular_cubic_default();
            for r in m.solve_level(c) {
                prop_assert!((m.sigma(r) - c).abs() <= 1e-10);
            }
        }
    }
}
