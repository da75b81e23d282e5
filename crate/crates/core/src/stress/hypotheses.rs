//! Numerical evidence for the structural hypotheses on σ. Limit statements
//! are decided on finite windows and may come back indeterminate.

use serde::{Deserialize, Serialize};

use super::{window_grid, Domain, Law, StressModel, SCAN_POINTS};
use crate::numerics::linspace;
use crate::numerics::quad::{tail_integral, Tail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    /// σ locally Lipschitz.
    Lipschitz,
    /// σ(p) → −∞ as p → 0⁺.
    SingularAtZero,
    /// W convex on `[0, θ)`.
    ConvexNearZero,
    /// σ′ ≥ α > 0 on `[0, θ)`.
    SlopeNearZero,
    /// σ(p)/p ≥ c > 0 for p > 1/θ.
    LinearGrowth,
    /// W strictly convex for large p.
    ConvexAtInfinity,
    /// σ > 0 for large p and `∫_{p₊+1}^∞ dz/σ < ∞`.
    PositiveIntegrableTail,
    /// `∫_{p₊+1}^∞ dz/σ < ∞`.
    TailIntegrability,
    /// σ real analytic.
    Analytic,
    /// Exactly two nondegenerate critical points with σ(z₂) < σ(z₁).
    TwoCriticalPoints,
}

impl Hypothesis {
    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::Lipschitz => "lipschitz",
            Hypothesis::SingularAtZero => "singular-at-zero",
            Hypothesis::ConvexNearZero => "convex-near-zero",
            Hypothesis::SlopeNearZero => "slope-near-zero",
            Hypothesis::LinearGrowth => "linear-growth",
            Hypothesis::ConvexAtInfinity => "convex-at-infinity",
            Hypothesis::PositiveIntegrableTail => "positive-integrable-tail",
            Hypothesis::TailIntegrability => "tail-integrability",
            Hypothesis::Analytic => "analytic",
            Hypothesis::TwoCriticalPoints => "two-critical-points",
        }
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub verdict: Verdict,
    /// Numeric value supporting the verdict.
    pub witness: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub model: String,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn get(&self, h: Hypothesis) -> &HypothesisCheck {
        self.checks
            .iter()
            .find(|c| c.hypothesis == h)
            .expect("every hypothesis is checked")
    }

    pub fn verdict(&self, h: Hypothesis) -> Verdict {
        self.get(h).verdict
    }

    pub fn passes(&self, h: Hypothesis) -> bool {
        self.verdict(h) == Verdict::Pass
    }
}

fn check(h: Hypothesis, verdict: Verdict, witness: f64, detail: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck {
        hypothesis: h,
        verdict,
        witness,
        detail: detail.into(),
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Runs every check; never fails.
pub fn check_hypotheses(model: &StressModel) -> HypothesisReport {
    let grid = window_grid(model, SCAN_POINTS);
    let mut checks = Vec::new();

    let max_slope = grid
        .iter()
        .map(|&p| model.sigma_prime(p).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        Hypothesis::Lipschitz,
        pass_if(max_slope.is_finite()),
        max_slope,
        "max |σ′| on the evaluation window",
    ));

    checks.push(singular_at_zero(model));

    let theta = model.theta;
    checks.push(check(
        Hypothesis::ConvexNearZero,
        pass_if(theta > 0.0 && model.alpha >= 0.0),
        theta,
        format!("θ = {theta}, min σ′ on (0, θ] = {}", model.alpha),
    ));
    checks.push(check(
        Hypothesis::SlopeNearZero,
        pass_if(theta > 0.0 && model.alpha > 0.0),
        model.alpha,
        format!("α = min σ′ on (0, {theta}]"),
    ));
    checks.push(check(
        Hypothesis::LinearGrowth,
        pass_if(theta > 0.0 && model.c_growth > 0.0),
        model.c_growth,
        "min σ(p)/p beyond 1/θ",
    ));

    checks.push(convex_at_infinity(model));

    let tail = tail_check(model);
    let positive = far_points(model).iter().all(|&p| model.sigma(p) > 0.0);
    let (tv, tw, td) = match &tail {
        Some((t, start)) => {
            let v = match t {
                Tail::Converged { .. } => Verdict::Pass,
                Tail::Diverged { .. } => Verdict::Fail,
                Tail::Indeterminate { .. } => Verdict::Indeterminate,
            };
            (
                v,
                t.value().unwrap_or(f64::INFINITY),
                format!(
                    "∫ dz/σ from {start}: segment ratio {:.4}, {:?}",
                    t.ratio(),
                    v
                ),
            )
        }
        None => (
            Verdict::Fail,
            f64::NAN,
            "σ has no root or is not positive beyond its largest root".to_string(),
        ),
    };
    checks.push(check(
        Hypothesis::PositiveIntegrableTail,
        if positive { tv } else { Verdict::Fail },
        tw,
        td.clone(),
    ));
    checks.push(check(Hypothesis::TailIntegrability, tv, tw, td));

    let analytic = match &model.law {
        Law::Polynomial { .. } | Law::Log => true,
    };
    checks.push(check(
        Hypothesis::Analytic,
        pass_if(analytic),
        1.0,
        "closed-form law",
    ));
    let two = model.two_critical_points();
    checks.push(check(
        Hypothesis::TwoCriticalPoints,
        pass_if(two.is_some()),
        model.critical_points().0.len() as f64,
        format!("{} critical points on the window", model.critical_points().0.len()),
    ));

    HypothesisReport {
        model: model.name.clone(),
        checks,
    }
}

fn singular_at_zero(model: &StressModel) -> HypothesisCheck {
    let h = Hypothesis::SingularAtZero;
    if model.domain == Domain::FullLine {
        let s0 = model.sigma(0.0);
        return check(h, Verdict::Fail, s0, format!("σ(0) = {s0} is finite"));
    }
    // σ at p = 10^-3 … 10^-12: must keep dropping by non-vanishing amounts.
    let vals: Vec<f64> = (3..=12).map(|k| model.sigma(10f64.powi(-k))).collect();
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let d: Vec<f64> = vals.windows(2).map(|w| w[0] - w[1]).collect();
    let last_ratio = d[d.len() - 1] / d[d.len() - 2];
    let last = *vals.last().expect("nonempty");
    let verdict = if !decreasing {
        Verdict::Fail
    } else if last == f64::NEG_INFINITY || last_ratio >= 0.5 {
        Verdict::Pass
    } else if last_ratio < 0.2 {
        Verdict::Fail
    } else {
        Verdict::Indeterminate
    };
    check(
        h,
        verdict,
        last,
        format!("σ(1e-12) = {last:e}, decade increment ratio {last_ratio:.3}"),
    )
}

fn far_points(model: &StressModel) -> Vec<f64> {
    let hi = model.eval_window.1.max(1.0);
    (0..8).map(|k| hi * 4f64.powi(k)).collect()
}

fn convex_at_infinity(model: &StressModel) -> HypothesisCheck {
    let h = Hypothesis::ConvexAtInfinity;
    let (z, _) = model.critical_points();
    let from = z.last().copied().unwrap_or(model.eval_window.0);
    let mut pts = linspace(from, model.eval_window.1, 512);
    pts.remove(0);
    pts.extend(far_points(model));
    let min = pts
        .iter()
        .map(|&p| model.sigma_prime(p))
        .fold(f64::INFINITY, f64::min);
    check(
        h,
        pass_if(min > 0.0),
        min,
        format!("min σ′ beyond the last critical point {from}"),
    )
}

/// Tail test of `∫_{p₊+1}^∞ dz/σ`; `None` when σ has no root.
fn tail_check(model: &StressModel) -> Option<(Tail, f64)> {
    let start = model.p_plus()? + 1.0;
    let start = if start > 0.0 { start } else { 1.0 };
    if model.sigma(start) <= 0.0 {
        return None;
    }
    let t = tail_integral(|z| 1.0 / model.sigma(z), start, 1e-10).ok()?;
    Some((t, start))
}
