//! Long-time diagnostics: equilibrium sets, convergence of `p_t`, integral
//! functionals along trajectories, the cubic stabilization identities,
//! volume fractions and the nondegeneracy tests.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::displacement::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::numerics::roots::bisect;
use crate::numerics::{linspace, pairwise_sum, trailing_window, weighted_sum};
use crate::stress::{find_branches, Domain, Law, StressModel};

/// Fraction of the record used by every trailing-window limit.
pub const TRAILING_FRACTION: f64 = 0.1;
/// Absolute tolerance of each functional quadrature segment.
pub const FUNCTIONAL_QUAD_TOL: f64 = 1e-13;
/// Final `‖p_t‖₂` below which a run counts as converged.
pub const CONVERGED_RHS: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Equilibria

/// An equilibrium with stress level `c`: the strain takes `branch_values[i]`
/// on a set of measure `fractions[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDescription {
    pub c: f64,
    pub branch_values: Vec<f64>,
    pub fractions: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriaReport {
    pub mu: f64,
    pub unique: bool,
    /// The constant state when unique, else one two-point family member per
    /// violating stress level, with `fractions = (s, 1 − s)`.
    pub descriptions: Vec<EquilibriumDescription>,
}

/// Scans stress levels over σ's range on the window. The equilibrium is
/// unique iff `μ` never lies strictly between the smallest and largest
/// solution of `σ(p) = c`.
pub fn equilibria_enumerate(model: &StressModel, mu: f64) -> Result<EquilibriaReport> {
    if !model.contains(mu) {
        return Err(Error::Domain {
            model: model.name.clone(),
            p: mu,
        });
    }
    let (lo, hi) = model.eval_window;
    let (s_lo, s_hi) = (model.sigma(lo), model.sigma(hi));
    let mut levels = linspace(s_lo.min(s_hi), s_lo.max(s_hi), 2001);
    let (_, cvals) = model.critical_points();
    if let (Some(a), Some(b)) = (
        cvals.iter().copied().reduce(f64::min),
        cvals.iter().copied().reduce(f64::max),
    ) {
        levels.extend(linspace(a, b, 2001));
        levels.push(0.5 * (a + b));
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut descriptions = Vec::new();
    for c in levels {
        let roots = model.solve_level(c);
        let (Some(&a), Some(&b)) = (roots.first(), roots.last()) else {
            continue;
        };
        if a < mu && mu < b {
            let s = (b - mu) / (b - a);
            descriptions.push(EquilibriumDescription {
                c,
                branch_values: vec![a, b],
                fractions: vec![s, 1.0 - s],
                mean: s * a + (1.0 - s) * b,
            });
        }
    }
    let unique = descriptions.is_empty();
    if unique {
        descriptions.push(EquilibriumDescription {
            c: model.sigma(mu),
            branch_values: vec![mu],
            fractions: vec![1.0],
            mean: mu,
        });
    }
    Ok(EquilibriaReport {
        mu,
        unique,
        descriptions,
    })
}

// ---------------------------------------------------------------------------
// Convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    /// Weighted `‖p_t‖₂` per record.
    pub rhs_norms: Vec<f64>,
    pub final_norm: f64,
    pub converged: bool,
}

/// Converged iff the final `‖p_t‖₂ < 1e-8` and the trailing tenth of the
/// series is nonincreasing up to `1e-10`.
pub fn convergence_monitor(traj: &Trajectory) -> ConvergenceReport {
    let rhs_norms = traj.rhs_norms();
    let n = rhs_norms.len();
    let k = ((n as f64 * TRAILING_FRACTION).ceil() as usize).clamp(1, n.max(1));
    let final_norm = rhs_norms.last().copied().unwrap_or(f64::NAN);
    let settled = rhs_norms[n.saturating_sub(k)..]
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-10);
    ConvergenceReport {
        times: traj.times.clone(),
        converged: traj.failure.is_none() && final_norm < CONVERGED_RHS && settled,
        rhs_norms,
        final_norm,
    }
}

// ---------------------------------------------------------------------------
// Integral functionals

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Trailing-window mean and spread.
    pub limit: f64,
    pub spread: f64,
    /// Whether the series is expected to be nonincreasing, and whether it is
    /// within the stated slack.
    pub monotone_expected: bool,
    pub nonincreasing: bool,
    /// Largest increase between consecutive records.
    pub max_increase: f64,
}

impl FunctionalSeries {
    fn new(times: Vec<f64>, values: Vec<f64>, monotone_expected: bool, slack: f64) -> Self {
        let (limit, spread) = trailing_window(&values, TRAILING_FRACTION);
        let max_increase = values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        FunctionalSeries {
            times,
            nonincreasing: values.len() < 2 || max_increase <= slack,
            values,
            limit,
            spread,
            monotone_expected,
            max_increase,
        }
    }
}

/// `Σᵢ λᵢ ∫₁^{pᵢ(t)} F(σ(z)) dz` along the trajectory. Each component's
/// integral is carried forward between records, so every record adds one
/// short quadrature per component. The series is expected to be
/// nonincreasing when `F′ ≥ 0` on the attained stress range; the check
/// allows `10 × FUNCTIONAL_QUAD_TOL` per record.
pub fn f_functional(
    model: &StressModel,
    traj: &Trajectory,
    f: impl Fn(f64) -> f64,
    f_prime: impl Fn(f64) -> f64,
) -> Result<FunctionalSeries> {
    let n = traj.weights.len();
    let integrand = |z: f64| f(model.sigma(z));
    let segment = |i: usize, a: f64, b: f64| -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        integrate(integrand, a, b, QuadOptions::abs(FUNCTIONAL_QUAD_TOL))
            .map(|q| q.value)
            .map_err(|e| Error::QuadratureDivergence(format!("component {i}: {e}")))
    };
    let mut acc = vec![0.0; n];
    let mut prev: Vec<f64> = vec![1.0; n];
    let mut values = Vec::with_capacity(traj.len());
    let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in &traj.values {
        for i in 0..n {
            acc[i] += segment(i, prev[i], row[i])?;
            prev[i] = row[i];
            let s = model.sigma(row[i]);
            s_lo = s_lo.min(s);
            s_hi = s_hi.max(s);
        }
        values.push(weighted(&traj.weights, &acc));
    }
    let monotone_expected = s_lo.is_finite()
        && s_hi.is_finite()
        && linspace(s_lo, s_hi, 201).iter().all(|&s| f_prime(s) >= 0.0);
    Ok(FunctionalSeries::new(
        traj.times.clone(),
        values,
        monotone_expected,
        10.0 * FUNCTIONAL_QUAD_TOL,
    ))
}

fn weighted(weights: &[f64], values: &[f64]) -> f64 {
    weighted_sum(weights, values, |x| x)
}

/// The set `{z : σ(z) ∈ [a, b]}` as disjoint intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageIntervals {
    pub intervals: Vec<(f64, f64)>,
    /// `[a, b]` comes within `1e-9·max(1,|c|)` of a critical value.
    pub ill_conditioned: bool,
}

impl PreimageIntervals {
    /// Length of the set below `x`.
    pub fn measure_below(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(l, r)| (x.min(r) - l).max(0.0))
            .sum()
    }
}

/// `σ⁻¹([a, b])` on `[lower, upper]`: the breakpoints are the solutions of
/// `σ = a` and `σ = b` on each monotone piece, and every gap between
/// breakpoints is either inside or outside the preimage.
pub fn preimage(model: &StressModel, a: f64, b: f64, lower: f64, upper: f64) -> PreimageIntervals {
    let (crit, cvals) = model.critical_points();
    let mut knots = vec![lower];
    knots.extend(crit.iter().copied().filter(|&z| z > lower && z < upper));
    knots.push(upper);
    let mut breaks = knots.clone();
    for w in knots.windows(2) {
        for level in [a, b] {
            if let Some(r) = bisect(|p| model.sigma(p) - level, w[0], w[1], 0.0) {
                breaks.push(r);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        let s = model.sigma(0.5 * (w[0] + w[1]));
        if s >= a && s <= b {
            match intervals.last_mut() {
                Some(last) if last.1 == w[0] => last.1 = w[1],
                _ => intervals.push((w[0], w[1])),
            }
        }
    }
    let ill_conditioned = cvals.iter().any(|&cv| {
        let m = 1e-9 * cv.abs().max(1.0);
        (cv - a).abs() <= m || (cv - b).abs() <= m
    });
    PreimageIntervals {
        intervals,
        ill_conditioned,
    }
}

/// Lower limit of the χ-functional: 0 for positive-only laws, 1 otherwise.
pub fn z_floor(model: &StressModel) -> f64 {
    match model.domain {
        Domain::PositiveOnly => 0.0,
        Domain::FullLine => 1.0,
    }
}

/// `Σᵢ λᵢ ∫_{z_floor}^{pᵢ(t)} 1{σ(z) ∈ [a, b]} dz`, oriented so components
/// below the floor count negatively.
pub fn chi_functional(
    model: &StressModel,
    traj: &Trajectory,
    a: f64,
    b: f64,
) -> Result<(FunctionalSeries, PreimageIntervals)> {
    if !(a <= b) {
        return Err(Error::Precondition(format!("need a ≤ b, got [{a}, {b}]")));
    }
    let floor = z_floor(model);
    let all = traj.values.iter().flatten().copied();
    let (p_lo, p_hi) = all.fold((floor, floor), |(l, h), p| (l.min(p), h.max(p)));
    let lower = match model.domain {
        Domain::PositiveOnly => 1e-300,
        Domain::FullLine => p_lo.min(model.eval_window.0),
    };
    let upper = p_hi.max(model.eval_window.1);
    let pre = preimage(model, a, b, lower, upper);
    let base = pre.measure_below(floor);
    let values = traj
        .values
        .iter()
        .map(|row| {
            let m: Vec<f64> = row.iter().map(|&p| pre.measure_below(p) - base).collect();
            weighted(&traj.weights, &m)
        })
        .collect();
    Ok((
        FunctionalSeries::new(traj.times.clone(), values, false, 0.0),
        pre,
    ))
}

// ---------------------------------------------------------------------------
// Cubic identities

/// Roots of `a s² + b s + c`; empty when the discriminant is negative.
fn quadratic_roots(a: f64, b: f64, c: f64) -> (f64, Vec<f64>) {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return (disc, Vec::new());
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = if q == 0.0 {
        vec![0.0, 0.0]
    } else {
        vec![q / a, c / q]
    };
    r.sort_by(f64::total_cmp);
    (disc, r)
}

/// One quadratic `A s² + B s + C` in the limit stress, with its roots and
/// its residual at the measured limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressQuadratic {
    pub coefficients: [f64; 3],
    pub discriminant: f64,
    pub roots: Vec<f64>,
    /// `|A σ̄² + B σ̄ + C|` at the measured `σ̄`.
    pub residual: f64,
    /// Distance from the measured `σ̄` to the nearest root.
    pub root_distance: f64,
}

impl StressQuadratic {
    fn new(coefficients: [f64; 3], measured: f64) -> Self {
        let [a, b, c] = coefficients;
        let (discriminant, roots) = quadratic_roots(a, b, c);
        let root_distance = roots
            .iter()
            .map(|r| (r - measured).abs())
            .fold(f64::INFINITY, f64::min);
        StressQuadratic {
            coefficients,
            discriminant,
            roots,
            residual: ((a * measured + b) * measured + c).abs(),
            root_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicInvariants {
    pub mu: f64,
    /// Trailing limit of `Σ λᵢ (pᵢ⁷/7 − 2pᵢ⁵/5 + pᵢ³/3)`.
    pub k1: f64,
    /// Trailing limit of `Σ λᵢ (σ(pᵢ) pᵢ − pᵢ²)`.
    pub k2: f64,
    /// Trailing limit of `c(t)` and its spread.
    pub sigma_bar: f64,
    pub c_spread: f64,
    /// `μ s² − (8/3 + 4K₂) s − (8/3) μ + 35 K₁`.
    pub printed: StressQuadratic,
    /// `μ s² + (8/3 + 4K₂) s + (8/3) μ − 35 K₁`, the form that follows from
    /// the substitutions for `p³`, `p⁵`, `p⁷` on an equilibrium.
    pub derived: StressQuadratic,
}

pub fn is_standard_cubic(model: &StressModel) -> bool {
    matches!(&model.law, Law::Polynomial { coeffs, kappa }
        if *kappa == 0.0 && coeffs.len() == 4 && coeffs[..] == [0.0, -1.0, 0.0, 1.0])
}

/// `K₁` integrand per component.
pub fn k1_density(p: f64) -> f64 {
    let p2 = p * p;
    p * p2 * (p2 * p2 / 7.0 - 0.4 * p2 + 1.0 / 3.0)
}

/// `K₂` integrand per component for `σ = p³ − p`.
pub fn k2_density(p: f64) -> f64 {
    (p * p * p - p) * p - p * p
}

/// Both stabilization quadratics for a converged run of `σ = p³ − p`.
pub fn cubic_invariants(model: &StressModel, traj: &Trajectory) -> Result<CubicInvariants> {
    if !is_standard_cubic(model) {
        return Err(Error::Precondition(format!(
            "`{}` is not σ = p³ − p",
            model.name
        )));
    }
    let mu = traj.mu;
    if mu == 0.0 {
        return Err(Error::DegenerateData(
            "μ = 0: the stress quadratic loses its leading term".into(),
        ));
    }
    let (sigma_bar, c_spread) = trailing_window(&traj.stress_levels(), TRAILING_FRACTION);
    if !(c_spread <= 1e-4) {
        return Err(Error::Precondition(format!(
            "c(t) has not settled: trailing spread {c_spread:e}"
        )));
    }
    let series = |f: fn(f64) -> f64| -> Vec<f64> {
        traj.values
            .iter()
            .map(|row| weighted_sum(&traj.weights, row, f))
            .collect()
    };
    let (k1, _) = trailing_window(&series(k1_density), TRAILING_FRACTION);
    let (k2, _) = trailing_window(&series(k2_density), TRAILING_FRACTION);
    let b = 8.0 / 3.0 + 4.0 * k2;
    let c = 8.0 / 3.0 * mu - 35.0 * k1;
    Ok(CubicInvariants {
        mu,
        k1,
        k2,
        sigma_bar,
        c_spread,
        printed: StressQuadratic::new([mu, -b, -c], sigma_bar),
        derived: StressQuadratic::new([mu, b, c], sigma_bar),
    })
}

// ---------------------------------------------------------------------------
// Volume fractions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionsRecord {
    pub t: f64,
    pub c: f64,
    pub branch_values: Vec<f64>,
    pub fractions: Vec<f64>,
    pub eps: f64,
    /// `1 − Σ μᵢ`.
    pub residual: f64,
    /// `c` within `1e-6·max(1,|c|)` of a critical value.
    pub ambiguous: bool,
}

/// `μᵢ(t)`: the mass within `eps` of each solution `pᵢ(c(t))`. The default
/// band is a quarter of the smallest gap between adjacent branch values (a
/// quarter of `max(1, |p₁|)` with a single branch), so bands are disjoint.
pub fn volume_fractions(
    model: &StressModel,
    traj: &Trajectory,
    eps_band: Option<f64>,
) -> Vec<FractionsRecord> {
    let (_, cvals) = model.critical_points();
    traj.times
        .iter()
        .zip(&traj.values)
        .zip(&traj.diagnostics)
        .map(|((&t, row), d)| {
            let c = d.c;
            let branch_values = model.solve_level(c);
            let gap = branch_values
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            let eps = eps_band.unwrap_or(if gap.is_finite() {
                0.25 * gap
            } else {
                0.25 * branch_values.first().map_or(1.0, |p| p.abs().max(1.0))
            });
            let fractions: Vec<f64> = branch_values
                .iter()
                .map(|&b| {
                    let m: Vec<f64> = row
                        .iter()
                        .zip(&traj.weights)
                        .filter(|(&p, _)| (p - b).abs() < eps)
                        .map(|(_, &w)| w)
                        .collect();
                    pairwise_sum(&m)
                })
                .collect();
            let residual = 1.0 - pairwise_sum(&fractions);
            let ambiguous = cvals
                .iter()
                .any(|&cv| (cv - c).abs() <= 1e-6 * cv.abs().max(1.0));
            FractionsRecord {
                t,
                c,
                branch_values,
                fractions,
                eps,
                residual,
                ambiguous,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Nondegeneracy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nc3Report {
    pub mu: f64,
    pub c_grid: Vec<f64>,
    /// `(p₁(c) + p₂(c) + p₃(c))/3`.
    pub branch_mean: Vec<f64>,
    pub max_deviation: f64,
    pub nondegenerate: bool,
}

/// Tabulates the mean of the three branches over the open band between the
/// two critical values; nondegenerate iff it differs from `μ` by more than
/// `1e-8` somewhere.
pub fn nc3_check(model: &StressModel, mu: f64, nc: usize) -> Result<Nc3Report> {
    let (z1, z2) = model.two_critical_points().ok_or_else(|| {
        Error::Precondition(format!("`{}` does not have exactly two critical points", model.name))
    })?;
    let (c_minus, c_plus) = (model.sigma(z2), model.sigma(z1));
    let margin = 1e-6 * (c_plus - c_minus);
    let set = find_branches(model, (c_minus + margin, c_plus - margin), nc.max(2))?;
    if set.count() != 3 {
        return Err(Error::ModelInconsistency(format!(
            "{} branches between the critical values",
            set.count()
        )));
    }
    let branch_mean: Vec<f64> = (0..set.c_grid.len())
        .map(|j| set.at_node(j).iter().sum::<f64>() / 3.0)
        .collect();
    let max_deviation = branch_mean
        .iter()
        .map(|m| (m - mu).abs())
        .fold(0.0, f64::max);
    Ok(Nc3Report {
        mu,
        c_grid: set.c_grid,
        branch_mean,
        max_deviation,
        nondegenerate: max_deviation > 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub size: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub trace: f64,
    /// `max/min` eigenvalue, infinite when the smallest is not positive.
    pub condition: f64,
    pub independent: bool,
}

/// Gram matrix of sampled vectors; independent iff its smallest eigenvalue
/// exceeds `1e-10 × trace`.
pub fn gram_report(vectors: &[Vec<f64>]) -> GramReport {
    let k = vectors.len();
    let g = DMatrix::from_fn(k, k, |i, j| {
        let prod: Vec<f64> = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).collect();
        pairwise_sum(&prod)
    });
    let trace = g.trace();
    let eig = SymmetricEigen::new(g).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GramReport {
        size: k,
        min_eigenvalue: min,
        max_eigenvalue: max,
        trace,
        condition: if min > 0.0 { max / min } else { f64::INFINITY },
        independent: k > 0 && min > 1e-10 * trace,
    }
}

/// Gram test of the branch derivatives `pᵢ′(c) = 1/σ′(pᵢ(c))` sampled on an
/// `nc`-point grid over `c_interval`.
pub fn nc_linear_independence(model: &StressModel, c_interval: (f64, f64), nc: usize) -> Result<GramReport> {
    let set = find_branches(model, c_interval, nc)?;
    let vectors: Vec<Vec<f64>> = set
        .branches
        .iter()
        .map(|b| b.values.iter().map(|&p| 1.0 / model.sigma_prime(p)).collect())
        .collect();
    Ok(gram_report(&vectors))
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub model: String,
    pub mu: f64,
    pub c_limit: f64,
    pub c_spread: f64,
    pub rhs_norm_final: f64,
    pub converged: bool,
    /// Present for `σ = p³ − p` runs that settled.
    pub cubic: Option<CubicInvariants>,
    pub cubic_error: Option<Error>,
    pub fractions_final: Option<FractionsRecord>,
    pub nc3: Option<Nc3Report>,
    /// Gram test on the band around the limit stress, when it avoids the
    /// critical values.
    pub nc_gram: Option<GramReport>,
}

pub fn analyze(model: &StressModel, traj: &Trajectory) -> AsymptoticsReport {
    let conv = convergence_monitor(traj);
    let (c_limit, c_spread) = trailing_window(&traj.stress_levels(), TRAILING_FRACTION);
    let (cubic, cubic_error) = if is_standard_cubic(model) {
        match cubic_invariants(model, traj) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e)),
        }
    } else {
        (None, None)
    };
    let fractions_final = volume_fractions(model, traj, None).pop();
    let nc3 = nc3_check(model, traj.mu, 201).ok();
    let band = 0.05 * (1.0 + c_limit.abs());
    let nc_gram = nc_linear_independence(model, (c_limit - band, c_limit + band), 201).ok();
    AsymptoticsReport {
        model: model.name.clone(),
        mu: traj.mu,
        c_limit,
        c_spread,
        rhs_norm_final: conv.final_norm,
        converged: conv.converged,
        cubic,
        cubic_error,
        fractions_final,
        nc3,
        nc_gram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::displacement::{integrate as run, random_state, IntegrateOptions, SimpleState, Stepper};

    fn still(model: &StressModel, state: &SimpleState) -> Trajectory {
        Trajectory::from_records(
            model,
            state.weights.clone(),
            vec![0.0, 1.0, 2.0],
            vec![state.values.clone(); 3],
            Stepper::default(),
        )
        .unwrap()
    }

    #[test]
    fn equilibria_examples() {
        assert!(equilibria_enumerate(&StressModel::linear(1.0).unwrap(), 0.3).unwrap().unique);
        let cubic = StressModel::cubic();
        let r = equilibria_enumerate(&cubic, 0.0).unwrap();
        assert!(!r.unique);
        let at_zero = r
            .descriptions
            .iter()
            .min_by(|a, b| a.c.abs().total_cmp(&b.c.abs()))
            .unwrap();
        assert!(at_zero.c.abs() < 1e-12);
        assert!((at_zero.fractions[0] - 0.5).abs() < 1e-10);
        assert!((at_zero.branch_values[0] + 1.0).abs() < 1e-12);
        for d in &r.descriptions {
            assert!(d.mean.abs() < 1e-12);
            for &p in &d.branch_values {
                assert!((cubic.sigma(p) - d.c).abs() <= 1e-10 * d.c.abs().max(1.0));
            }
        }
        assert!(equilibria_enumerate(&cubic, 5.0).unwrap().unique);
    }

    #[test]
    fn still_state_has_zero_rhs_and_constant_functionals() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![-1.0, 1.0], vec![0.3, 0.7]).unwrap();
        let traj = still(&m, &s);
        let c = convergence_monitor(&traj);
        assert!(c.rhs_norms.iter().all(|&x| x == 0.0) && c.converged);
        let one = f_functional(&m, &traj, |_| 1.0, |_| 0.0).unwrap();
        assert!(one.values.iter().all(|v| (v - (s.mu() - 1.0)).abs() < 1e-14));
    }

    #[test]
    fn f_squared_antiderivative_vanishes_at_one() {
        assert!((k1_density(1.0) - 8.0 / 105.0).abs() < 1e-16);
        let m = StressModel::cubic();
        let s = SimpleState::uniform(vec![1.0, 1.0]).unwrap();
        let v = f_functional(&m, &still(&m, &s), |x| x * x, |x| 2.0 * x).unwrap();
        assert_eq!(v.values, vec![0.0; 3]);
        // Oracle: closed form z⁷/7 − 2z⁵/5 + z³/3 − 8/105 at z = 1.7.
        let s = SimpleState::uniform(vec![1.7]).unwrap();
        let v = f_functional(&m, &still(&m, &s), |x| x * x, |x| 2.0 * x).unwrap();
        assert!((v.values[0] - (k1_density(1.7) - 8.0 / 105.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_functional_tracks_energy() {
        let m = StressModel::cubic();
        let s = random_state(&m, 0.5, 8, 2);
        let traj = run(&m, &s, &linspace(0.0, 5.0, 26), IntegrateOptions::default()).unwrap();
        let f = f_functional(&m, &traj, |x| x, |_| 1.0).unwrap();
        assert!(f.monotone_expected && f.nonincreasing);
        for (v, e) in f.values.iter().zip(traj.energies()) {
            assert!((v - e).abs() < 1e-11);
        }
    }

    #[test]
    fn chi_examples() {
        let m = StressModel::cubic();
        let s = SimpleState::uniform(vec![-1.5, 0.2, 2.0]).unwrap();
        let traj = still(&m, &s);
        let (out, _) = chi_functional(&m, &traj, 1e6, 2e6).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        let (_, pre) = chi_functional(&m, &traj, -0.1, 0.1).unwrap();
        assert_eq!(pre.intervals.len(), 3);
        for (&(l, r), centre) in pre.intervals.iter().zip([-1.0, 0.0, 1.0]) {
            assert!(l < centre && centre < r);
            assert!((m.sigma(l).abs() - 0.1).abs() < 1e-12);
            assert!((m.sigma(r).abs() - 0.1).abs() < 1e-12);
        }
        // Monotone law: the preimage of [a, b] is [σ⁻¹(a), σ⁻¹(b)].
        let lin = StressModel::linear(1.0).unwrap();
        let s = SimpleState::uniform(vec![3.0]).unwrap();
        let (out, _) = chi_functional(&lin, &still(&lin, &s), 0.5, 1.5).unwrap();
        assert!((out.values[0] - 1.0).abs() < 1e-12);
        let s = SimpleState::uniform(vec![-3.0]).unwrap();
        let (out, _) = chi_functional(&lin, &still(&lin, &s), -3.0, -1.5).unwrap();
        assert!((out.values[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn cubic_invariants_on_single_root_equilibrium() {
        let m = StressModel::cubic();
        for r in [-1.0f64, 1.0] {
            let s = SimpleState::uniform(vec![r; 4]).unwrap();
            let inv = cubic_invariants(&m, &still(&m, &s)).unwrap();
            assert!(inv.sigma_bar.abs() < 1e-15);
            assert!(inv.derived.residual < 1e-14 && inv.printed.residual < 1e-14);
        }
        let s = SimpleState::uniform(vec![-1.0, 1.0]).unwrap();
        assert!(matches!(
            cubic_invariants(&m, &still(&m, &s)),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn derived_quadratic_holds_on_two_phase_equilibria() {
        // Oracle: for c in the band, a two-point equilibrium on the outer
        // branches with mean μ; σ̄ = c must be a root of the derived form.
        let m = StressModel::cubic();
        for c in [-0.3, -0.1, 0.05, 0.25] {
            let r = m.solve_level(c);
            let (a, b) = (r[0], r[2]);
            let mu = 0.3 * a + 0.7 * b;
            let s = SimpleState::new(vec![a, b], vec![0.3, 0.7]).unwrap();
            let inv = cubic_invariants(&m, &still(&m, &s)).unwrap();
            assert!((inv.mu - mu).abs() < 1e-15);
            assert!(inv.derived.residual < 1e-12, "{c}: {}", inv.derived.residual);
            assert!((inv.printed.residual - 2.0 * mu * c * c).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_fraction_examples() {
        let m = StressModel::cubic();
        let r = m.solve_level(0.1);
        let s = SimpleState::new(vec![r[0], r[2]], vec![0.4, 0.6]).unwrap();
        let f = volume_fractions(&m, &still(&m, &s), None);
        let last = f.last().unwrap();
        assert_eq!(last.fractions.len(), 3);
        assert!((last.fractions[0] - 0.4).abs() < 1e-15 && last.fractions[1] == 0.0);
        assert!(last.residual.abs() < 1e-15);
        let single = SimpleState::uniform(vec![2.0; 3]).unwrap();
        let f = volume_fractions(&m, &still(&m, &single), None);
        assert_eq!(f[0].fractions, vec![1.0]);
    }

    #[test]
    fn nc3_examples() {
        let cubic = StressModel::cubic();
        let r = nc3_check(&cubic, 0.5, 101).unwrap();
        assert!(r.nondegenerate && r.branch_mean.iter().all(|m| m.abs() < 1e-12));
        assert!(!nc3_check(&cubic, 0.0, 101).unwrap().nondegenerate);
        let shifted = StressModel::shifted_cubic(1.0, -3.0, 2.0, 0.0).unwrap();
        let r = nc3_check(&shifted, 1.0, 101).unwrap();
        assert!(r.branch_mean.iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(!r.nondegenerate);
        assert!(nc3_check(&shifted, 0.5, 101).unwrap().nondegenerate);
        assert!(matches!(
            nc3_check(&StressModel::linear(1.0).unwrap(), 0.5, 11),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gram_examples() {
        let lin = StressModel::linear(1.0).unwrap();
        assert!(nc_linear_independence(&lin, (-1.0, 1.0), 50).unwrap().independent);
        let v = vec![1.0, 2.0, 3.0];
        let dup = gram_report(&[v.clone(), v]);
        assert!(!dup.independent && dup.min_eigenvalue.abs() < 1e-12);
        // The three cubic branches sum to zero, so their derivatives do too.
        let cubic = StressModel::cubic();
        let g = nc_linear_independence(&cubic, (-0.2, 0.2), 201).unwrap();
        assert_eq!(g.size, 3);
        assert!(!g.independent, "{g:?}");
        // Any two of them are independent.
        let set = find_branches(&cubic, (-0.2, 0.2), 201).unwrap();
        let d: Vec<Vec<f64>> = set.branches[..2]
            .iter()
            .map(|b| b.values.iter().map(|&p| 1.0 / cubic.sigma_prime(p)).collect())
            .collect();
        assert!(gram_report(&d).independent);
    }
}
