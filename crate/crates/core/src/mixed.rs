//! Traction-free end: the strain decouples into the pointwise flow
//! `ṗ = −σ(p)`, solved independently at every material point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::numerics::rk::{solve, SolveOptions};
use crate::numerics::{pairwise_sum, roots::invert_increasing};
use crate::stress::{Domain, Hypothesis, StressModel};

/// Relative tolerance of the pointwise Runge–Kutta path.
pub const POINTWISE_RTOL: f64 = 1e-9;
/// Below this strain the quadrature relation replaces the ODE.
pub const QUADRATURE_SWITCH: f64 = 1e-6;
/// The quadrature path hands off to the ODE once `p` reaches this value.
pub const BOOTSTRAP_TARGET: f64 = 1e-4;
/// `|σ(p)|` below which a final strain counts as a root.
pub const LIMIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointwiseMethod {
    /// Bootstrap by inverting `∫_{p₀}^{p} −dz/σ = t`, then the ODE.
    QuadratureInversion,
    StiffOde,
    /// `p₀` is a root of σ.
    RestPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseSolution {
    pub p0: f64,
    pub method: PointwiseMethod,
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
    /// Root of σ the solution settles on, if `|σ(p(T))| < LIMIT_TOL`.
    pub limit_root: Option<f64>,
}

fn normalized_times(t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0))
        || t_grid.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Precondition(
            "times must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    let mut times = vec![0.0];
    for &t in t_grid {
        if t > *times.last().expect("nonempty") {
            times.push(t);
        }
    }
    Ok(times)
}

/// Solves `ṗ = −σ(p)`, `p(0) = p₀ ≥ 0`, recording at `0` and every entry of
/// `t_grid`.
pub fn solve_pointwise(model: &StressModel, p0: f64, t_grid: &[f64]) -> Result<PointwiseSolution> {
    if !(p0 >= 0.0 && p0.is_finite()) {
        return Err(Error::Precondition(format!("p0 must be finite and ≥ 0, got {p0}")));
    }
    let times = normalized_times(t_grid)?;
    let positive = model.domain == Domain::PositiveOnly;
    if !positive || p0 > 0.0 {
        model.check_domain(p0)?;
    }
    let s0 = if positive && p0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        model.sigma(p0)
    };
    if s0 == 0.0 {
        return Ok(PointwiseSolution {
            p0,
            method: PointwiseMethod::RestPoint,
            samples: vec![p0; times.len()],
            times,
            limit_root: Some(p0),
        });
    }

    let mut samples = Vec::with_capacity(times.len());
    let mut method = PointwiseMethod::StiffOde;
    let (mut start_t, mut start_p) = (0.0, p0);
    let mut k0 = 0;
    if positive && p0 < QUADRATURE_SWITCH {
        method = PointwiseMethod::QuadratureInversion;
        let boot = QuadratureStart::new(model, p0)?;
        while k0 < times.len() && times[k0] <= boot.t_boot {
            samples.push(boot.strain_at(times[k0]));
            k0 += 1;
        }
        start_t = boot.t_boot;
        start_p = BOOTSTRAP_TARGET;
    }
    if k0 < times.len() {
        let mut ode_times = vec![start_t];
        ode_times.extend_from_slice(&times[k0..]);
        let rhs = |y: &[f64], dy: &mut [f64]| {
            if positive && !(y[0] > 0.0) {
                return false;
            }
            dy[0] = -model.sigma(y[0]);
            dy[0].is_finite()
        };
        let opts = SolveOptions {
            rtol: POINTWISE_RTOL,
            atol: 1e-12,
            ..Default::default()
        };
        let records = solve(rhs, &[start_p], &ode_times, opts).map_err(|f| Error::Stiffness {
            t: f.t,
            dt: f.h,
            hint: format!("pointwise flow from p0 = {p0} stalled at p = {}", f.y[0]),
        })?;
        samples.extend(records.into_iter().skip(1).map(|y| y[0]));
    }
    let last = *samples.last().expect("nonempty");
    let limit_root = classify_limit(model, last);
    Ok(PointwiseSolution {
        p0,
        method,
        times,
        samples,
        limit_root,
    })
}

/// Nearest root of σ when `|σ(p)| < LIMIT_TOL`.
pub fn classify_limit(model: &StressModel, p: f64) -> Option<f64> {
    if !model.contains(p) || model.sigma(p).abs() >= LIMIT_TOL {
        return None;
    }
    model
        .roots()
        .iter()
        .copied()
        .min_by(|a, b| (a - p).abs().total_cmp(&(b - p).abs()))
        .or(Some(p))
}

/// The relation `G(p) = ∫_{p₀}^{p} −dz/σ(z) = t` on `[p₀, BOOTSTRAP_TARGET]`.
struct QuadratureStart<'a> {
    model: &'a StressModel,
    p0: f64,
    t_boot: f64,
}

impl<'a> QuadratureStart<'a> {
    fn new(model: &'a StressModel, p0: f64) -> Result<Self> {
        let unsolvable = || {
            Error::hypothesis(
                Hypothesis::SingularAtZero.name(),
                format!("σ is not negative on [{p0}, {BOOTSTRAP_TARGET}]"),
            )
        };
        if !(model.sigma(BOOTSTRAP_TARGET) < 0.0) || model.p_minus().is_none_or(|r| r <= BOOTSTRAP_TARGET) {
            return Err(unsolvable());
        }
        let mut s = Self {
            model,
            p0,
            t_boot: 0.0,
        };
        s.t_boot = s.elapsed(BOOTSTRAP_TARGET)?;
        if !s.t_boot.is_finite() {
            return Err(unsolvable());
        }
        Ok(s)
    }

    fn elapsed(&self, p: f64) -> Result<f64> {
        if p <= self.p0 {
            return Ok(0.0);
        }
        let q = integrate(
            |z| -1.0 / self.model.sigma(z),
            self.p0,
            p,
            QuadOptions::abs(1e-16),
        )?;
        Ok(q.value)
    }

    fn strain_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.p0;
        }
        invert_increasing(
            |p| self.elapsed(p).unwrap_or(f64::INFINITY),
            t,
            self.p0,
            BOOTSTRAP_TARGET,
            1e-15,
        )
    }
}

/// Pointwise solutions for every sample, solved concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSolution {
    pub times: Vec<f64>,
    pub points: Vec<PointwiseSolution>,
    /// `∫W(p) dx` as the equal-weight mean over samples.
    pub energy: Vec<f64>,
    /// Classified limit field `p̄`.
    pub limit: Vec<Option<f64>>,
}

impl FieldSolution {
    /// Strain field at record `k`.
    pub fn field(&self, k: usize) -> Vec<f64> {
        self.points.iter().map(|s| s.samples[k]).collect()
    }
}

pub fn solve_field(model: &StressModel, p0_samples: &[f64], t_grid: &[f64]) -> Result<FieldSolution> {
    if p0_samples.is_empty() {
        return Err(Error::DegenerateData("no samples".into()));
    }
    let points = p0_samples
        .par_iter()
        .map(|&p0| solve_pointwise(model, p0, t_grid))
        .collect::<Result<Vec<_>>>()?;
    let times = points[0].times.clone();
    let n = points.len() as f64;
    let energy = (0..times.len())
        .map(|k| {
            let w: Vec<f64> = points
                .iter()
                .map(|s| w_or_inf(model, s.samples[k]))
                .collect();
            pairwise_sum(&w) / n
        })
        .collect();
    let limit = points.iter().map(|s| s.limit_root).collect();
    Ok(FieldSolution {
        times,
        points,
        energy,
        limit,
    })
}

/// `W(p)`, with the singular limit `W(0⁺) = +∞` for positive-only laws.
fn w_or_inf(model: &StressModel, p: f64) -> f64 {
    if model.domain == Domain::PositiveOnly && p == 0.0 {
        f64::INFINITY
    } else {
        model.eval_w(p).unwrap_or(f64::NAN)
    }
}

/// `y(x) = ∫₀^x p(s) ds` on the uniform grid `x_j = j/(n−1)` by the
/// cumulative trapezoid rule.
pub fn reconstruct_y(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut y = vec![0.0; n];
    if n < 2 {
        return y;
    }
    let h = 1.0 / (n - 1) as f64;
    for j in 1..n {
        y[j] = y[j - 1] + 0.5 * h * (p[j - 1] + p[j]);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linspace;
    use proptest::prelude::*;

    #[test]
    fn linear_law_matches_closed_form() {
        let m = StressModel::linear(1.0).unwrap();
        let grid = linspace(0.0, 20.0, 201);
        for p0 in [0.1f64, 3.0, 10.0] {
            let s = solve_pointwise(&m, p0, &grid).unwrap();
            let err = s
                .times
                .iter()
                .zip(&s.samples)
                .map(|(t, p)| (p - (1.0 + (p0 - 1.0) * (-t).exp())).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "p0 = {p0}: {err:e}");
            let resolved = (p0 - 1.0f64).abs() * (-20.0f64).exp() < LIMIT_TOL;
            assert_eq!(s.limit_root.is_some(), resolved, "p0 = {p0}");
        }
    }

    #[test]
    fn root_is_a_rest_point() {
        let m = StressModel::cubic();
        let s = solve_pointwise(&m, 1.0, &[1.0, 5.0]).unwrap();
        assert_eq!(s.samples, vec![1.0; 3]);
        assert_eq!(s.method, PointwiseMethod::RestPoint);
    }

    #[test]
    fn log_law_from_zero_matches_quadrature_oracle() {
        // Oracle: p(t) solves ∫₀^p dz/(−ln z) = t; the integrand is
        // evaluated by a fine midpoint rule and inverted by bisection.
        let g = |p: f64| {
            let n = 200_000;
            let h = p / n as f64;
            (0..n).map(|k| -1.0 / ((k as f64 + 0.5) * h).ln()).sum::<f64>() * h
        };
        let m = StressModel::log_law();
        let ts = [1e-6, 1e-3, 0.05, 0.2];
        let s = solve_pointwise(&m, 0.0, &ts).unwrap();
        assert_eq!(s.method, PointwiseMethod::QuadratureInversion);
        for (k, &t) in ts.iter().enumerate() {
            let (mut lo, mut hi) = (0.0, 0.999);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < t {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            let p = s.samples[k + 1];
            assert!((p - lo).abs() < 1e-6 * lo.max(1e-3), "t = {t}: {p} vs {lo}");
        }
        assert!(s.samples[1..].iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_start_without_singularity_is_rejected() {
        let m = StressModel::cubic();
        assert!(solve_pointwise(&m, 0.0, &[1.0]).unwrap().limit_root == Some(0.0));
        let lin = StressModel::linear(-1.0).unwrap();
        assert!(solve_pointwise(&lin, 0.0, &[1.0]).is_ok());
        let pos = StressModel::polynomial(vec![1.0, 1.0], 1e-12).unwrap();
        assert!(matches!(
            solve_pointwise(&pos, 0.0, &[1.0]),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn field_limits_are_roots_and_energy_decreases() {
        let m = StressModel::singular_cubic_default();
        let samples: Vec<f64> = (0..24).map(|k| 0.05 + 0.12 * k as f64).collect();
        let sol = solve_field(&m, &samples, &linspace(0.0, 60.0, 121)).unwrap();
        for (lim, p) in sol.limit.iter().zip(&sol.points) {
            let r = lim.unwrap_or_else(|| panic!("unresolved from {}", p.p0));
            assert!(m.roots().iter().any(|x| (x - r).abs() < 1e-12));
        }
        assert!(sol.energy.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn reconstruct_y_examples() {
        let y = reconstruct_y(&[0.7; 11]);
        for (j, v) in y.iter().enumerate() {
            assert!((v - 0.7 * j as f64 / 10.0).abs() < 1e-15);
        }
        assert!(reconstruct_y(&[0.0; 5]).iter().all(|&v| v == 0.0));
        let step: Vec<f64> = (0..9).map(|j| if j < 4 { 1.0 } else { 3.0 }).collect();
        let y = reconstruct_y(&step);
        let h = 1.0 / 8.0;
        assert!((y[3] - 3.0 * h).abs() < 1e-15);
        assert!((y[8] - y[4] - 4.0 * 3.0 * h).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn flows_do_not_cross(a in 0.0f64..4.0, b in 0.0f64..4.0) {
            let m = StressModel::singular_cubic_default();
            let grid = [0.01, 0.3, 2.0, 10.0];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let sl = solve_pointwise(&m, lo, &grid).unwrap();
            let sh = solve_pointwise(&m, hi, &grid).unwrap();
            for (x, y) in sl.samples.iter().zip(&sh.samples) {
                prop_assert!(*x <= y + 1e-9);
            }
        }
    }
}
