//! Time integration of the nonlocal system with either an explicit
//! Dormand-Prince 5(4) stepper or the proximal (implicit Euler) stepper.

use serde::{Deserialize, Serialize};

use super::prox::{check_tau, prox_values};
use super::{mean, rhs_into, SimpleState};
use crate::error::{Error, Result};
use crate::numerics::rk::{dopri_step, error_norm, initial_step, Controller, Trial, B};
use crate::numerics::pairwise_sum;
use crate::stress::StressModel;

/// A run counts as converged when the weighted `‖ṗ‖₂` drops below this.
pub const CONVERGED_RHS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stepper {
    Rk45 { rtol: f64, atol: f64 },
    Prox { tau: f64 },
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::Rk45 {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub stepper: Stepper,
    pub h_max: f64,
    /// Smallest admissible explicit step relative to `max(1, t)`.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stepper: Stepper::default(),
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 50_000_000,
        }
    }
}

impl IntegrateOptions {
    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            stepper: Stepper::Rk45 { rtol, atol },
            ..Self::default()
        }
    }

    pub fn prox(tau: f64) -> Self {
        Self {
            stepper: Stepper::Prox { tau },
            ..Self::default()
        }
    }
}

/// Per-record diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `c = Σ λⱼ σ(pⱼ)`.
    pub c: f64,
    /// `Σ λⱼ W(pⱼ)`.
    pub energy: f64,
    /// `Σ λⱼ ṗⱼ²`.
    pub dissipation: f64,
    pub min: f64,
    pub max: f64,
}

impl Diagnostics {
    pub fn compute(model: &StressModel, weights: &[f64], values: &[f64]) -> Self {
        let mut d = vec![0.0; values.len()];
        let c = rhs_into(model, weights, values, &mut d);
        let w: Vec<f64> = values.iter().map(|&p| model.w_unchecked(p)).collect();
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        Diagnostics {
            c,
            energy: mean(weights, &w),
            dissipation: mean(weights, &sq),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Weighted `‖ṗ‖₂`.
    pub fn rhs_norm(&self) -> f64 {
        self.dissipation.sqrt()
    }
}

/// Recorded solution of the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub stepper: Stepper,
    pub seed: Option<u64>,
    pub weights: Vec<f64>,
    pub mu: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    /// `∫₀^t Σ λⱼ ṗⱼ² ds` accumulated by the stepper, aligned with `times`.
    pub dissipated: Vec<f64>,
    pub converged: bool,
    pub failure: Option<Error>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    fn start(model: &StressModel, state: &SimpleState, stepper: Stepper) -> Self {
        Trajectory {
            model: model.name.clone(),
            stepper,
            seed: None,
            weights: state.weights.clone(),
            mu: state.mu(),
            times: Vec::new(),
            values: Vec::new(),
            diagnostics: Vec::new(),
            dissipated: Vec::new(),
            converged: false,
            failure: None,
            steps: 0,
            rejected: 0,
        }
    }

    fn record(&mut self, model: &StressModel, t: f64, values: &[f64], dissipated: f64) {
        self.times.push(t);
        self.values.push(values.to_vec());
        self.diagnostics
            .push(Diagnostics::compute(model, &self.weights, values));
        self.dissipated.push(dissipated);
    }

    fn finish(&mut self) {
        self.converged = self.failure.is_none()
            && self
                .diagnostics
                .last()
                .is_some_and(|d| d.rhs_norm() < CONVERGED_RHS);
    }

    /// Rebuilds a trajectory from stored records; diagnostics are recomputed
    /// and the dissipation integral uses the trapezoid rule.
    pub fn from_records(
        model: &StressModel,
        weights: Vec<f64>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        stepper: Stepper,
    ) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidState("times and states do not align".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidState("times must be strictly increasing".into()));
        }
        let first = SimpleState::new(values[0].clone(), weights)?;
        for v in &values {
            if v.len() != first.len() {
                return Err(Error::InvalidState("ragged state records".into()));
            }
            for &p in v {
                model.check_domain(p)?;
            }
        }
        let mut traj = Trajectory::start(model, &first, stepper);
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (t, v) in times.iter().zip(&values) {
            let d = Diagnostics::compute(model, &traj.weights, v).dissipation;
            if let Some((tp, dp)) = prev {
                acc += 0.5 * (t - tp) * (d + dp);
            }
            prev = Some((*t, d));
            traj.record(model, *t, v, acc);
        }
        traj.finish();
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> SimpleState {
        SimpleState {
            values: self.values[k].clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn final_state(&self) -> SimpleState {
        self.state(self.len() - 1)
    }

    /// Weighted `‖ṗ‖₂` at every record.
    pub fn rhs_norms(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.rhs_norm()).collect()
    }

    pub fn stress_levels(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.c).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.energy).collect()
    }

    /// `Σ λᵢ pᵢ` at every record.
    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().map(|v| mean(&self.weights, v)).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

struct Explicit<'a> {
    model: &'a StressModel,
    weights: &'a [f64],
    mu: f64,
    rtol: f64,
    atol: f64,
    /// Indices sorted by initial value, and whether consecutive pairs were
    /// strictly ordered at the start.
    order: Vec<usize>,
    strict: Vec<bool>,
}

impl<'a> Explicit<'a> {
    fn new(model: &'a StressModel, state: &'a SimpleState, rtol: f64, atol: f64) -> Self {
        let mut order: Vec<usize> = (0..state.len()).collect();
        order.sort_by(|&a, &b| state.values[a].total_cmp(&state.values[b]));
        let strict = order
            .windows(2)
            .map(|w| state.values[w[0]] < state.values[w[1]])
            .collect();
        Explicit {
            model,
            weights: &state.weights,
            mu: state.mu(),
            rtol,
            atol,
            order,
            strict,
        }
    }

    fn field(&self, y: &[f64], dy: &mut [f64]) -> bool {
        if y.iter().any(|&p| !self.model.contains(p)) {
            return false;
        }
        rhs_into(self.model, self.weights, y, dy);
        dy.iter().all(|d| d.is_finite())
    }

    /// Components that converge onto the same root eventually agree to
    /// rounding; only a reversal beyond a few ulps counts as a crossing.
    fn ordered(&self, y: &[f64]) -> bool {
        self.order.windows(2).zip(&self.strict).all(|(w, &s)| {
            let (a, b) = (y[w[0]], y[w[1]]);
            let ulps = 4.0 * f64::EPSILON * a.abs().max(b.abs());
            if s {
                b - a >= -ulps
            } else {
                (b - a).abs() <= ulps
            }
        })
    }

    /// Shifts all values by the scalar that restores the mean.
    fn renormalize(&self, y: &mut [f64]) {
        for _ in 0..2 {
            let d = self.mu - mean(self.weights, y);
            if d == 0.0 {
                break;
            }
            for v in y.iter_mut() {
                *v += d;
            }
        }
    }

    fn dissipation(&self, k: &[f64]) -> f64 {
        let sq: Vec<f64> = k.iter().map(|x| x * x).collect();
        mean(self.weights, &sq)
    }

    /// `h Σ b_s D(k_s)`: the dissipation integral over the step, integrated
    /// as an extra component of the same Runge-Kutta scheme.
    fn step_dissipation(&self, trial: &Trial, h: f64) -> f64 {
        let terms: Vec<f64> = (0..7)
            .filter(|&s| B[s] != 0.0)
            .map(|s| B[s] * self.dissipation(&trial.stages[s]))
            .collect();
        h * pairwise_sum(&terms)
    }

    /// Attempts one step of size `h`; `Ok` carries the accepted trial and its
    /// error norm, `Err` the error norm (∞ if a stage left the domain).
    fn attempt(&self, y: &[f64], k1: &[f64], h: f64) -> std::result::Result<(Trial, f64), f64> {
        let mut f = |a: &[f64], b: &mut [f64]| self.field(a, b);
        let trial = dopri_step(&mut f, y, k1, h).ok_or(f64::INFINITY)?;
        let err = error_norm(y, &trial, self.rtol, self.atol);
        if !err.is_finite() || err > 1.0 {
            return Err(err);
        }
        if !self.ordered(&trial.y) {
            return Err(f64::INFINITY);
        }
        Ok((trial, err))
    }
}

/// Result of a single controlled explicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitStep {
    pub state: SimpleState,
    pub dt_used: f64,
    /// Step size proposed by the controller for the next step.
    pub dt_next: f64,
}

/// One error-controlled Dormand-Prince step from `state`, starting at the
/// trial size `dt` and shrinking until accepted. Steps leaving the domain or
/// reordering components are rejected; the mean is restored by a scalar
/// shift afterwards.
pub fn step_explicit(
    model: &StressModel,
    state: &SimpleState,
    dt: f64,
    rtol: f64,
    atol: f64,
    dt_max: f64,
) -> Result<ExplicitStep> {
    state.validate(model)?;
    let ex = Explicit::new(model, state, rtol, atol);
    let mut k1 = vec![0.0; state.len()];
    ex.field(&state.values, &mut k1);
    let mut ctrl = Controller::default();
    let mut h = dt.min(dt_max);
    loop {
        if h < 1e-14 {
            return Err(Error::Stiffness {
                t: 0.0,
                dt: h,
                hint: "try the proximal stepper".into(),
            });
        }
        match ex.attempt(&state.values, &k1, h) {
            Ok((trial, err)) => {
                let mut y = trial.y;
                ex.renormalize(&mut y);
                return Ok(ExplicitStep {
                    state: SimpleState {
                        values: y,
                        weights: state.weights.clone(),
                    },
                    dt_used: h,
                    dt_next: ctrl.accept(h, err).min(dt_max),
                });
            }
            Err(err) => h = ctrl.reject(h, err),
        }
    }
}

/// Integrates from `state0` at `t = 0`, recording at every time in `record`
/// (nondecreasing, last entry is the horizon; `0` is prepended if missing).
///
/// Invalid input is an error. A failure during the run is returned inside the
/// trajectory (`failure`), which keeps every record written before it.
pub fn integrate(
    model: &StressModel,
    state0: &SimpleState,
    record: &[f64],
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    state0.validate(model)?;
    if record.iter().any(|t| !(t.is_finite() && *t >= 0.0))
        || record.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Precondition(
            "record times must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    let mut times: Vec<f64> = Vec::with_capacity(record.len() + 1);
    if record.first().is_none_or(|&t| t > 0.0) {
        times.push(0.0);
    }
    for &t in record {
        if times.last().is_none_or(|&l| t > l) {
            times.push(t);
        }
    }
    if let Stepper::Prox { tau } = opts.stepper {
        check_tau(model, tau)?;
    }
    let mut traj = Trajectory::start(model, state0, opts.stepper);
    match opts.stepper {
        Stepper::Rk45 { rtol, atol } => run_explicit(model, state0, &times, rtol, atol, opts, &mut traj),
        Stepper::Prox { tau } => run_prox(model, state0, &times, tau, &mut traj),
    }
    traj.finish();
    Ok(traj)
}

fn run_explicit(
    model: &StressModel,
    state0: &SimpleState,
    times: &[f64],
    rtol: f64,
    atol: f64,
    opts: IntegrateOptions,
    traj: &mut Trajectory,
) {
    let ex = Explicit::new(model, state0, rtol, atol);
    let mut y = state0.values.clone();
    let mut k1 = vec![0.0; y.len()];
    ex.field(&y, &mut k1);
    let mut dissipated = 0.0;
    let mut t = 0.0;
    traj.record(model, t, &y, dissipated);
    let mut ctrl = Controller::default();
    let mut h = {
        let mut f = |a: &[f64], b: &mut [f64]| ex.field(a, b);
        initial_step(&mut f, &y, &k1, rtol, atol, opts.h_max)
    };
    for &target in &times[1..] {
        while t < target {
            let budget = traj.steps + traj.rejected >= opts.max_steps;
            if budget || h < opts.h_min * t.max(1.0) {
                let hint = if budget {
                    format!("step budget of {} exhausted", opts.max_steps)
                } else {
                    "step size underflow; try the proximal stepper".into()
                };
                traj.failure = Some(Error::Stiffness { t, dt: h, hint });
                return;
            }
            let remaining = target - t;
            let (hh, lands) = if h >= remaining {
                (remaining, true)
            } else if h > 0.5 * remaining {
                (0.5 * remaining, false)
            } else {
                (h, false)
            };
            match ex.attempt(&y, &k1, hh) {
                Ok((trial, err)) => {
                    traj.steps += 1;
                    dissipated += ex.step_dissipation(&trial, hh);
                    let h_next = ctrl.accept(hh, err).min(opts.h_max);
                    t = if lands { target } else { t + hh };
                    let Trial { y: yn, stages, .. } = trial;
                    y = yn;
                    ex.renormalize(&mut y);
                    k1.clone_from(&stages[6]);
                    if !lands || h_next > h {
                        h = h_next;
                    }
                }
                Err(err) => {
                    traj.rejected += 1;
                    h = ctrl.reject(hh, err);
                }
            }
        }
        traj.record(model, t, &y, dissipated);
    }
}

fn run_prox(model: &StressModel, state0: &SimpleState, times: &[f64], tau: f64, traj: &mut Trajectory) {
    let mu = state0.mu();
    let w = &state0.weights;
    let mut y = state0.values.clone();
    let mut dissipated = 0.0;
    let mut t = 0.0;
    traj.record(model, t, &y, dissipated);
    for &target in &times[1..] {
        while t < target {
            let remaining = target - t;
            // Land on record times without leaving a sliver step.
            let h = if remaining <= tau * (1.0 + 1e-9) {
                remaining
            } else {
                tau
            };
            match prox_values(model, w, &y, h, mu) {
                Ok((v, _)) => {
                    let sq: Vec<f64> = v
                        .iter()
                        .zip(&y)
                        .map(|(a, b)| ((a - b) / h).powi(2))
                        .collect();
                    dissipated += h * mean(w, &sq);
                    y = v;
                    traj.steps += 1;
                    t = if h == remaining { target } else { t + h };
                }
                Err(e) => {
                    traj.failure = Some(e);
                    return;
                }
            }
        }
        traj.record(model, t, &y, dissipated);
    }
}

#[cfg(test)]
mod tests {
    use super::super::random_state;
    use super::*;
    use crate::numerics::linspace;
    use proptest::prelude::*;

    #[test]
    fn single_component_is_converged_immediately() {
        let m = StressModel::cubic();
        let s = SimpleState::uniform(vec![0.5]).unwrap();
        let tr = integrate(&m, &s, &[0.0, 1.0, 10.0], IntegrateOptions::default()).unwrap();
        assert!(tr.converged);
        assert!(tr.values.iter().all(|v| v[0] == 0.5));
        assert_eq!(tr.diagnostics[0].rhs_norm(), 0.0);
    }

    #[test]
    fn equilibrium_step_grows_to_cap() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let st = step_explicit(&m, &s, 0.1, 1e-10, 1e-12, 2.0).unwrap();
        assert_eq!(st.state.values, s.values);
        assert!(st.dt_next > st.dt_used);
        let st2 = step_explicit(&m, &s, 5.0, 1e-10, 1e-12, 2.0).unwrap();
        assert_eq!(st2.dt_next, 2.0);
    }

    #[test]
    fn linear_law_single_step_matches_exponential() {
        let m = StressModel::linear(0.0).unwrap();
        let s = SimpleState::new(vec![0.0, 1.0, 4.0], vec![0.25, 0.5, 0.25]).unwrap();
        let mu = s.mu();
        let st = step_explicit(&m, &s, 0.05, 1e-12, 1e-14, 1.0).unwrap();
        let e = (-st.dt_used).exp();
        for (v, p) in st.state.values.iter().zip(&s.values) {
            assert!((v - (mu + (p - mu) * e)).abs() < 1e-9);
        }
        assert!((st.state.mu() - mu).abs() <= 1e-14);
    }

    #[test]
    fn two_phase_cubic_run_reaches_common_stress() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![-0.8, 1.8], vec![0.5, 0.5]).unwrap();
        let tr = integrate(&m, &s, &linspace(0.0, 200.0, 201), IntegrateOptions::default()).unwrap();
        let last = tr.values.last().unwrap();
        let (s0, s1) = (m.sigma(last[0]), m.sigma(last[1]));
        assert!((s0 - s1).abs() < 1e-8);
        assert!(tr.converged);
        // Independent high-accuracy run (scipy, rtol 1e-12) ends at (0, 1).
        assert!(last[0].abs() < 1e-7 && (last[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn ordering_of_three_components() {
        let m = StressModel::singular_cubic_default();
        let s = SimpleState::new(vec![0.3, 0.7, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let tr = integrate(&m, &s, &linspace(0.0, 50.0, 501), IntegrateOptions::default()).unwrap();
        assert!(tr.failure.is_none());
        for v in &tr.values {
            assert!(v[0] < v[1] && v[1] < v[2]);
        }
    }

    #[test]
    fn prox_run_matches_explicit_run_to_first_order() {
        let m = StressModel::cubic();
        let s = random_state(&m, 0.5, 8, 11);
        let grid = linspace(0.0, 1.0, 11);
        let ex = integrate(&m, &s, &grid, IntegrateOptions::rk45(1e-11, 1e-13)).unwrap();
        let px = integrate(&m, &s, &grid, IntegrateOptions::prox(1e-3)).unwrap();
        let diff = ex
            .values
            .iter()
            .zip(&px.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(diff < 5e-3 && diff > 0.0, "{diff}");
    }

    #[test]
    fn from_records_recomputes_diagnostics() {
        let m = StressModel::cubic();
        let s = random_state(&m, 0.5, 5, 2);
        let tr = integrate(&m, &s, &linspace(0.0, 2.0, 5), IntegrateOptions::default()).unwrap();
        let back = Trajectory::from_records(
            &m,
            tr.weights.clone(),
            tr.times.clone(),
            tr.values.clone(),
            tr.stepper,
        )
        .unwrap();
        assert_eq!(back.diagnostics, tr.diagnostics);
    }

    #[test]
    fn invalid_tau_is_rejected_before_running() {
        let m = StressModel::cubic();
        let s = random_state(&m, 0.5, 4, 1);
        assert!(matches!(
            integrate(&m, &s, &[1.0], IntegrateOptions::prox(2.0)),
            Err(Error::Monotonicity { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mass_and_energy_along_runs(seed in 0u64..10_000, prox in proptest::bool::ANY) {
            let m = StressModel::cubic();
            let s = random_state(&m, 0.5, 6, seed);
            let opts = if prox { IntegrateOptions::prox(1e-2) } else { IntegrateOptions::default() };
            let tr = integrate(&m, &s, &linspace(0.0, 5.0, 26), opts).unwrap();
            for mass in tr.masses() {
                prop_assert!((mass - 0.5).abs() <= 1e-12);
            }
            let e = tr.energies();
            for w in e.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}
