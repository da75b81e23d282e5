//! The nonlocal finite-dimensional flow
//! `ṗᵢ = −σ(pᵢ) + Σⱼ λⱼ σ(pⱼ)`, which conserves the mean `μ = Σ λᵢ pᵢ`.

mod data;
mod gronwall;
mod integrate;
mod prox;

pub use data::{
    approximate_initial_data, random_state, random_state_in, ramp_samples, rearrange, Approximation,
};
pub use gronwall::{gronwall_check, weighted_norm, GronwallReport};
pub use integrate::{
    integrate, step_explicit, Diagnostics, ExplicitStep, IntegrateOptions, Stepper, Trajectory,
    CONVERGED_RHS,
};
pub use prox::{prox_step, ProxStep};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::stress::StressModel;

/// A strain field taking the values `pᵢ` on sets of measure `λᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleState {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SimpleState {
    /// Checks weights (positive, summing to one within 1e-14) and lengths.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidState("no components".into()));
        }
        if values.len() != weights.len() {
            return Err(Error::InvalidState(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidState("weights must be positive".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidState(format!(
                "weights sum to {total}, not 1"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite value".into()));
        }
        Ok(Self { values, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidState("no components".into()));
        }
        // Make the weights sum to one to within rounding of a single term.
        let mut w = vec![1.0 / n as f64; n];
        let drift = 1.0 - pairwise_sum(&w);
        w[0] += drift;
        Self::new(values, w)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ λᵢ pᵢ`.
    pub fn mu(&self) -> f64 {
        mean(&self.weights, &self.values)
    }

    /// Fails if a value lies outside the model domain.
    pub fn validate(&self, model: &StressModel) -> Result<()> {
        for &p in &self.values {
            model.check_domain(p)?;
        }
        Ok(())
    }
}

pub(crate) fn mean(weights: &[f64], values: &[f64]) -> f64 {
    let terms: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&terms)
}

/// Writes `dpᵢ = c − σ(pᵢ)` into `out` and returns `c = Σ λⱼ σ(pⱼ)`. One σ
/// evaluation per component; `out` doubles as scratch for the stresses.
pub(crate) fn rhs_into(model: &StressModel, weights: &[f64], values: &[f64], out: &mut [f64]) -> f64 {
    for (o, &p) in out.iter_mut().zip(values) {
        *o = model.sigma(p);
    }
    let c = mean(weights, out);
    for o in out.iter_mut() {
        *o = c - *o;
    }
    c
}

/// The vector field of the flow at `state`.
pub fn rhs(model: &StressModel, state: &SimpleState) -> Result<Vec<f64>> {
    state.validate(model)?;
    let mut out = vec![0.0; state.len()];
    rhs_into(model, &state.weights, &state.values, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_is_at_rest() {
        let m = StressModel::cubic();
        let s = SimpleState::uniform(vec![0.7]).unwrap();
        assert_eq!(rhs(&m, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_component_cubic_rhs() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        let d = rhs(&m, &s).unwrap();
        assert!((d[0] - 1.125).abs() < 1e-15 && (d[1] + 1.125).abs() < 1e-15);
    }

    #[test]
    fn equal_stresses_give_zero_rhs() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![-1.0, 0.0, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(rhs(&m, &s).unwrap().iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn rhs_rejects_values_outside_domain() {
        let m = StressModel::log_law();
        let s = SimpleState::uniform(vec![1.0, -0.5]).unwrap();
        assert!(matches!(rhs(&m, &s), Err(Error::Domain { .. })));
    }

    #[test]
    fn weights_are_validated() {
        assert!(SimpleState::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(SimpleState::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(SimpleState::new(vec![1.0], vec![1.0, 0.0]).is_err());
        let s = SimpleState::uniform(vec![0.0; 7]).unwrap();
        assert!((pairwise_sum(&s.weights) - 1.0).abs() <= 1e-15);
    }
}
