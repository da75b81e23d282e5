use serde::{Deserialize, Serialize};

use super::{integrate, mean, IntegrateOptions, SimpleState};
use crate::error::{Error, Result};
use crate::stress::StressModel;

/// `(Σ λᵢ xᵢ²)^{1/2}`.
pub fn weighted_norm(weights: &[f64], x: &[f64]) -> f64 {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    mean(weights, &sq).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub lambda: f64,
    pub times: Vec<f64>,
    /// `‖A(t)−B(t)‖²/(e^{2λt}‖A(0)−B(0)‖²)` per record (0 when the data agree).
    pub ratios: Vec<f64>,
    /// `‖A(t)−B(t)‖` per record.
    pub distances: Vec<f64>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Integrates both states on the same record grid and measures the
/// contraction ratio against the λ-convexity rate.
pub fn gronwall_check(
    model: &StressModel,
    a0: &SimpleState,
    b0: &SimpleState,
    record: &[f64],
    opts: IntegrateOptions,
) -> Result<GronwallReport> {
    if a0.weights != b0.weights {
        return Err(Error::Precondition("states must share weights".into()));
    }
    let (ta, tb) = rayon::join(
        || integrate(model, a0, record, opts),
        || integrate(model, b0, record, opts),
    );
    let (ta, tb) = (ta?.into_result()?, tb?.into_result()?);
    let w = &a0.weights;
    let diff = |k: usize| -> Vec<f64> {
        ta.values[k]
            .iter()
            .zip(&tb.values[k])
            .map(|(x, y)| x - y)
            .collect()
    };
    let d0 = weighted_norm(w, &diff(0));
    let lambda = model.lambda;
    let mut ratios = Vec::with_capacity(ta.len());
    let mut distances = Vec::with_capacity(ta.len());
    for (k, &t) in ta.times.iter().enumerate() {
        let d = weighted_norm(w, &diff(k));
        distances.push(d);
        let denom = (2.0 * lambda * t).exp() * d0 * d0;
        ratios.push(if denom > 0.0 { d * d / denom } else { 0.0 });
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(GronwallReport {
        lambda,
        times: ta.times.clone(),
        ratios,
        distances,
        max_ratio,
        pass: max_ratio <= 1.0 + 1e-6,
    })
}
