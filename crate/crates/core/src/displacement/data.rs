//! Initial data: seeded random states, level quantization of sampled fields
//! and the nondecreasing rearrangement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean, SimpleState};
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::stress::{Domain, StressModel};

/// Equal-weight random state with mean exactly `mu` (up to rounding).
///
/// Full-line models draw from `[μ−1, μ+1]` and shift; positive-only models
/// draw from `[0.1μ, 1.9μ]` and rescale, so values stay positive.
pub fn random_state(model: &StressModel, mu: f64, n: usize, seed: u64) -> SimpleState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = model.domain == Domain::PositiveOnly;
    let mut v: Vec<f64> = (0..n.max(1))
        .map(|_| {
            if positive {
                rng.gen_range(0.1 * mu..1.9 * mu)
            } else {
                rng.gen_range(mu - 1.0..mu + 1.0)
            }
        })
        .collect();
    let mut s = SimpleState::uniform(std::mem::take(&mut v)).expect("n ≥ 1");
    if positive {
        let m = s.mu();
        for x in &mut s.values {
            *x *= mu / m;
        }
    }
    for _ in 0..2 {
        let d = mu - s.mu();
        for x in &mut s.values {
            *x += d;
        }
    }
    s
}

/// Equal-weight random state drawn uniformly from `[lo, hi]`, then shifted
/// to mean `mu`. Fails when the shifted values leave the model's domain.
pub fn random_state_in(
    model: &StressModel,
    mu: f64,
    n: usize,
    seed: u64,
    (lo, hi): (f64, f64),
) -> Result<SimpleState> {
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Precondition(format!("empty range [{lo}, {hi}]")));
    }
    if n == 0 {
        return Err(Error::InvalidState("no components".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SimpleState::uniform((0..n).map(|_| rng.gen_range(lo..hi)).collect())?;
    for _ in 0..2 {
        let d = mu - s.mu();
        for x in &mut s.values {
            *x += d;
        }
    }
    s.validate(model)?;
    Ok(s)
}

/// `p₀(x) = 2x` sampled at the centres of `n` equal cells.
pub fn ramp_samples(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * (j as f64 + 0.5) / n as f64).collect()
}

/// A simple-function approximation of sampled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub state: SimpleState,
    /// Component index of every input sample.
    pub assignment: Vec<usize>,
    /// Quantization level of every component (before normalization).
    pub levels: Vec<f64>,
}

impl Approximation {
    /// Expands the state back onto the sample grid.
    pub fn expand(&self, values: &[f64]) -> Vec<f64> {
        self.assignment.iter().map(|&k| values[k]).collect()
    }
}

/// Builds the `N`-level minorant `q` of the samples (level `k` is
/// `lo + k(hi−lo)/N`, so levels for `2N` refine those for `N`), then
/// normalizes to `μ(q + 1/N)/(∫q + 1/N)`, which is strictly positive and has
/// the mean `μ` of the samples. Empty levels are dropped.
pub fn approximate_initial_data(samples: &[f64], n: usize) -> Result<Approximation> {
    if samples.is_empty() || n == 0 {
        return Err(Error::DegenerateData("no samples or no levels".into()));
    }
    if samples.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::DegenerateData("samples must be finite and ≥ 0".into()));
    }
    let mu = pairwise_sum(samples) / samples.len() as f64;
    if !(mu > 0.0) {
        return Err(Error::DegenerateData("samples have zero mean".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nf = n as f64;
    let level_of = |p: f64| -> usize {
        if hi == lo {
            0
        } else {
            (((p - lo) / (hi - lo) * nf).floor() as usize).min(n - 1)
        }
    };
    let mut counts = vec![0usize; n];
    let raw: Vec<usize> = samples.iter().map(|&p| level_of(p)).collect();
    for &k in &raw {
        counts[k] += 1;
    }
    let mut compact = vec![usize::MAX; n];
    let mut levels = Vec::new();
    let mut weights = Vec::new();
    for k in 0..n {
        if counts[k] > 0 {
            compact[k] = levels.len();
            levels.push(lo + k as f64 * (hi - lo) / nf);
            weights.push(counts[k] as f64 / samples.len() as f64);
        }
    }
    let assignment: Vec<usize> = raw.iter().map(|&k| compact[k]).collect();
    let q_mean = mean(&weights, &levels);
    let scale = mu / (q_mean + 1.0 / nf);
    let mut values: Vec<f64> = levels.iter().map(|&q| scale * (q + 1.0 / nf)).collect();
    let total = pairwise_sum(&weights);
    weights[0] += 1.0 - total;
    for _ in 0..2 {
        let d = mu - mean(&weights, &values);
        if d == 0.0 {
            break;
        }
        for v in &mut values {
            *v += d;
        }
    }
    Ok(Approximation {
        state: SimpleState::new(values, weights)?,
        assignment,
        levels,
    })
}

/// Stable sort of the components by value. Returns the sorted state and the
/// permutation with `sorted.values[k] = state.values[perm[k]]`.
pub fn rearrange(state: &SimpleState) -> (SimpleState, Vec<usize>) {
    let mut perm: Vec<usize> = (0..state.len()).collect();
    perm.sort_by(|&a, &b| state.values[a].total_cmp(&state.values[b]));
    let sorted = SimpleState {
        values: perm.iter().map(|&i| state.values[i]).collect(),
        weights: perm.iter().map(|&i| state.weights[i]).collect(),
    };
    (sorted, perm)
}
