//! Implicit Euler with the mass multiplier: the minimiser of
//! `Σ λᵢ W(vᵢ) + (1/2τ) Σ λᵢ (vᵢ − pᵢ)²` subject to `Σ λᵢ vᵢ = μ`.

use super::{mean, SimpleState};
use crate::error::{Error, Result};
use crate::stress::{Domain, StressModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ProxStep {
    pub state: SimpleState,
    /// Lagrange multiplier: common value of `σ(vᵢ) + (vᵢ − pᵢ)/τ`.
    pub c: f64,
}

/// One proximal step. Solves `σ(vᵢ) + (vᵢ − pᵢ)/τ = c` with `Σ λᵢ vᵢ = μ`:
/// each `vᵢ` inverts the increasing map `v ↦ σ(v) + v/τ`, and `c` is found
/// from the increasing map `c ↦ Σ λᵢ vᵢ(c)`. Needs `τλ < 1`.
pub fn prox_step(model: &StressModel, state: &SimpleState, tau: f64) -> Result<ProxStep> {
    check_tau(model, tau)?;
    state.validate(model)?;
    let (values, c) = prox_values(model, &state.weights, &state.values, tau, state.mu())?;
    Ok(ProxStep {
        state: SimpleState {
            values,
            weights: state.weights.clone(),
        },
        c,
    })
}

pub(crate) fn check_tau(model: &StressModel, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) || tau * model.lambda >= 1.0 {
        return Err(Error::Monotonicity {
            tau,
            lambda: model.lambda,
        });
    }
    Ok(())
}

pub(crate) fn prox_values(
    model: &StressModel,
    weights: &[f64],
    p: &[f64],
    tau: f64,
    mu: f64,
) -> Result<(Vec<f64>, f64)> {
    let stresses: Vec<f64> = p.iter().map(|&x| model.sigma(x)).collect();
    let s_min = stresses.iter().copied().fold(f64::INFINITY, f64::min);
    let s_max = stresses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (s_max - s_min).max(1e-3 * (1.0 + s_max.abs().max(s_min.abs())));
    let mut v = vec![0.0; p.len()];
    let solve_all = |c: f64, v: &mut [f64]| -> Result<(f64, f64)> {
        let mut slope = 0.0;
        for i in 0..p.len() {
            v[i] = invert_h(model, tau, c + p[i] / tau, p[i])?;
            slope += weights[i] / (model.sigma_prime(v[i]) + 1.0 / tau);
        }
        Ok((mean(weights, v) - mu, slope))
    };

    let (mut lo, mut hi) = (s_min - range, s_max + range);
    let mut eta_lo = solve_all(lo, &mut v)?.0;
    let mut eta_hi = solve_all(hi, &mut v)?.0;
    let mut widen = range;
    for _ in 0..200 {
        if eta_lo <= 0.0 && eta_hi >= 0.0 {
            break;
        }
        widen *= 2.0;
        if eta_lo > 0.0 {
            lo -= widen;
            eta_lo = solve_all(lo, &mut v)?.0;
        }
        if eta_hi < 0.0 {
            hi += widen;
            eta_hi = solve_all(hi, &mut v)?.0;
        }
    }
    if !(eta_lo <= 0.0 && eta_hi >= 0.0) {
        return Err(Error::Bracket(format!(
            "no multiplier bracket around [{s_min}, {s_max}]"
        )));
    }

    let mass_tol = 1e-13 * mu.abs().max(1.0);
    let mut c = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (eta, slope) = solve_all(c, &mut v)?;
        if eta.abs() <= mass_tol {
            return Ok((v, c));
        }
        if eta < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let newton = c - eta / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == c || hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return Ok((v, c));
        }
        c = next;
    }
    let (eta, _) = solve_all(c, &mut v)?;
    if eta.abs() <= 1e-12 * mu.abs().max(1.0) {
        Ok((v, c))
    } else {
        Err(Error::Bracket(format!(
            "multiplier iteration stalled with mass error {eta:e}"
        )))
    }
}

/// Solves `σ(v) + v/τ = target` starting from the guess `v0`.
fn invert_h(model: &StressModel, tau: f64, target: f64, v0: f64) -> Result<f64> {
    let h = |v: f64| model.sigma(v) + v / tau - target;
    let dh = |v: f64| model.sigma_prime(v) + 1.0 / tau;
    let positive = model.domain == Domain::PositiveOnly;
    let f0 = h(v0);
    if f0 == 0.0 {
        return Ok(v0);
    }
    let mut d = (f0.abs() * tau).max(1e-12 * v0.abs().max(1.0));
    let (mut lo, mut hi);
    if f0 < 0.0 {
        lo = v0;
        hi = v0 + d;
        let mut k = 0;
        while h(hi) < 0.0 {
            lo = hi;
            d *= 2.0;
            hi = v0 + d;
            k += 1;
            if k > 2000 || !hi.is_finite() {
                return Err(Error::Bracket(format!("no upper bracket for target {target}")));
            }
        }
    } else {
        hi = v0;
        lo = v0 - d;
        if positive && lo <= 0.0 {
            lo = 0.5 * v0;
        }
        let mut k = 0;
        while h(lo) > 0.0 {
            hi = lo;
            if positive && lo - 2.0 * d <= 0.0 {
                lo *= 0.5;
            } else {
                d *= 2.0;
                lo = v0 - d;
            }
            k += 1;
            if k > 2000 || lo == 0.0 || !lo.is_finite() {
                return Err(Error::Bracket(format!("no lower bracket for target {target}")));
            }
        }
    }
    Ok(newton_bisect(h, dh, lo, hi))
}

/// Safeguarded Newton for increasing `f` with `f(lo) ≤ 0 ≤ f(hi)`; iterates
/// to machine resolution.
fn newton_bisect(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / df(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || hi - lo <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::super::{random_state, rhs};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let m = StressModel::cubic();
        let s = SimpleState::new(vec![-1.0, 1.0], vec![0.25, 0.75]).unwrap();
        let out = prox_step(&m, &s, 0.1).unwrap();
        for (a, b) in out.state.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(out.c.abs() < 1e-13);
    }

    #[test]
    fn linear_law_closed_form() {
        let m = StressModel::linear(0.0).unwrap();
        let s = SimpleState::new(vec![0.2, 1.0, 3.1], vec![0.5, 0.3, 0.2]).unwrap();
        let tau = 0.37;
        let mu = s.mu();
        let out = prox_step(&m, &s, tau).unwrap();
        for (v, p) in out.state.values.iter().zip(&s.values) {
            assert!((v - (p + tau * mu) / (1.0 + tau)).abs() < 1e-14);
        }
        assert!((out.c - mu).abs() < 1e-13);
    }

    #[test]
    fn tau_above_monotonicity_limit_is_rejected() {
        let m = StressModel::cubic();
        let s = SimpleState::uniform(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            prox_step(&m, &s, 1.0),
            Err(Error::Monotonicity { .. })
        ));
    }

    #[test]
    fn small_tau_matches_explicit_euler_to_second_order() {
        let m = StressModel::cubic();
        let s = random_state(&m, 0.5, 6, 3);
        let d = rhs(&m, &s).unwrap();
        let err = |tau: f64| {
            let v = prox_step(&m, &s, tau).unwrap().state.values;
            v.iter()
                .zip(&s.values)
                .zip(&d)
                .map(|((v, p), d)| (v - p - tau * d).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-2 * 1e-2 * 100.0);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    proptest! {
        #[test]
        fn prox_residual_mass_and_descent(seed in 0u64..500, tau_exp in -3.0f64..-0.2) {
            let m = StressModel::singular_cubic_default();
            let tau = 10f64.powf(tau_exp);
            let s = random_state(&m, 1.0, 7, seed);
            let out = prox_step(&m, &s, tau).unwrap();
            let v = &out.state.values;
            let res: Vec<f64> = v.iter().zip(&s.values)
                .map(|(v, p)| m.sigma(*v) + (v - p) / tau).collect();
            let spread = res.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - res.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(spread <= 1e-10, "spread {spread:e}");
            prop_assert!((out.state.mu() - 1.0).abs() <= 1e-12);
            let w = |x: &[f64]| mean(&s.weights, &x.iter().map(|&p| m.eval_w(p).unwrap()).collect::<Vec<_>>());
            let pen: Vec<f64> = v.iter().zip(&s.values).map(|(a, b)| (a - b).powi(2)).collect();
            let objective = w(v) + mean(&s.weights, &pen) / (2.0 * tau);
            prop_assert!(objective <= w(&s.values) + 1e-12);
        }
    }
}
