//! The ℝ³ system, in cylindrical coordinates,
//! `ṙ = −r(1−r)² − r|z|`, `ż = −z|z|`, `θ̇ = r(r−1)`,
//! for which a dense set of data converges to the origin while data with
//! `z = 0`, `r > 1` spirals onto the unit circle forever.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rk::{solve, SolveOptions};

/// Relative and absolute tolerances of the cylindrical integrator.
pub const CYL_RTOL: f64 = 1e-11;
pub const CYL_ATOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylState {
    pub r: f64,
    /// Unwrapped angle.
    pub theta: f64,
    pub z: f64,
}

impl CylState {
    /// `|u|² = r² + z²`.
    pub fn lyapunov(&self) -> f64 {
        self.r * self.r + self.z * self.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CylState>,
}

impl CylTrajectory {
    pub fn lyapunov(&self) -> Vec<f64> {
        self.states.iter().map(CylState::lyapunov).collect()
    }

    /// `r² + z²` nonincreasing up to `slack` between records.
    pub fn lyapunov_monotone(&self, slack: f64) -> bool {
        self.lyapunov().windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Integrates from `(r₀, θ₀, z₀)` and records at `0` and every entry of the
/// nondecreasing `times`. Since `z` keeps its sign, `|z|` is evaluated as
/// `sign(z₀)·z`, which is smooth and agrees with `|z|` on the trajectory.
pub fn simulate_cyl(r0: f64, theta0: f64, z0: f64, times: &[f64]) -> Result<CylTrajectory> {
    if !(r0 >= 0.0 && r0.is_finite() && theta0.is_finite() && z0.is_finite()) {
        return Err(Error::Precondition(format!(
            "need finite data with r0 ≥ 0, got ({r0}, {theta0}, {z0})"
        )));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition(
            "times must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    let mut grid = vec![0.0];
    grid.extend(times.iter().copied().filter(|&t| t > 0.0));
    let sign = if z0 < 0.0 { -1.0 } else { 1.0 };
    let field = |y: &[f64], dy: &mut [f64]| {
        let (r, z) = (y[0], y[2]);
        let abs_z = sign * z;
        dy[0] = -r * (1.0 - r) * (1.0 - r) - r * abs_z;
        dy[1] = r * (r - 1.0);
        dy[2] = -z * abs_z;
        true
    };
    let opts = SolveOptions {
        rtol: CYL_RTOL,
        atol: CYL_ATOL,
        ..Default::default()
    };
    let records = solve(field, &[r0, theta0, z0], &grid, opts).map_err(|f| Error::Stiffness {
        t: f.t,
        dt: f.h,
        hint: "cylindrical integration stalled".into(),
    })?;
    Ok(CylTrajectory {
        times: grid,
        states: records
            .into_iter()
            .map(|y| CylState {
                r: y[0],
                theta: y[1],
                z: y[2],
            })
            .collect(),
    })
}

/// `z(t) = z₀/(1 + |z₀|t)`.
pub fn z_exact(z0: f64, t: f64) -> f64 {
    z0 / (1.0 + z0.abs() * t)
}

/// Upper bound `r(t) ≤ r₀/(1 + |z₀|t)`.
pub fn r_upper(r0: f64, z0: f64, t: f64) -> f64 {
    r0 / (1.0 + z0.abs() * t)
}

/// Lower bound `r(t) − 1 ≥ 1/(r₀t + 1/(r₀−1))` for `z₀ = 0`, `r₀ > 1`.
pub fn r_minus_one_lower(r0: f64, t: f64) -> f64 {
    1.0 / (r0 * t + 1.0 / (r0 - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMember {
    pub z0: f64,
    pub r_final: f64,
    pub theta_final: f64,
    pub z_final: f64,
    /// `|u(T)| = (r² + z²)^{1/2}`.
    pub norm_final: f64,
    pub lyapunov_monotone: bool,
    pub trajectory: CylTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseDataReport {
    pub r0: f64,
    pub t_final: f64,
    pub members: Vec<DemoMember>,
}

/// The `z₀` ensemble `{0, ±10⁻ᵏ : k = 1..6}`.
pub fn demo_offsets() -> Vec<f64> {
    let mut z = vec![0.0];
    for k in 1..=6 {
        let v = 10f64.powi(-k);
        z.push(v);
        z.push(-v);
    }
    z
}

/// Runs the ensemble at `r₀ = 2` to `t_final`, recording on `n_records`
/// log-spaced times.
pub fn dense_data_demo(t_final: f64, n_records: usize) -> Result<DenseDataReport> {
    let r0 = 2.0;
    let times = crate::numerics::logspace(1e-3, t_final, n_records.max(2));
    let members = demo_offsets()
        .into_par_iter()
        .map(|z0| {
            let trajectory = simulate_cyl(r0, 0.0, z0, &times)?;
            let last = *trajectory.states.last().expect("nonempty");
            Ok(DemoMember {
                z0,
                r_final: last.r,
                theta_final: last.theta,
                z_final: last.z,
                norm_final: last.lyapunov().sqrt(),
                lyapunov_monotone: trajectory.lyapunov_monotone(10.0 * CYL_RTOL),
                trajectory,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DenseDataReport {
        r0,
        t_final,
        members,
    })
}
