//! Dormand-Prince 5(4) embedded pair with a PI step-size controller.

pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights (equal to the last row of `A`; FSAL).
pub const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One trial step of size `h` from `y` whose derivative `k1 = f(y)` is known.
pub struct Trial {
    pub y: Vec<f64>,
    pub err: Vec<f64>,
    /// Stage derivatives `k1..k7`; `k7 = f(y_new)` is reusable as the next `k1`.
    pub stages: [Vec<f64>; 7],
}

/// Autonomous Dormand-Prince step. `f` writes the derivative of its first
/// argument into the second. Returns `None` if a stage left the domain
/// (signalled by `f` returning `false`).
pub fn dopri_step(
    f: &mut impl FnMut(&[f64], &mut [f64]) -> bool,
    y: &[f64],
    k1: &[f64],
    h: f64,
) -> Option<Trial> {
    let n = y.len();
    let mut stages: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    stages[0].copy_from_slice(k1);
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in A[s].iter().enumerate().take(s) {
                acc += a * stages[j][i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let (done, rest) = stages.split_at_mut(s);
        let _ = done;
        if !f(&tmp, &mut rest[0]) {
            return None;
        }
    }
    // Row 6 of A equals B, so the last stage argument is the new solution.
    let y_new = tmp;
    let mut err = vec![0.0; n];
    for (i, e) in err.iter_mut().enumerate() {
        let mut acc = 0.0;
        for s in 0..7 {
            acc += E[s] * stages[s][i];
        }
        *e = h * acc;
    }
    Some(Trial {
        y: y_new,
        err,
        stages,
    })
}

/// Scaled RMS error norm of a trial step.
pub fn error_norm(y0: &[f64], trial: &Trial, rtol: f64, atol: f64) -> f64 {
    let n = y0.len().max(1);
    let mut s = 0.0;
    for i in 0..y0.len() {
        let sc = atol + rtol * y0[i].abs().max(trial.y[i].abs());
        let r = trial.err[i] / sc;
        s += r * r;
    }
    (s / n as f64).sqrt()
}

/// PI step-size controller (Hairer-Wanner, `beta = 0.04`).
#[derive(Debug, Clone)]
pub struct Controller {
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    pub beta: f64,
    err_old: f64,
}

impl Default for Controller {
    fn default() -> Self {
        Self {
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 10.0,
            beta: 0.04,
            err_old: 1e-4,
        }
    }
}

impl Controller {
    const ALPHA: f64 = 0.2 - 0.04 * 0.75;

    /// Proposed next step after an accepted step with error norm `err ≤ 1`.
    pub fn accept(&mut self, h: f64, err: f64) -> f64 {
        let err = err.max(1e-10);
        let fac = self.safety * err.powf(-Self::ALPHA) * self.err_old.powf(self.beta);
        self.err_old = err.max(1e-4);
        h * fac.clamp(self.fac_min, self.fac_max)
    }

    /// Reduced step after a rejection with error norm `err > 1`.
    pub fn reject(&self, h: f64, err: f64) -> f64 {
        if !err.is_finite() {
            return 0.25 * h;
        }
        let fac = self.safety * err.powf(-Self::ALPHA);
        h * fac.clamp(self.fac_min, 1.0)
    }
}

/// Initial step guess (Hairer-Wanner, order 5).
pub fn initial_step(
    f: &mut impl FnMut(&[f64], &mut [f64]) -> bool,
    y: &[f64],
    k1: &[f64],
    rtol: f64,
    atol: f64,
    h_max: f64,
) -> f64 {
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (k1.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(h_max);
    let y1: Vec<f64> = y.iter().zip(k1).map(|(v, k)| v + h0 * k).collect();
    let mut k2 = vec![0.0; y.len()];
    if !f(&y1, &mut k2) {
        return h0 * 1e-3;
    }
    let d2 = (k2
        .iter()
        .zip(k1)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// Options for [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Failure of [`solve`]: the time reached, the last accepted state, and the
/// offending step size.
#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub t: f64,
    pub y: Vec<f64>,
    pub h: f64,
    /// Records written before the failure.
    pub records: Vec<Vec<f64>>,
}

/// Integrates the autonomous system `y' = f(y)` from `t = times[0]` and
/// returns the state at every entry of the nondecreasing `times`. Steps are
/// clipped to land on each record time. `f` returns `false` to reject a
/// stage (e.g. leaving the domain); the step is then retried smaller.
pub fn solve(
    mut f: impl FnMut(&[f64], &mut [f64]) -> bool,
    y0: &[f64],
    times: &[f64],
    opts: SolveOptions,
) -> Result<Vec<Vec<f64>>, SolveFailure> {
    let mut records = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(records);
    }
    let mut t = times[0];
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; y.len()];
    if !f(&y, &mut k1) {
        return Err(SolveFailure {
            t,
            y,
            h: 0.0,
            records,
        });
    }
    records.push(y.clone());
    let mut h = initial_step(&mut f, &y, &k1, opts.rtol, opts.atol, opts.h_max);
    let mut ctrl = Controller::default();
    let mut steps = 0usize;
    for &target in &times[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps || h < opts.h_min * t.abs().max(1.0) {
                return Err(SolveFailure { t, y, h, records });
            }
            let remaining = target - t;
            let (hh, lands) = if h >= remaining {
                (remaining, true)
            } else if h > 0.5 * remaining {
                // Avoid leaving a sliver before the record time.
                (0.5 * remaining, false)
            } else {
                (h, false)
            };
            let trial = match dopri_step(&mut f, &y, &k1, hh) {
                Some(tr) => tr,
                None => {
                    h = 0.25 * hh;
                    continue;
                }
            };
            let err = error_norm(&y, &trial, opts.rtol, opts.atol);
            if err <= 1.0 {
                let h_next = ctrl.accept(hh, err).min(opts.h_max);
                t = if lands { target } else { t + hh };
                let Trial { y: yn, stages, .. } = trial;
                y = yn;
                k1.clone_from(&stages[6]);
                if !lands || h_next > h {
                    h = h_next;
                }
            } else {
                h = ctrl.reject(hh, err);
            }
        }
        records.push(y.clone());
    }
    Ok(records)
}
