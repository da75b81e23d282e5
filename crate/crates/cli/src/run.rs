//! The `run` pipeline: bounds, integration, invariant checks, analyses.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use viscoflow::asymptotics::analyze;
use viscoflow::bounds::BoundsProfile;
use viscoflow::displacement::{integrate, IntegrateOptions, Stepper, Trajectory};
use viscoflow::mixed::{solve_field, FieldSolution};
use viscoflow::{Domain, Error, ModelSpec, StressModel};

use crate::config::{Analysis, Boundary, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::{CheckResult, RunManifest};
use crate::output::{write_atomic, write_json, Table};
use crate::tools::{bounds_table, BoundsSidecar};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const BOUNDS_JSON: &str = "bounds.json";
pub const ASYMPT_FILE: &str = "asymptotics.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Relative tolerances of the invariant checks.
pub const MASS_TOL: f64 = 1e-12;
pub const ENERGY_SLACK: f64 = 1e-10;
/// Mixed curves are attained by data at the extremes, so samples may cross
/// them by the combined solver and quadrature error.
pub const ENCLOSURE_TOL: f64 = 1e-7;
pub const ENERGY_EQUATION_TOL: f64 = 1e-6;

/// What a later `asympt` or `plotdata` call needs to reinterpret the
/// trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: ModelSpec,
    pub boundary: Boundary,
    pub mu: f64,
    pub weights: Vec<f64>,
    pub stepper: Stepper,
    pub converged: bool,
    /// `c` at the last record (displacement problem only).
    pub final_stress: Option<f64>,
    pub rhs_norm_final: Option<f64>,
    pub steps: usize,
    pub rejected: usize,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Result of a run whose configuration was valid.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Present for the displacement problem once integration started.
    pub trajectory: Option<Trajectory>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }
}

struct Ctx<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
    checks: Vec<CheckResult>,
    trajectory: Option<Trajectory>,
    summary: Option<RunSummary>,
}

impl Ctx<'_> {
    fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        table.write(&self.dir.join(name))?;
        self.note(name);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        write_json(&self.dir.join(name), value)?;
        self.note(name);
        Ok(())
    }

    fn note(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }
}

/// Validates the configuration (a failure here writes nothing) and then runs
/// the pipeline into `dir`. The manifest is written whatever the outcome.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let model = cfg.validate()?;
    let prepared = match cfg.boundary {
        Boundary::Displacement => Prepared::Displacement(cfg.initial_state(&model)?),
        Boundary::Mixed => {
            let samples = cfg.samples(&model)?;
            if samples.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(CliError::Config(
                    "mixed problem needs finite samples ≥ 0".into(),
                ));
            }
            Prepared::Mixed(samples)
        }
    };
    std::fs::create_dir_all(dir)?;
    let mut ctx = Ctx {
        dir,
        outputs: Vec::new(),
        checks: Vec::new(),
        trajectory: None,
        summary: None,
    };
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    ctx.note(CONFIG_FILE);
    let result = match prepared {
        Prepared::Displacement(state) => displacement(cfg, &model, state, &mut ctx, start),
        Prepared::Mixed(samples) => mixed(cfg, &model, &samples, &mut ctx, start),
    };
    if let Err(CliError::Config(_)) = result {
        return Err(result.unwrap_err());
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    if let Some(mut s) = ctx.summary.take() {
        s.wall_time_s = wall_time_s;
        ctx.json(SUMMARY_FILE, &s)?;
    }
    let failed = ctx.checks.iter().filter(|c| c.status == crate::manifest::Status::Fail).count();
    let (exit_code, error) = match &result {
        Ok(()) if failed > 0 => {
            let e = CliError::Checks {
                failed,
                total: ctx.checks.len(),
            };
            (e.exit_code(), Some(e.to_string()))
        }
        Ok(()) => (0, None),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    };
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        versions: RunManifest::versions(),
        outputs: ctx.outputs,
        wall_time_s,
        checks: ctx.checks,
        exit_code,
        error,
    };
    let manifest_path = manifest.write(dir)?;
    Ok(RunOutcome {
        manifest,
        manifest_path,
        trajectory: ctx.trajectory,
    })
}

enum Prepared {
    Displacement(viscoflow::displacement::SimpleState),
    Mixed(Vec<f64>),
}

/// Lower and upper curves on the record times `t > 0`, checked against the
/// enabled analyses. A curve that does not apply is skipped; a curve that
/// fails a hypothesis stops the run.
fn bounds_stage(
    model: &StressModel,
    profile: BoundsProfile,
    analysis: Analysis,
    ctx: &mut Ctx,
) -> Result<Option<BoundsProfile>, CliError> {
    ctx.table(BOUNDS_FILE, &bounds_table(&profile))?;
    ctx.json(BOUNDS_JSON, &BoundsSidecar::new(&profile))?;
    let mut stage = |name: &str, enabled: bool, err: &Option<Error>| -> Result<(), CliError> {
        if !enabled {
            return Ok(());
        }
        match err {
            None => Ok(()),
            Some(_) if name == "bounds.lower" && model.domain == Domain::FullLine => {
                ctx.checks.push(CheckResult::skip(
                    name,
                    "the lower curve needs σ → −∞ at 0",
                ));
                Ok(())
            }
            Some(e @ Error::Precondition(_)) => {
                ctx.checks.push(CheckResult::skip(name, e.to_string()));
                Ok(())
            }
            Some(e) => Err(CliError::classify(e.clone())),
        }
    };
    stage("bounds.lower", analysis.bounds_lower, &profile.lower_error)?;
    stage("bounds.upper", analysis.bounds_upper, &profile.upper_error)?;
    Ok(Some(profile))
}

fn wants_bounds(a: Analysis) -> bool {
    a.bounds_lower || a.bounds_upper
}

fn positive_times(times: &[f64]) -> Vec<f64> {
    times.iter().copied().filter(|&t| t > 0.0).collect()
}

fn displacement(
    cfg: &ExperimentConfig,
    model: &StressModel,
    state: viscoflow::displacement::SimpleState,
    ctx: &mut Ctx,
    start: Instant,
) -> Result<(), CliError> {
    let mu = state.mu();
    let times = cfg.record.times(cfg.t_final);
    let bounds = if wants_bounds(cfg.analysis) {
        let profile = BoundsProfile::displacement(model, mu, &positive_times(&times));
        bounds_stage(model, profile, cfg.analysis, ctx)?
    } else {
        None
    };

    let opts = IntegrateOptions {
        stepper: cfg.stepper,
        max_steps: cfg.max_steps,
        ..IntegrateOptions::default()
    };
    let traj = integrate(model, &state, &times, opts)?;
    let n = state.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("p_{i}")));
    header.extend(["c", "energy", "dissipation"].map(String::from));
    let mut table = Table::new(header);
    for k in 0..traj.len() {
        let d = traj.diagnostics[k];
        let mut row = vec![traj.times[k]];
        row.extend(&traj.values[k]);
        row.extend([d.c, d.energy, traj.dissipated[k]]);
        table.push(row);
    }
    ctx.table(TRAJECTORY_FILE, &table)?;
    let last = traj.diagnostics.last().copied();
    ctx.summary = Some(RunSummary {
        model: cfg.model.clone(),
        boundary: Boundary::Displacement,
        mu,
        weights: state.weights.clone(),
        stepper: cfg.stepper,
        converged: traj.converged,
        final_stress: last.map(|d| d.c),
        rhs_norm_final: last.map(|d| d.rhs_norm()),
        steps: traj.steps,
        rejected: traj.rejected,
        wall_time_s: start.elapsed().as_secs_f64(),
        failure: traj.failure.as_ref().map(ToString::to_string),
    });
    let failure = traj.failure.clone();
    ctx.trajectory = Some(traj);
    if let Some(e) = failure {
        return Err(CliError::Integration(e));
    }
    let traj = ctx.trajectory.as_ref().expect("set above");

    if cfg.analysis.invariants {
        let checks = displacement_checks(traj, bounds.as_ref());
        ctx.checks.extend(checks);
    }
    if cfg.analysis.asympt {
        let report = analyze(model, traj);
        ctx.json(ASYMPT_FILE, &report)?;
    }
    Ok(())
}

/// Mass, energy decay, ordering, the energy equation (explicit stepper) and
/// bound enclosure.
pub fn displacement_checks(traj: &Trajectory, bounds: Option<&BoundsProfile>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mu = traj.mu;
    let mass_err = traj
        .masses()
        .iter()
        .map(|m| (m - mu).abs())
        .fold(0.0, f64::max)
        / mu.abs().max(1.0);
    out.push(CheckResult::new(
        "mass",
        mass_err <= MASS_TOL,
        format!("max |Σλp − μ|/max(1,|μ|) = {mass_err:.3e} (≤ {MASS_TOL:e})"),
    ));

    let e = traj.energies();
    let rise = e
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckResult::new(
        "energy.decay",
        e.len() < 2 || rise <= ENERGY_SLACK,
        format!("largest relative increase {rise:.3e} (≤ {ENERGY_SLACK:e})"),
    ));

    let p0 = &traj.values[0];
    let mut order: Vec<usize> = (0..p0.len()).collect();
    order.sort_by(|&a, &b| p0[a].total_cmp(&p0[b]));
    let crossings: usize = traj
        .values
        .iter()
        .map(|row| {
            order
                .windows(2)
                .filter(|w| p0[w[0]] < p0[w[1]] && reversed(row[w[0]], row[w[1]]))
                .count()
        })
        .sum();
    out.push(CheckResult::new(
        "ordering",
        crossings == 0,
        format!("{crossings} reversals of initially ordered neighbours"),
    ));

    if matches!(traj.stepper, Stepper::Rk45 { .. }) {
        let e0 = e[0];
        let resid = e
            .iter()
            .zip(&traj.dissipated)
            .map(|(et, d)| (et - e0 + d).abs())
            .fold(0.0, f64::max)
            / (1.0 + e0.abs());
        out.push(CheckResult::new(
            "energy.equation",
            resid <= ENERGY_EQUATION_TOL,
            format!("max |E(t) − E(0) + ∫dissipation|/(1+|E(0)|) = {resid:.3e} (≤ {ENERGY_EQUATION_TOL:e})"),
        ));
    } else {
        out.push(CheckResult::skip(
            "energy.equation",
            "the proximal stepper satisfies the energy equation only up to O(τ)",
        ));
    }

    if let Some(b) = bounds {
        let mut violations = 0usize;
        let mut checked = false;
        for (t, row) in traj.times.iter().zip(&traj.values) {
            if *t <= 0.0 {
                continue;
            }
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if let Some(c) = &b.lower_curve {
                checked = true;
                violations += usize::from(c.eval(*t) > lo);
            }
            if let Some(c) = &b.upper_curve {
                checked = true;
                violations += usize::from(hi > c.eval(*t));
            }
        }
        out.push(if checked {
            CheckResult::new(
                "bounds.enclosure",
                violations == 0,
                format!("{violations} records outside the bound curves"),
            )
        } else {
            CheckResult::skip("bounds.enclosure", "no certified curve")
        });
    }
    out
}

/// `a > b` beyond rounding: components settling on the same root agree
/// only to a few ulps.
fn reversed(a: f64, b: f64) -> bool {
    a - b > 4.0 * f64::EPSILON * a.abs().max(b.abs())
}

fn mixed(
    cfg: &ExperimentConfig,
    model: &StressModel,
    samples: &[f64],
    ctx: &mut Ctx,
    start: Instant,
) -> Result<(), CliError> {
    let times = cfg.record.times(cfg.t_final);
    let bounds = if wants_bounds(cfg.analysis) {
        let profile = BoundsProfile::mixed(model, &positive_times(&times));
        bounds_stage(model, profile, cfg.analysis, ctx)?
    } else {
        None
    };
    let sol = solve_field(model, samples, &times)?;
    ctx.table(TRAJECTORY_FILE, &mixed_table(&sol))?;
    ctx.summary = Some(RunSummary {
        model: cfg.model.clone(),
        boundary: Boundary::Mixed,
        mu: samples.iter().sum::<f64>() / samples.len() as f64,
        weights: vec![1.0 / samples.len() as f64; samples.len()],
        stepper: cfg.stepper,
        converged: sol.limit.iter().all(Option::is_some),
        final_stress: None,
        rhs_norm_final: None,
        steps: 0,
        rejected: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
        failure: None,
    });
    if cfg.analysis.invariants {
        ctx.checks.extend(mixed_checks(&sol, bounds.as_ref()));
    }
    Ok(())
}

/// `t, p_1..p_n, energy`.
pub fn mixed_table(sol: &FieldSolution) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=sol.points.len()).map(|i| format!("p_{i}")));
    header.push("energy".into());
    let mut table = Table::new(header);
    for (k, &t) in sol.times.iter().enumerate() {
        let mut row = vec![t];
        row.extend(sol.field(k));
        row.push(sol.energy[k]);
        table.push(row);
    }
    table
}

/// Energy decay after the first record and pointwise enclosure.
pub fn mixed_checks(sol: &FieldSolution, bounds: Option<&BoundsProfile>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let e: Vec<f64> = sol.energy.iter().copied().filter(|x| x.is_finite()).collect();
    let rise = e
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckResult::new(
        "energy.decay",
        e.len() < 2 || rise <= ENERGY_SLACK,
        format!("largest relative increase {rise:.3e} (≤ {ENERGY_SLACK:e})"),
    ));
    if let Some(b) = bounds {
        let mut violations = 0usize;
        let mut checked = false;
        for (k, &t) in sol.times.iter().enumerate() {
            if t <= 0.0 {
                continue;
            }
            for s in &sol.points {
                let p = s.samples[k];
                if let Some(c) = &b.lower_curve {
                    checked = true;
                    violations += usize::from(c.eval(t) - p > ENCLOSURE_TOL * p.abs().max(1.0));
                }
                if let Some(c) = &b.upper_curve {
                    checked = true;
                    violations += usize::from(p - c.eval(t) > ENCLOSURE_TOL * p.abs().max(1.0));
                }
            }
        }
        out.push(if checked {
            CheckResult::new(
                "bounds.enclosure",
                violations == 0,
                format!("{violations} samples outside the bound curves"),
            )
        } else {
            CheckResult::skip("bounds.enclosure", "no certified curve")
        });
    }
    out
}
