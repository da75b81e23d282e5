//! The single-purpose subcommands: `mixed`, `bounds`, `equilibria`,
//! `asympt`, `counterexample` and `plotdata`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use viscoflow::asymptotics::{analyze, equilibria_enumerate, f_functional, volume_fractions, EquilibriaReport};
use viscoflow::bounds::{BoundConstants, BoundsKind, BoundsProfile};
use viscoflow::counterexample::dense_data_demo;
use viscoflow::displacement::{Stepper, Trajectory};
use viscoflow::mixed::{solve_field, PointwiseMethod};
use viscoflow::{Domain, ModelSpec, StressModel};

use crate::config::{read_samples, Boundary};
use crate::error::CliError;
use crate::output::{write_json, ReadTable, Table};
use crate::run::{mixed_table, RunSummary, BOUNDS_FILE, BOUNDS_JSON, SUMMARY_FILE};

pub fn build_model(spec: &ModelSpec) -> Result<StressModel, CliError> {
    spec.build().map_err(|e| CliError::Config(format!("model: {e}")))
}

// ---------------------------------------------------------------------------
// mixed

/// Pointwise initial data for the mixed problem.
#[derive(Debug, Clone, PartialEq)]
pub enum P0Spec {
    Constant(f64),
    /// `a` on the left half of the samples, `b` on the right.
    Step(f64, f64),
    File(PathBuf),
}

impl std::str::FromStr for P0Spec {
    type Err = String;

    /// `constant:V`, `step:A,B` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
        match s.split_once(':') {
            Some(("constant", v)) => Ok(P0Spec::Constant(num(v)?)),
            Some(("step", v)) => {
                let (a, b) = v.split_once(',').ok_or("step needs two values: step:A,B")?;
                Ok(P0Spec::Step(num(a)?, num(b)?))
            }
            Some(("file", p)) if !p.is_empty() => Ok(P0Spec::File(PathBuf::from(p))),
            _ => Err(format!("`{s}`: expected constant:V, step:A,B or file:PATH")),
        }
    }
}

impl P0Spec {
    pub fn samples(&self, n: usize) -> Result<Vec<f64>, CliError> {
        Ok(match self {
            P0Spec::Constant(v) => vec![*v; n],
            P0Spec::Step(a, b) => (0..n).map(|j| if 2 * j < n { *a } else { *b }).collect(),
            P0Spec::File(path) => read_samples(path)?,
        })
    }
}

#[derive(Serialize)]
struct MixedPoint {
    p0: f64,
    method: PointwiseMethod,
    limit_root: Option<f64>,
}

pub fn mixed(model: &StressModel, samples: &[f64], times: &[f64], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if samples.is_empty() || samples.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(CliError::Config("need at least one finite sample ≥ 0".into()));
    }
    let sol = solve_field(model, samples, times)?;
    let csv = dir.join("mixed.csv");
    mixed_table(&sol).write(&csv)?;
    let points: Vec<MixedPoint> = sol
        .points
        .iter()
        .map(|s| MixedPoint {
            p0: s.p0,
            method: s.method,
            limit_root: s.limit_root,
        })
        .collect();
    let json = dir.join("mixed.json");
    write_json(&json, &points)?;
    Ok(vec![csv, json])
}

// ---------------------------------------------------------------------------
// bounds

/// The JSON companion of `bounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsSidecar {
    pub kind: BoundsKind,
    pub mu: Option<f64>,
    pub constants: BoundConstants,
    pub points: usize,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub lower: Option<String>,
    pub upper: Option<String>,
}

impl BoundsSidecar {
    pub fn new(p: &BoundsProfile) -> Self {
        Self {
            kind: p.kind,
            mu: p.mu,
            constants: p.constants.clone(),
            points: p.times.len(),
            t_min: p.times.first().copied(),
            t_max: p.times.last().copied(),
            lower: p.lower_error.as_ref().map(ToString::to_string),
            upper: p.upper_error.as_ref().map(ToString::to_string),
        }
    }
}

/// `t, lower, upper` with empty cells where a curve is absent.
pub fn bounds_table(profile: &BoundsProfile) -> Table {
    let mut t = Table::new(["t", "lower", "upper"]);
    for (k, &time) in profile.times.iter().enumerate() {
        t.push_opt([
            Some(time),
            profile.lower_curve.as_ref().map(|c| c.values[k]),
            profile.upper_curve.as_ref().map(|c| c.values[k]),
        ]);
    }
    t
}

/// Writes `bounds.csv` (`t, lower, upper`, empty where a curve is absent)
/// and `bounds.json`. Fails with the hypothesis error of an applicable curve
/// that could not be certified, after writing both files.
pub fn bounds(
    model: &StressModel,
    kind: BoundsKind,
    mu: f64,
    grid: &[f64],
    dir: &Path,
) -> Result<(BoundsProfile, Vec<PathBuf>), CliError> {
    let profile = match kind {
        BoundsKind::Mixed => BoundsProfile::mixed(model, grid),
        BoundsKind::Displacement => BoundsProfile::displacement(model, mu, grid),
    };
    let csv = dir.join(BOUNDS_FILE);
    bounds_table(&profile).write(&csv)?;
    let json = dir.join(BOUNDS_JSON);
    write_json(&json, &BoundsSidecar::new(&profile))?;
    let lower_applies = model.domain == Domain::PositiveOnly;
    if let Some(e) = profile.lower_error.as_ref().filter(|_| lower_applies) {
        return Err(CliError::classify(e.clone()));
    }
    if let Some(e) = &profile.upper_error {
        return Err(CliError::classify(e.clone()));
    }
    Ok((profile, vec![csv, json]))
}

// ---------------------------------------------------------------------------
// equilibria

pub fn equilibria(model: &StressModel, mu: f64, dir: &Path) -> Result<(EquilibriaReport, PathBuf), CliError> {
    let report = equilibria_enumerate(model, mu)?;
    let path = dir.join("equilibria.json");
    write_json(&path, &report)?;
    Ok((report, path))
}

// ---------------------------------------------------------------------------
// counterexample

#[derive(Serialize)]
struct MemberSummary {
    z0: f64,
    file: String,
    r_final: f64,
    theta_final: f64,
    z_final: f64,
    norm_final: f64,
    lyapunov_monotone: bool,
}

#[derive(Serialize)]
struct DemoSummary {
    r0: f64,
    t_final: f64,
    members: Vec<MemberSummary>,
}

/// One CSV `t, r, theta, z, lyapunov` per ensemble member plus a JSON
/// summary of the final states.
pub fn counterexample(t_final: f64, records: usize, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !(t_final > 1e-3 && t_final.is_finite()) {
        return Err(CliError::Config(format!("t_final must exceed 1e-3, got {t_final}")));
    }
    let report = dense_data_demo(t_final, records)?;
    let mut files = Vec::new();
    let mut members = Vec::new();
    for (k, m) in report.members.iter().enumerate() {
        let name = format!("member_{k:02}.csv");
        let mut t = Table::new(["t", "r", "theta", "z", "lyapunov"]);
        for (time, s) in m.trajectory.times.iter().zip(&m.trajectory.states) {
            t.push([*time, s.r, s.theta, s.z, s.lyapunov()]);
        }
        t.write(&dir.join(&name))?;
        files.push(dir.join(&name));
        members.push(MemberSummary {
            z0: m.z0,
            file: name,
            r_final: m.r_final,
            theta_final: m.theta_final,
            z_final: m.z_final,
            norm_final: m.norm_final,
            lyapunov_monotone: m.lyapunov_monotone,
        });
    }
    let json = dir.join("counterexample.json");
    write_json(
        &json,
        &DemoSummary {
            r0: report.r0,
            t_final: report.t_final,
            members,
        },
    )?;
    files.push(json);
    Ok(files)
}

// ---------------------------------------------------------------------------
// Reading runs back

/// A trajectory file with the run summary that accompanies it.
pub struct LoadedRun {
    pub model: StressModel,
    pub boundary: Boundary,
    pub mu: f64,
    pub weights: Vec<f64>,
    pub stepper: Stepper,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub table: ReadTable,
}

impl LoadedRun {
    /// Reads `path` and the `summary.json` beside it. `model` replaces the
    /// recorded model; without a summary it is required and weights are
    /// taken equal.
    pub fn load(path: &Path, model: Option<&ModelSpec>) -> Result<Self, CliError> {
        let table = ReadTable::read(path)?;
        let t_col = table
            .column("t")
            .ok_or_else(|| CliError::Config(format!("{}: no `t` column", path.display())))?;
        let p_cols = table.numbered("p_");
        if p_cols.is_empty() {
            return Err(CliError::Config(format!("{}: no p_i columns", path.display())));
        }
        let times: Vec<f64> = table.rows.iter().map(|r| r[t_col]).collect();
        let values: Vec<Vec<f64>> = table
            .rows
            .iter()
            .map(|r| p_cols.iter().map(|&c| r[c]).collect())
            .collect();
        let summary_path = path.with_file_name(SUMMARY_FILE);
        let summary = if summary_path.exists() {
            Some(RunSummary::read(&summary_path)?)
        } else {
            None
        };
        let spec = match (model, &summary) {
            (Some(m), _) => m.clone(),
            (None, Some(s)) => s.model.clone(),
            (None, None) => {
                return Err(CliError::Config(format!(
                    "{}: no {SUMMARY_FILE} beside the trajectory; pass --model",
                    path.display()
                )))
            }
        };
        let n = p_cols.len();
        let weights = match &summary {
            Some(s) if s.weights.len() == n => s.weights.clone(),
            _ => vec![1.0 / n as f64; n],
        };
        let mu = values
            .first()
            .map(|v| v.iter().zip(&weights).map(|(p, w)| p * w).sum())
            .unwrap_or(f64::NAN);
        Ok(Self {
            model: build_model(&spec)?,
            boundary: summary.as_ref().map(|s| s.boundary).unwrap_or_default(),
            mu,
            weights,
            stepper: summary.as_ref().map(|s| s.stepper).unwrap_or_default(),
            times,
            values,
            table,
        })
    }

    pub fn trajectory(&self) -> Result<Trajectory, CliError> {
        if self.boundary == Boundary::Mixed {
            return Err(CliError::Config(
                "this analysis needs a displacement-problem trajectory".into(),
            ));
        }
        Trajectory::from_records(
            &self.model,
            self.weights.clone(),
            self.times.clone(),
            self.values.clone(),
            self.stepper,
        )
        .map_err(|e| CliError::Config(format!("trajectory: {e}")))
    }
}

// ---------------------------------------------------------------------------
// asympt

/// Writes `asymptotics.json` and `asympt_series.csv`
/// (`t, c, rhs_norm, energy, f_s, f_s2, f_s3`).
pub fn asympt(run: &LoadedRun, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let traj = run.trajectory()?;
    let report = analyze(&run.model, &traj);
    let json = dir.join("asymptotics.json");
    write_json(&json, &report)?;
    let series = |f: fn(f64) -> f64, fp: fn(f64) -> f64| -> Vec<Option<f64>> {
        match f_functional(&run.model, &traj, f, fp) {
            Ok(s) => s.values.into_iter().map(Some).collect(),
            Err(_) => vec![None; traj.len()],
        }
    };
    let f1 = series(|s| s, |_| 1.0);
    let f2 = series(|s| s * s, |s| 2.0 * s);
    let f3 = series(|s| s * s * s, |s| 3.0 * s * s);
    let mut t = Table::new(["t", "c", "rhs_norm", "energy", "f_s", "f_s2", "f_s3"]);
    for k in 0..traj.len() {
        let d = traj.diagnostics[k];
        t.push_opt([
            Some(traj.times[k]),
            Some(d.c),
            Some(d.rhs_norm()),
            Some(d.energy),
            f1[k],
            f2[k],
            f3[k],
        ]);
    }
    let csv = dir.join("asympt_series.csv");
    t.write(&csv)?;
    Ok(vec![json, csv])
}

// ---------------------------------------------------------------------------
// plotdata

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// `t, p_1..p_N, lower, upper`.
    Fan,
    /// `t, c`.
    C,
    /// `t, energy`.
    Energy,
    /// `t, mu_1..mu_K`: mass near each branch value at `c(t)`.
    Fractions,
}

impl PlotKind {
    fn name(self) -> &'static str {
        match self {
            PlotKind::Fan => "fan",
            PlotKind::C => "c",
            PlotKind::Energy => "energy",
            PlotKind::Fractions => "fractions",
        }
    }
}

pub fn plotdata(run: &LoadedRun, kind: PlotKind, trajectory_path: &Path, dir: &Path) -> Result<PathBuf, CliError> {
    let table = match kind {
        PlotKind::Fan => fan(run, trajectory_path)?,
        PlotKind::C => {
            let traj = run.trajectory()?;
            let mut t = Table::new(["t", "c"]);
            for (time, d) in traj.times.iter().zip(&traj.diagnostics) {
                t.push([*time, d.c]);
            }
            t
        }
        PlotKind::Energy => {
            let energy: Vec<f64> = match run.table.column("energy") {
                Some(col) => run.table.rows.iter().map(|r| r[col]).collect(),
                None => run.trajectory()?.energies(),
            };
            let mut t = Table::new(["t", "energy"]);
            for (time, e) in run.times.iter().zip(energy) {
                t.push([*time, e]);
            }
            t
        }
        PlotKind::Fractions => {
            let traj = run.trajectory()?;
            let records = volume_fractions(&run.model, &traj, None);
            let k = records.iter().map(|r| r.fractions.len()).max().unwrap_or(0);
            let mut header = vec!["t".to_string()];
            header.extend((1..=k).map(|i| format!("mu_{i}")));
            let mut t = Table::new(header);
            for r in &records {
                let mut row = vec![r.t];
                row.extend(&r.fractions);
                row.resize(k + 1, 0.0);
                t.push(row);
            }
            t
        }
    };
    let path = dir.join(format!("plot_{}.csv", kind.name()));
    table.write(&path)?;
    Ok(path)
}

/// Strains with the bound curves: taken from `bounds.csv` beside the
/// trajectory when its times match, else recomputed.
fn fan(run: &LoadedRun, trajectory_path: &Path) -> Result<Table, CliError> {
    let n = run.weights.len();
    let (lower, upper) = match stored_bounds(run, trajectory_path) {
        Some(b) => b,
        None => {
            let grid: Vec<f64> = run.times.iter().copied().filter(|&t| t > 0.0).collect();
            let profile = match run.boundary {
                Boundary::Mixed => BoundsProfile::mixed(&run.model, &grid),
                Boundary::Displacement => BoundsProfile::displacement(&run.model, run.mu, &grid),
            };
            let at = |c: &Option<viscoflow::bounds::Curve>| -> Vec<Option<f64>> {
                run.times
                    .iter()
                    .map(|&t| c.as_ref().filter(|_| t > 0.0).map(|c| c.eval(t)))
                    .collect()
            };
            (at(&profile.lower_curve), at(&profile.upper_curve))
        }
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("p_{i}")));
    header.extend(["lower".to_string(), "upper".to_string()]);
    let mut t = Table::new(header);
    for (k, time) in run.times.iter().enumerate() {
        let mut row: Vec<Option<f64>> = vec![Some(*time)];
        row.extend(run.values[k].iter().map(|&p| Some(p)));
        row.extend([lower[k], upper[k]]);
        t.push_opt(row);
    }
    Ok(t)
}

type CurvePair = (Vec<Option<f64>>, Vec<Option<f64>>);

fn stored_bounds(run: &LoadedRun, trajectory_path: &Path) -> Option<CurvePair> {
    let path = trajectory_path.with_file_name(BOUNDS_FILE);
    let b = ReadTable::read(&path).ok()?;
    let (tc, lc, uc) = (b.column("t")?, b.column("lower")?, b.column("upper")?);
    let mut rows = b.rows.iter().peekable();
    let mut lower = Vec::with_capacity(run.times.len());
    let mut upper = Vec::with_capacity(run.times.len());
    for &t in &run.times {
        match rows.peek() {
            Some(r) if r[tc] == t => {
                let finite = |x: f64| Some(x).filter(|x| !x.is_nan());
                lower.push(finite(r[lc]));
                upper.push(finite(r[uc]));
                rows.next();
            }
            _ if t <= 0.0 => {
                lower.push(None);
                upper.push(None);
            }
            _ => return None,
        }
    }
    Some((lower, upper))
}
