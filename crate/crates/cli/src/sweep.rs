//! Parameter sweeps: the cartesian product of a few axes applied to a
//! template configuration, members run concurrently.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, InitialData};
use crate::error::CliError;
use crate::manifest::Status;
use crate::output::write_json;
use crate::run::run;

pub const SWEEP_FILE: &str = "sweep.json";

/// One axis `key=v1,v2,...` or, for integer keys, `key=a..b` (inclusive).
/// Keys `mu`, `n`, `seed`, `t_final`; anything else is a model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, list) = s
            .split_once('=')
            .ok_or_else(|| format!("`{s}`: expected key=v1,v2,... or key=a..b"))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(format!("`{s}`: empty key"));
        }
        let list = list.trim();
        let values = if let Some((a, b)) = list.split_once("..") {
            let a: i64 = a.trim().parse().map_err(|_| format!("`{a}` is not an integer"))?;
            let b: i64 = b.trim().parse().map_err(|_| format!("`{b}` is not an integer"))?;
            (a..=b).map(|k| k as f64).collect()
        } else {
            list.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(Axis { key, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    pub exit_code: i32,
    pub pass: bool,
    pub checks: BTreeMap<String, Status>,
    pub converged: Option<bool>,
    pub sigma_bar: Option<f64>,
    /// Residual of the stress quadratic at the measured limit, relative to
    /// `max(1, σ̄²)`: the re-derived form and the form with flipped signs.
    pub sigma_residual: Option<f64>,
    pub sigma_residual_flipped: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub template_hash: String,
    pub axes: Vec<Axis>,
    pub members: usize,
    pub passed: usize,
    /// Fraction of members in which each check passed (skips excluded).
    pub pass_rates: BTreeMap<String, f64>,
    pub rows: Vec<SweepRow>,
}

/// Cartesian product in axis order, the last axis varying fastest. No axes,
/// or any empty axis, gives no members.
pub fn members(axes: &[Axis]) -> Vec<BTreeMap<String, f64>> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BTreeMap::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|m| {
                axis.values.iter().map(move |&v| {
                    let mut m = m.clone();
                    m.insert(axis.key.clone(), v);
                    m
                })
            })
            .collect();
    }
    out
}

pub fn apply(template: &ExperimentConfig, params: &BTreeMap<String, f64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = template.clone();
    for (key, &v) in params {
        match key.as_str() {
            "mu" => cfg.mu = v,
            "t_final" => cfg.t_final = v,
            "n" | "seed" if !(v >= 0.0 && v.fract() == 0.0) => {
                return Err(CliError::Config(format!("{key} = {v} is not a nonnegative integer")))
            }
            "n" => cfg.n = v as usize,
            "seed" => {
                let range = match &cfg.initial {
                    InitialData::Random { range, .. } => *range,
                    _ => None,
                };
                cfg.initial = InitialData::Random { seed: v as u64, range };
            }
            _ => {
                cfg.model.params.insert(key.clone(), v);
            }
        }
    }
    Ok(cfg)
}

/// Runs every member into `dir/member-NNNN` on a pool of `jobs` threads
/// (default: logical cores) and writes `dir/sweep.json`. Member failures are
/// recorded in their rows.
pub fn sweep(
    template: &ExperimentConfig,
    axes: &[Axis],
    jobs: Option<usize>,
    dir: &Path,
) -> Result<SweepReport, CliError> {
    let grid = members(axes);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(index, params)| member(template, index, params, dir))
            .collect()
    });
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        for (name, status) in &r.checks {
            let e = counts.entry(name.clone()).or_default();
            e.1 += usize::from(*status != Status::Skip);
            e.0 += usize::from(*status == Status::Pass);
        }
    }
    let pass_rates = counts
        .into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(k, (pass, total))| (k, pass as f64 / total as f64))
        .collect();
    let report = SweepReport {
        template_hash: template.hash(),
        axes: axes.to_vec(),
        members: rows.len(),
        passed: rows.iter().filter(|r| r.pass).count(),
        pass_rates,
        rows,
    };
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(SWEEP_FILE), &report)?;
    Ok(report)
}

fn member(template: &ExperimentConfig, index: usize, params: &BTreeMap<String, f64>, dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        index,
        params: params.clone(),
        exit_code: 0,
        pass: false,
        checks: BTreeMap::new(),
        converged: None,
        sigma_bar: None,
        sigma_residual: None,
        sigma_residual_flipped: None,
        error: None,
    };
    let out = dir.join(format!("member-{index:04}"));
    let cfg = match apply(template, params) {
        Ok(mut cfg) => {
            cfg.output_dir = out.clone();
            cfg
        }
        Err(e) => {
            row.exit_code = e.exit_code();
            row.error = Some(e.to_string());
            return row;
        }
    };
    match run(&cfg, &out) {
        Err(e) => {
            row.exit_code = e.exit_code();
            row.error = Some(e.to_string());
        }
        Ok(o) => {
            row.exit_code = o.exit_code();
            row.pass = o.exit_code() == 0;
            row.error = o.manifest.error.clone();
            row.checks = o
                .manifest
                .checks
                .iter()
                .map(|c| (c.name.clone(), c.status))
                .collect();
            if let Some(traj) = &o.trajectory {
                row.converged = Some(traj.converged);
                let invariants = cfg
                    .model
                    .build()
                    .ok()
                    .and_then(|m| viscoflow::asymptotics::cubic_invariants(&m, traj).ok());
                if let Some(ci) = invariants {
                    let scale = ci.sigma_bar.powi(2).max(1.0);
                    row.sigma_bar = Some(ci.sigma_bar);
                    row.sigma_residual = Some(ci.derived.residual / scale);
                    row.sigma_residual_flipped = Some(ci.printed.residual / scale);
                }
            }
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_parse_lists_and_ranges() {
        let a: Axis = "mu=0.1, 0.5,0.9".parse().unwrap();
        assert_eq!(a.values, vec![0.1, 0.5, 0.9]);
        let s: Axis = "seed=3..5".parse().unwrap();
        assert_eq!(s.values, vec![3.0, 4.0, 5.0]);
        let e: Axis = "mu=".parse().unwrap();
        assert!(e.values.is_empty());
        assert!("mu".parse::<Axis>().is_err());
        assert!("mu=x".parse::<Axis>().is_err());
    }

    #[test]
    fn product_order_and_size() {
        let axes = vec![
            Axis { key: "mu".into(), values: vec![0.1, 0.2] },
            Axis { key: "seed".into(), values: vec![1.0, 2.0, 3.0] },
        ];
        let m = members(&axes);
        assert_eq!(m.len(), 6);
        assert_eq!((m[1]["mu"], m[1]["seed"]), (0.1, 2.0));
        assert!(members(&[]).is_empty());
        let empty = vec![axes[0].clone(), Axis { key: "n".into(), values: vec![] }];
        assert!(members(&empty).is_empty());
    }

    #[test]
    fn overrides_land_in_the_right_fields() {
        let base = ExperimentConfig::default();
        let p = BTreeMap::from([
            ("mu".to_string(), 0.3),
            ("seed".to_string(), 9.0),
            ("kappa".to_string(), 0.2),
        ]);
        let cfg = apply(&base, &p).unwrap();
        assert_eq!(cfg.mu, 0.3);
        assert_eq!(cfg.initial, InitialData::Random { seed: 9, range: None });
        assert_eq!(cfg.model.params["kappa"], 0.2);
        let bad = BTreeMap::from([("n".to_string(), 2.5)]);
        assert!(apply(&base, &bad).is_err());
    }
}
