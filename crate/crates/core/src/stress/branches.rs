use serde::{Deserialize, Serialize};

use super::StressModel;
use crate::error::{Error, Result};
use crate::numerics::linspace;

/// Branch tabulation refuses models with more inverse branches than this.
pub const MAX_BRANCHES: usize = 99;

/// One monotone inverse branch `pᵢ(c)` tabulated on the shared c-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub values: Vec<f64>,
    /// Sign of `pᵢ′(c)`.
    pub increasing: bool,
}

/// The inverse branches `p₁(c) < … < p_{2k+1}(c)` of σ over an interval of
/// stress values free of critical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub c_interval: (f64, f64),
    pub c_grid: Vec<f64>,
    pub branches: Vec<Branch>,
    pub critical_values: Vec<f64>,
}

impl BranchSet {
    pub fn count(&self) -> usize {
        self.branches.len()
    }

    /// Branch values at grid node `j`, increasing.
    pub fn at_node(&self, j: usize) -> Vec<f64> {
        self.branches.iter().map(|b| b.values[j]).collect()
    }
}

/// Tabulates every inverse branch of σ on an `nc`-point grid over
/// `c_interval`. Fails if the interval comes within `1e-9·max(1,|c|)` of a
/// critical value or if a level has an even number of solutions.
pub fn find_branches(model: &StressModel, c_interval: (f64, f64), nc: usize) -> Result<BranchSet> {
    let (c_lo, c_hi) = if c_interval.0 <= c_interval.1 {
        c_interval
    } else {
        (c_interval.1, c_interval.0)
    };
    let (_, cvals) = model.critical_points();
    for &cv in cvals {
        let margin = 1e-9 * cv.abs().max(1.0);
        if cv >= c_lo - margin && cv <= c_hi + margin {
            return Err(Error::InvalidInterval {
                lo: c_lo,
                hi: c_hi,
                critical: cv,
            });
        }
    }
    let c_grid = linspace(c_lo, c_hi, nc.max(1));
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(c_grid.len());
    let mut count = None;
    for &c in &c_grid {
        let r = model.solve_level(c);
        if r.len().is_multiple_of(2) {
            return Err(Error::ModelInconsistency(format!(
                "σ(p) = {c} has {} solutions on the window of `{}`",
                r.len(),
                model.name
            )));
        }
        if r.len() > MAX_BRANCHES {
            return Err(Error::ModelInconsistency(format!(
                "{} inverse branches exceed the cap of {MAX_BRANCHES}",
                r.len()
            )));
        }
        match count {
            None => count = Some(r.len()),
            Some(k) if k != r.len() => {
                return Err(Error::ModelInconsistency(format!(
                    "solution count changes from {k} to {} inside [{c_lo}, {c_hi}]",
                    r.len()
                )))
            }
            _ => {}
        }
        columns.push(r);
    }
    let k = count.unwrap_or(0);
    let branches = (0..k)
        .map(|i| {
            let values: Vec<f64> = columns.iter().map(|col| col[i]).collect();
            Branch {
                increasing: model.sigma_prime(values[0]) > 0.0,
                values,
            }
        })
        .collect();
    Ok(BranchSet {
        c_interval: (c_lo, c_hi),
        c_grid,
        branches,
        critical_values: cvals.to_vec(),
    })
}
