//! Built-in model families and the name + parameter registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Law, StressModel};
use crate::error::{Error, Result};

pub const FULL_LINE_WINDOW: (f64, f64) = (-10.0, 10.0);
pub const POSITIVE_WINDOW: (f64, f64) = (1e-3, 20.0);

/// Default coefficients of the singular cubic
/// `σ = a3 p³ + a2 p² + a1 p + a0 − κ/p`.
pub const SINGULAR_CUBIC_DEFAULT: [f64; 5] = [1.0, -3.0, 2.2, 0.3, 0.5];

impl StressModel {
    /// `σ = p³ − p` on the whole line.
    pub fn cubic() -> Self {
        Self::new(
            "cubic",
            Law::Polynomial {
                coeffs: vec![0.0, -1.0, 0.0, 1.0],
                kappa: 0.0,
            },
            FULL_LINE_WINDOW,
        )
        .expect("cubic is well formed")
    }

    /// `σ = a3 p³ + a2 p² + a1 p + a0` on the whole line.
    pub fn shifted_cubic(a3: f64, a2: f64, a1: f64, a0: f64) -> Result<Self> {
        Self::new(
            "shifted-cubic",
            Law::Polynomial {
                coeffs: vec![a0, a1, a2, a3],
                kappa: 0.0,
            },
            FULL_LINE_WINDOW,
        )
    }

    /// `σ = a3 p³ + a2 p² + a1 p + a0 − κ/p` on `(0, ∞)`, `κ > 0`.
    pub fn singular_cubic(a3: f64, a2: f64, a1: f64, a0: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::ModelInconsistency(format!(
                "singular-cubic needs kappa > 0, got {kappa}"
            )));
        }
        Self::new(
            "singular-cubic",
            Law::Polynomial {
                coeffs: vec![a0, a1, a2, a3],
                kappa,
            },
            POSITIVE_WINDOW,
        )
    }

    pub fn singular_cubic_default() -> Self {
        let [a3, a2, a1, a0, k] = SINGULAR_CUBIC_DEFAULT;
        Self::singular_cubic(a3, a2, a1, a0, k).expect("default singular cubic is well formed")
    }

    /// `σ = p − shift` on the whole line.
    pub fn linear(shift: f64) -> Result<Self> {
        Self::new(
            "linear",
            Law::Polynomial {
                coeffs: vec![-shift, 1.0],
                kappa: 0.0,
            },
            FULL_LINE_WINDOW,
        )
    }

    /// `σ = ln p`.
    pub fn log_law() -> Self {
        Self::new("log", Law::Log, POSITIVE_WINDOW).expect("log law is well formed")
    }

    /// `σ = p − 1/p`.
    pub fn p_minus_inv() -> Self {
        Self::new(
            "p-minus-inv",
            Law::Polynomial {
                coeffs: vec![0.0, 1.0],
                kappa: 1.0,
            },
            POSITIVE_WINDOW,
        )
        .expect("p - 1/p is well formed")
    }

    /// `σ = p² − 1/p`.
    pub fn p2_minus_inv() -> Self {
        Self::new(
            "p2-minus-inv",
            Law::Polynomial {
                coeffs: vec![0.0, 0.0, 1.0],
                kappa: 1.0,
            },
            POSITIVE_WINDOW,
        )
        .expect("p^2 - 1/p is well formed")
    }

    /// `σ = Σ coeffs[k] p^k − κ/p`; positive-only iff `κ ≠ 0`.
    pub fn polynomial(coeffs: Vec<f64>, kappa: f64) -> Result<Self> {
        let window = if kappa != 0.0 {
            POSITIVE_WINDOW
        } else {
            FULL_LINE_WINDOW
        };
        Self::new("polynomial", Law::Polynomial { coeffs, kappa }, window)
    }
}

/// Model addressed by name plus named parameters, as written in config files.
///
/// Names: `cubic`, `shifted-cubic` (a3, a2, a1, a0), `singular-cubic`
/// (a3, a2, a1, a0, kappa), `linear` (shift), `log`, `p-minus-inv`,
/// `p2-minus-inv`, `polynomial` (`coeffs` ascending, optional kappa).
/// An optional `window = [lo, hi]` overrides the evaluation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::named("cubic")
    }
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            coeffs: None,
            window: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::ModelInconsistency(format!(
                "model `{}` has no parameter `{k}`",
                self.name
            ))),
            None => Ok(()),
        }
    }

    pub fn build(&self) -> Result<StressModel> {
        let [d3, d2, d1, d0, dk] = SINGULAR_CUBIC_DEFAULT;
        let model = match self.name.as_str() {
            "cubic" => {
                self.check_keys(&[])?;
                StressModel::cubic()
            }
            "shifted-cubic" => {
                self.check_keys(&["a3", "a2", "a1", "a0"])?;
                StressModel::shifted_cubic(
                    self.param("a3", 1.0),
                    self.param("a2", 0.0),
                    self.param("a1", -1.0),
                    self.param("a0", 0.0),
                )?
            }
            "singular-cubic" => {
                self.check_keys(&["a3", "a2", "a1", "a0", "kappa"])?;
                StressModel::singular_cubic(
                    self.param("a3", d3),
                    self.param("a2", d2),
                    self.param("a1", d1),
                    self.param("a0", d0),
                    self.param("kappa", dk),
                )?
            }
            "linear" => {
                self.check_keys(&["shift"])?;
                StressModel::linear(self.param("shift", 1.0))?
            }
            "log" => {
                self.check_keys(&[])?;
                StressModel::log_law()
            }
            "p-minus-inv" => {
                self.check_keys(&[])?;
                StressModel::p_minus_inv()
            }
            "p2-minus-inv" => {
                self.check_keys(&[])?;
                StressModel::p2_minus_inv()
            }
            "polynomial" => {
                self.check_keys(&["kappa"])?;
                let coeffs = self.coeffs.clone().ok_or_else(|| {
                    Error::ModelInconsistency("polynomial model needs `coeffs`".into())
                })?;
                StressModel::polynomial(coeffs, self.param("kappa", 0.0))?
            }
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        match self.window {
            Some([lo, hi]) => StressModel::new(model.name, model.law, (lo, hi)),
            None => Ok(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_name() {
        for name in [
            "cubic",
            "shifted-cubic",
            "singular-cubic",
            "linear",
            "log",
            "p-minus-inv",
            "p2-minus-inv",
        ] {
            let m = ModelSpec::named(name).build().unwrap();
            assert_eq!(m.name, name);
        }
        let poly = ModelSpec {
            coeffs: Some(vec![0.0, -1.0, 0.0, 1.0]),
            ..ModelSpec::named("polynomial")
        }
        .build()
        .unwrap();
        assert_eq!(poly.sigma(2.0), 6.0);
    }

    #[test]
    fn registry_rejects_unknown_names_and_params() {
        assert!(matches!(
            ModelSpec::named("quartic").build(),
            Err(Error::UnknownModel(_))
        ));
        assert!(ModelSpec::named("cubic").with("kappa", 1.0).build().is_err());
        assert!(ModelSpec::named("singular-cubic")
            .with("kappa", 0.0)
            .build()
            .is_err());
    }

    #[test]
    fn kappa_parameter_is_applied() {
        let m = ModelSpec::named("singular-cubic")
            .with("kappa", 0.1)
            .build()
            .unwrap();
        assert!((m.sigma(1.0) - (1.0 - 3.0 + 2.2 + 0.3 - 0.1)).abs() < 1e-15);
    }
}
