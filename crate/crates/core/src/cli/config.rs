//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::levy::{ControlParams, LevyModel, LevyModelSpec};
use crate::montecarlo::Scheme;
use crate::policy::Policy;
use crate::verify::HjbGrid;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: LevyModelSpec,
    pub params: ControlParams,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// Grid for `value.csv`; `x_max` defaults to `b* + 3`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueGrid {
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_value_rows")]
    pub n: usize,
}

fn default_x_min() -> f64 {
    -2.0
}

fn default_value_rows() -> usize {
    500
}

impl Default for ValueGrid {
    fn default() -> Self {
        ValueGrid {
            x_min: default_x_min(),
            x_max: None,
            n: default_value_rows(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default)]
    pub grid: ValueGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub hjb: HjbGrid,
    /// Points per axis of the value-gap grid on `[0, b + gap_span]`.
    #[serde(default = "default_gap_n")]
    pub gap_n: usize,
    #[serde(default = "default_gap_span")]
    pub gap_span: f64,
    #[serde(default = "default_tail_x_max")]
    pub tail_x_max: f64,
    #[serde(default = "default_tail_n")]
    pub tail_n: usize,
    /// Check this pair instead of the optimal one.
    #[serde(default)]
    pub policy_override: Option<Policy>,
}

fn default_gap_n() -> usize {
    300
}

fn default_gap_span() -> f64 {
    3.0
}

fn default_tail_x_max() -> f64 {
    10.0
}

fn default_tail_n() -> usize {
    101
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            hjb: HjbGrid::default(),
            gap_n: default_gap_n(),
            gap_span: default_gap_span(),
            tail_x_max: default_tail_x_max(),
            tail_n: default_tail_n(),
            policy_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstPassageSpec {
    pub x: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Starting points; defaults to `-0.5, a, (a + b)/2, b`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Defaults to `exact_bv` when `sigma = 0`, `euler` otherwise.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub antithetic: bool,
    /// Simulate this pair instead of the optimal one.
    #[serde(default)]
    pub policy: Option<Policy>,
    /// Transaction cost used on the analytic side only.
    #[serde(default)]
    pub analytic_beta: Option<f64>,
    #[serde(default)]
    pub first_passage: Vec<FirstPassageSpec>,
    /// Pass threshold on `|z|`.
    #[serde(default = "default_z_max")]
    pub z_max: f64,
}

fn default_paths() -> usize {
    200_000
}

fn default_dt() -> f64 {
    1e-3
}

fn default_z_max() -> f64 {
    3.0
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            x0: None,
            n_paths: default_paths(),
            scheme: None,
            dt: default_dt(),
            horizon: None,
            antithetic: false,
            policy: None,
            analytic_beta: None,
            first_passage: Vec::new(),
            z_max: default_z_max(),
        }
    }
}

/// Cartesian product of the listed values; `p` and `q` default to `params`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub beta: Vec<f64>,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.levy_model()?;
        self.params.validate()?;
        let grid = &self.solve.grid;
        if grid.n < 2 {
            return Err(Error::config("solve.grid.n", "need at least 2 points"));
        }
        if !grid.x_min.is_finite() {
            return Err(Error::config("solve.grid.x_min", "must be finite"));
        }
        if let Some(hi) = grid.x_max {
            if !(hi.is_finite() && hi > grid.x_min) {
                return Err(Error::config("solve.grid.x_max", "must be finite and > x_min"));
            }
        }
        let v = &self.verify;
        if v.hjb.n_below < 1 || !v.hjb.lower.is_finite() {
            return Err(Error::config("verify.hjb", "need n_below >= 1 and a finite lower end"));
        }
        if !(v.hjb.span_above.is_finite() && v.hjb.span_above > 0.0) {
            return Err(Error::config("verify.hjb.span_above", "must be > 0"));
        }
        if v.gap_n < 2 {
            return Err(Error::config("verify.gap_n", "need at least 2 points"));
        }
        if !(v.gap_span.is_finite() && v.gap_span >= 0.0) {
            return Err(Error::config("verify.gap_span", "must be >= 0"));
        }
        if !(v.tail_x_max > 0.0) || v.tail_n < 3 {
            return Err(Error::config("verify.tail_x_max", "need tail_x_max > 0 and tail_n >= 3"));
        }
        if let Some(pol) = v.policy_override {
            pol.check_admissible(self.params.beta)
                .map_err(|e| Error::config("verify.policy_override", e.to_string()))?;
        }
        let s = &self.simulate;
        if s.n_paths == 0 {
            return Err(Error::config("simulate.n_paths", "must be >= 1"));
        }
        if let Some(x0) = &s.x0 {
            if x0.is_empty() || x0.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("simulate.x0", "need a non-empty list of finite values"));
            }
        }
        if let Some(pol) = s.policy {
            pol.check_admissible(self.params.beta)
                .map_err(|e| Error::config("simulate.policy", e.to_string()))?;
        }
        if let Some(beta) = s.analytic_beta {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::config("simulate.analytic_beta", "beta must be > 0"));
            }
        }
        for fp in &s.first_passage {
            if !(fp.x <= fp.b) {
                return Err(Error::config("simulate.first_passage", "need x <= b"));
            }
        }
        if let Some(sw) = &self.sweep {
            check_list("sweep.beta", &sw.beta, |b| b > 0.0)?;
            if let Some(p) = &sw.p {
                check_list("sweep.p", p, |p| p > 0.0)?;
            }
            if let Some(q) = &sw.q {
                check_list("sweep.q", q, |q| q >= 0.0)?;
            }
        }
        Ok(())
    }

    pub fn levy_model(&self) -> Result<LevyModel> {
        LevyModel::try_from(self.model.clone()).map_err(|e| Error::config("model", e.to_string()))
    }
}

fn check_list(key: &str, values: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(key, "range is empty"));
    }
    if values.iter().any(|v| !(v.is_finite() && ok(*v))) {
        return Err(Error::config(key, "value out of range"));
    }
    Ok(())
}
