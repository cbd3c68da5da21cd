//! Numerical certificates for the verification conditions.
//!
//! A candidate value `v` is optimal if `(Gamma - q - p 1{x<0}) v <= 0` almost
//! everywhere and `v(y) - v(x) >= y - x - beta` for `y >= x >= 0`, where
//!
//! ```text
//! Gamma v(x) = mu v'(x) + sigma^2/2 v''(x) + int_0^inf (v(x - z) - v(x)) nu(dz).
//! ```
//!
//! Derivatives come from the exponential-sum representation; only the jump
//! integral is computed by quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{ControlParams, LevyModel};
use crate::policy::{OptimalSolution, ValueFunction};
use crate::quad;
use crate::scale::ParisianZ;

/// Relative tolerance for the jump integral.
pub const QUAD_RTOL: f64 = 1e-9;
/// Jump integrals are truncated where `e^{-alpha_1 z}` falls below this.
pub const TAIL_CUTOFF: f64 = 1e-16;
/// `|residual| <= EQUALITY_TOL (1 + |v|)` below the barrier.
pub const EQUALITY_TOL: f64 = 1e-6;
/// `residual <= SLACK_TOL` above the barrier.
pub const SLACK_TOL: f64 = 1e-8;
pub const GAP_TOL: f64 = 1e-9;
pub const SMOOTH_FIT_TOL: f64 = 1e-10;
/// Grid points are kept at least this far from breakpoints.
pub const BREAKPOINT_OFFSET: f64 = 1e-6;

/// A function the generator can act on.
pub trait PiecewiseSmooth: Sync {
    fn value(&self, x: f64) -> f64;
    /// Derivative of order 1 or 2 (one-sided at breakpoints).
    fn deriv(&self, x: f64, order: u32) -> f64;
    fn breakpoints(&self) -> Vec<f64>;
    /// Exponential growth rate of `|v(x - z)|` as `z -> inf`.
    fn left_growth(&self) -> f64 {
        0.0
    }
}

impl PiecewiseSmooth for ValueFunction {
    fn value(&self, x: f64) -> f64 {
        ValueFunction::value(self, x)
    }

    fn deriv(&self, x: f64, order: u32) -> f64 {
        ValueFunction::deriv(self, x, order)
    }

    fn breakpoints(&self) -> Vec<f64> {
        ValueFunction::breakpoints(self).to_vec()
    }
}

impl PiecewiseSmooth for ParisianZ {
    fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }

    fn deriv(&self, x: f64, order: u32) -> f64 {
        self.eval(x, order)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }
}

/// `e^{rate x}` on the whole line.
#[derive(Debug, Clone, Copy)]
pub struct Exponential(pub f64);

impl PiecewiseSmooth for Exponential {
    fn value(&self, x: f64) -> f64 {
        (self.0 * x).exp()
    }

    fn deriv(&self, x: f64, order: u32) -> f64 {
        self.0.powi(order as i32) * (self.0 * x).exp()
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn left_growth(&self) -> f64 {
        (-self.0).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl PiecewiseSmooth for Constant {
    fn value(&self, _x: f64) -> f64 {
        self.0
    }

    fn deriv(&self, _x: f64, _order: u32) -> f64 {
        0.0
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `Gamma v(x)`.
pub fn generator_apply<V: PiecewiseSmooth + ?Sized>(model: &LevyModel, v: &V, x: f64) -> Result<f64> {
    let mut out = model.mu() * v.deriv(x, 1);
    if model.sigma() > 0.0 {
        out += 0.5 * model.sigma() * model.sigma() * v.deriv(x, 2);
    }
    if let Some(alpha1) = model.min_jump_rate() {
        let rate = alpha1 - v.left_growth();
        if rate <= 0.0 {
            return Err(Error::Domain(format!(
                "jump integral diverges: growth {} >= alpha_1 = {alpha1}",
                v.left_growth()
            )));
        }
        let vx = v.value(x);
        let kinks: Vec<f64> = v
            .breakpoints()
            .into_iter()
            .map(|bp| x - bp)
            .filter(|z| *z > 0.0)
            .collect();
        let density = |z: f64| -> f64 {
            model
                .jump_components()
                .map(|(lw, a)| lw * a * (-a * z).exp())
                .sum()
        };
        let jump = quad::integrate_decaying(
            |z| (v.value(x - z) - vx) * density(z),
            rate,
            TAIL_CUTOFF,
            &kinks,
            QUAD_RTOL,
        )?;
        out += jump.value;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Neg,
    Band,
    Above,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Neg => "neg",
            Regime::Band => "band",
            Regime::Above => "above",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbPoint {
    pub x: f64,
    pub residual: f64,
    pub value: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbReport {
    pub points: Vec<HjbPoint>,
    /// `max |residual| / (1 + |v|)` over grid points below the barrier.
    pub max_equality_violation: f64,
    /// `min (-residual)` over grid points above the barrier.
    pub min_slack: f64,
    pub quadrature_tol: f64,
    pub passes: bool,
}

/// Grid for the HJB check: `n_below` points on `[lower, b - offset]` and
/// `n_above` points on `(b, b + span_above]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbGrid {
    pub lower: f64,
    pub n_below: usize,
    pub span_above: f64,
    pub n_above: usize,
}

impl Default for HjbGrid {
    fn default() -> Self {
        HjbGrid {
            lower: -3.0,
            n_below: 200,
            span_above: 5.0,
            n_above: 50,
        }
    }
}

impl HjbGrid {
    pub fn points(&self, b: f64) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.n_below + self.n_above);
        let top = b - BREAKPOINT_OFFSET;
        for k in 0..self.n_below {
            let t = if self.n_below == 1 {
                0.0
            } else {
                k as f64 / (self.n_below - 1) as f64
            };
            let mut x = self.lower + t * (top - self.lower);
            if x.abs() < BREAKPOINT_OFFSET {
                x = if x < 0.0 {
                    -BREAKPOINT_OFFSET
                } else {
                    BREAKPOINT_OFFSET
                };
            }
            xs.push(x);
        }
        for k in 1..=self.n_above {
            let x = b + self.span_above * k as f64 / self.n_above as f64;
            xs.push(x.max(b + BREAKPOINT_OFFSET));
        }
        xs
    }
}

/// `(Gamma - q - p 1{x<0}) v` on the grid, with the equality/inequality
/// verdicts split at `v.b`.
pub fn hjb_check(model: &LevyModel, params: &ControlParams, v: &ValueFunction, grid: &HjbGrid) -> Result<HjbReport> {
    let xs = grid.points(v.b);
    let points: Vec<HjbPoint> = xs
        .par_iter()
        .map(|&x| -> Result<HjbPoint> {
            let value = v.value(x);
            let rate = params.q + if x < 0.0 { params.p } else { 0.0 };
            let residual = generator_apply(model, v, x)? - rate * value;
            let regime = if x < 0.0 {
                Regime::Neg
            } else if x <= v.b {
                Regime::Band
            } else {
                Regime::Above
            };
            Ok(HjbPoint {
                x,
                residual,
                value,
                regime,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize_hjb(points))
}

fn summarize_hjb(points: Vec<HjbPoint>) -> HjbReport {
    let max_equality_violation = points
        .iter()
        .filter(|p| p.regime != Regime::Above)
        .map(|p| p.residual.abs() / (1.0 + p.value.abs()))
        .fold(0.0, f64::max);
    let min_slack = points
        .iter()
        .filter(|p| p.regime == Regime::Above)
        .map(|p| -p.residual)
        .fold(f64::INFINITY, f64::min);
    let passes = max_equality_violation <= EQUALITY_TOL && !(min_slack < -SLACK_TOL);
    HjbReport {
        points,
        max_equality_violation,
        min_slack,
        quadrature_tol: QUAD_RTOL,
        passes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    /// `min v(y) - v(x) - (y - x - beta)` over pairs `y >= x`.
    pub min_gap: f64,
    pub argmin: (f64, f64),
    pub pairs: usize,
    pub passes: bool,
}

pub fn value_gap_check<V: PiecewiseSmooth + ?Sized>(v: &V, beta: f64, x_grid: &[f64], y_grid: &[f64]) -> Result<GapReport> {
    if x_grid.iter().chain(y_grid).any(|t| !(*t >= 0.0)) {
        return Err(Error::Domain("value-gap grids must be nonnegative".into()));
    }
    let vy: Vec<f64> = y_grid.iter().map(|&y| v.value(y)).collect();
    let mut min_gap = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN);
    let mut pairs = 0;
    for &x in x_grid {
        let vx = v.value(x);
        for (&y, &v_y) in y_grid.iter().zip(&vy) {
            if y < x {
                continue;
            }
            pairs += 1;
            let gap = v_y - vx - (y - x - beta);
            if gap < min_gap {
                min_gap = gap;
                argmin = (x, y);
            }
        }
    }
    Ok(GapReport {
        min_gap,
        argmin,
        pairs,
        passes: min_gap >= -GAP_TOL,
    })
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `|v*'(b*-) - v*'(b*+)|`.
pub fn smooth_fit_check(sol: &OptimalSolution) -> f64 {
    (sol.coeff * sol.z.d1(sol.b_star) - 1.0).abs()
}
