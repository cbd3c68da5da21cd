//! Scale functions as exact exponential sums.
//!
//! For the supported family `psi(theta) - r` is a rational function whose
//! zeros are all real and simple, so partial fractions give
//!
//! ```text
//! W^{(q)}(x) = sum_j e^{theta_j x} / psi'(theta_j),      x >= 0,
//! ```
//!
//! over the roots `theta_j` of `psi = q`. Integrating term-wise,
//!
//! ```text
//! Z(x) = p int_0^inf e^{-Phi(p+q) y} W^{(q)}(x + y) dy
//!      = sum_j p / (psi'(theta_j) (Phi(p+q) - theta_j)) e^{theta_j x},   x >= 0,
//! Z(x) = e^{Phi(p+q) x},                                                   x <= 0.
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{ControlParams, LevyModel};
use crate::roots;

/// Minimum separation between distinct exponents.
pub const ROOT_SEPARATION: f64 = 1e-9;

/// `sum_j c_j e^{theta_j x}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpSum {
    terms: Vec<ExpTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpTerm {
    pub coeff: f64,
    pub exponent: f64,
}

impl ExpSum {
    pub fn new(terms: Vec<ExpTerm>) -> Result<Self> {
        let mut exps: Vec<f64> = terms.iter().map(|t| t.exponent).collect();
        exps.sort_by(|a, b| a.total_cmp(b));
        if let Some(w) = exps.windows(2).find(|w| w[1] - w[0] <= ROOT_SEPARATION) {
            return Err(Error::Degenerate(format!(
                "exponents {} and {} are closer than {ROOT_SEPARATION:e}",
                w[0], w[1]
            )));
        }
        Ok(ExpSum { terms })
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    /// `d^k/dx^k` of the sum at `x`.
    pub fn eval(&self, x: f64, deriv: u32) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.exponent.powi(deriv as i32) * (t.exponent * x).exp())
            .sum()
    }

    /// `int_0^inf e^{-s x} f(x) dx`, valid for `s` above every exponent.
    pub fn laplace(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.coeff / (s - t.exponent)).sum()
    }

    pub fn max_exponent(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.exponent)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// All real roots of `psi(theta) = r`, ascending.
///
/// There is one root per gap between consecutive poles `-alpha_i`, one in
/// `(-alpha_1, 0)`, one below `-alpha_m` when `sigma > 0`, and `Phi(r)`.
/// For `r = 0` the model must drift upwards, and `0` is returned as `Phi(0)`.
pub fn psi_roots(model: &LevyModel, r: f64) -> Result<Vec<f64>> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!("psi_roots needs r >= 0, got {r}")));
    }
    if r == 0.0 && model.mean_drift() <= 0.0 {
        return Err(Error::Unsupported(
            "r = 0 requires psi'(0+) > 0 (process drifting to +inf)".into(),
        ));
    }
    let f = |t: f64| model.psi(t) - r;
    let df = |t: f64| model.psi_prime(t);

    let mut out = Vec::new();
    let poles: Vec<f64> = model.jump_rates().iter().map(|a| -a).collect();

    // Interval right-end of each bracket; the function is negative just left
    // of it and positive just right of the left end.
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    // poles are descending: -alpha_1 > -alpha_2 > ...
    let mut right = 0.0;
    for &pole in &poles {
        brackets.push((pole, right));
        right = pole;
    }
    if model.sigma() > 0.0 {
        let mut d = 1.0_f64.max(right.abs());
        while f(right - d) <= 0.0 {
            d *= 2.0;
        }
        brackets.push((right - d, right));
    }
    for (lo, hi) in brackets {
        let root = roots::bisect_signed(f, lo, hi, 1.0, 0.0);
        out.push(roots::newton_polish(f, df, root, lo, hi, 3));
    }
    out.push(model.phi_unchecked(r));
    out.sort_by(|a, b| a.total_cmp(b));
    if let Some(w) = out.windows(2).find(|w| w[1] - w[0] <= ROOT_SEPARATION) {
        return Err(Error::Degenerate(format!(
            "roots of psi = {r} at {} and {} are not separated",
            w[0], w[1]
        )));
    }
    Ok(out)
}

/// The `q`-scale function, zero on `(-inf, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleW {
    pub q: f64,
    pub sum: ExpSum,
}

impl ScaleW {
    pub fn build(model: &LevyModel, q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Domain(format!("q must be >= 0, got {q}")));
        }
        if q == 0.0 && model.mean_drift() <= 0.0 {
            return Err(Error::Unsupported(
                "W^(0) needs psi'(0+) > 0 in this representation".into(),
            ));
        }
        let terms = psi_roots(model, q)?
            .into_iter()
            .map(|t| ExpTerm {
                coeff: 1.0 / model.psi_prime(t),
                exponent: t,
            })
            .collect();
        Ok(ScaleW {
            q,
            sum: ExpSum::new(terms)?,
        })
    }

    pub fn eval(&self, x: f64, deriv: u32) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.sum.eval(x, deriv)
        }
    }

    /// `Phi(q)`, the largest exponent.
    pub fn phi_q(&self) -> f64 {
        self.sum.max_exponent()
    }
}

pub fn build_w(model: &LevyModel, q: f64) -> Result<ScaleW> {
    ScaleW::build(model, q)
}

/// The Parisian scale function `Z` for rates `(q, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParisianZ {
    /// Valid on `[0, inf)`.
    pub pos_part: ExpSum,
    /// `Phi(p + q)`; `Z(x) = e^{neg_exponent x}` on `(-inf, 0]`.
    pub neg_exponent: f64,
    pub q: f64,
    pub p: f64,
}

impl ParisianZ {
    pub fn build(model: &LevyModel, params: &ControlParams) -> Result<Self> {
        let (q, p) = (params.q, params.p);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain(format!("p must be > 0, got {p}")));
        }
        let w = ScaleW::build(model, q)?;
        let phi_pq = model.phi_unchecked(p + q);
        let terms = w
            .sum
            .terms()
            .iter()
            .map(|t| ExpTerm {
                coeff: p * t.coeff / (phi_pq - t.exponent),
                exponent: t.exponent,
            })
            .collect();
        Ok(ParisianZ {
            pos_part: ExpSum::new(terms)?,
            neg_exponent: phi_pq,
            q,
            p,
        })
    }

    /// `Z^{(deriv)}(x)`; at `x = 0` the right piece is used.
    pub fn eval(&self, x: f64, deriv: u32) -> f64 {
        if x < 0.0 {
            self.neg_exponent.powi(deriv as i32) * (self.neg_exponent * x).exp()
        } else {
            self.pos_part.eval(x, deriv)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.eval(x, 1)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.eval(x, 2)
    }

    /// `Phi(q)`, the growth rate of `Z` at `+inf`.
    pub fn growth_rate(&self) -> f64 {
        self.pos_part.max_exponent()
    }
}

pub fn build_z(model: &LevyModel, params: &ControlParams) -> Result<ParisianZ> {
    ParisianZ::build(model, params)
}

pub fn eval_z(z: &ParisianZ, x: f64, deriv: u32) -> Result<f64> {
    if deriv > 2 {
        return Err(Error::Domain(format!("deriv must be 0, 1 or 2, got {deriv}")));
    }
    Ok(z.eval(x, deriv))
}
