//! Spectrally negative Lévy processes with hyperexponential jumps.
//!
//! The process is `X_t = mu t + sigma B_t - sum_{k <= N_t} Y_k`, with `N` a
//! Poisson process of rate `jump_rate` and jump sizes `Y_k` drawn from the
//! mixture density `f(z) = sum_i w_i alpha_i exp(-alpha_i z)`.
//!
//! Since the Lévy measure has finite mean, the Laplace exponent is written
//! without the truncated compensator:
//!
//! ```text
//! psi(theta) = mu theta + sigma^2 theta^2 / 2 + lambda sum_i w_i (alpha_i / (alpha_i + theta) - 1)
//! ```
//!
//! The usual truncated-compensator drift is
//! `gamma = mu - lambda sum_i w_i (1 - (1 + alpha_i) e^{-alpha_i}) / alpha_i`,
//! i.e. `mu = gamma + int_0^1 z nu(dz)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyModelSpec", into = "LevyModelSpec")]
pub struct LevyModel {
    mu: f64,
    sigma: f64,
    jump_rate: f64,
    jump_weights: Vec<f64>,
    jump_rates: Vec<f64>,
}

/// Wire form of [`LevyModel`], as found under `"model"` in run configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModelSpec {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
}

impl TryFrom<LevyModelSpec> for LevyModel {
    type Error = Error;

    fn try_from(s: LevyModelSpec) -> Result<Self> {
        LevyModel::new(s.mu, s.sigma, s.lambda, s.weights, s.alphas)
    }
}

impl From<LevyModel> for LevyModelSpec {
    fn from(m: LevyModel) -> Self {
        LevyModelSpec {
            mu: m.mu,
            sigma: m.sigma,
            lambda: m.jump_rate,
            weights: m.jump_weights,
            alphas: m.jump_rates,
        }
    }
}

impl LevyModel {
    pub fn new(
        mu: f64,
        sigma: f64,
        jump_rate: f64,
        jump_weights: Vec<f64>,
        jump_rates: Vec<f64>,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        if !mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return bad("sigma must be finite and >= 0");
        }
        if !(jump_rate.is_finite() && jump_rate >= 0.0) {
            return bad("lambda (jump rate) must be finite and >= 0");
        }
        if jump_weights.len() != jump_rates.len() {
            return bad("weights and alphas must have the same length");
        }
        if jump_rate > 0.0 && jump_rates.is_empty() {
            return bad("alphas must be non-empty when lambda > 0");
        }
        if jump_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("weights must be positive");
        }
        if !jump_weights.is_empty() {
            let total: f64 = jump_weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return bad("weights must sum to 1");
            }
        }
        if jump_rates.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return bad("alphas must be positive");
        }
        if jump_rates.windows(2).any(|w| w[1] <= w[0]) {
            return bad("alphas must be strictly increasing");
        }
        if sigma == 0.0 && mu <= 0.0 {
            return bad("sigma = 0 requires mu > 0 (otherwise the process is monotone)");
        }
        let (jump_weights, jump_rates) = if jump_rate == 0.0 {
            (Vec::new(), Vec::new())
        } else {
            (jump_weights, jump_rates)
        };
        Ok(LevyModel {
            mu,
            sigma,
            jump_rate,
            jump_weights,
            jump_rates,
        })
    }

    /// Brownian motion with drift, no jumps.
    pub fn brownian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(mu, sigma, 0.0, Vec::new(), Vec::new())
    }

    /// Cramér–Lundberg: premium rate `mu`, exponential claims of rate `alpha`.
    pub fn cramer_lundberg(mu: f64, jump_rate: f64, alpha: f64) -> Result<Self> {
        Self::new(mu, 0.0, jump_rate, vec![1.0], vec![alpha])
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn jump_weights(&self) -> &[f64] {
        &self.jump_weights
    }

    pub fn jump_rates(&self) -> &[f64] {
        &self.jump_rates
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_rate > 0.0
    }

    /// Bounded variation iff there is no Gaussian part.
    pub fn is_bounded_variation(&self) -> bool {
        self.sigma == 0.0
    }

    /// Components `(lambda * w_i, alpha_i)`.
    pub fn jump_components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jump_weights
            .iter()
            .zip(&self.jump_rates)
            .map(move |(w, a)| (self.jump_rate * w, *a))
    }

    /// Smallest exponential rate, which governs the heaviest jump tail.
    pub fn min_jump_rate(&self) -> Option<f64> {
        self.jump_rates.first().copied()
    }

    /// `psi(theta)` for any real `theta` above the rightmost pole `-alpha_1`
    /// or between poles. No validation.
    pub fn psi(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .jump_components()
            .map(|(lw, a)| lw * (a / (a + theta) - 1.0))
            .sum();
        self.mu * theta + 0.5 * self.sigma * self.sigma * theta * theta + jumps
    }

    pub fn psi_prime(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .jump_components()
            .map(|(lw, a)| {
                let d = a + theta;
                lw * a / (d * d)
            })
            .sum();
        self.mu + self.sigma * self.sigma * theta - jumps
    }

    /// `psi'(0+) = mu - lambda E[Y]`, the mean drift of the process.
    pub fn mean_drift(&self) -> f64 {
        self.psi_prime(0.0)
    }

    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        check_nonneg("theta", theta)?;
        Ok(self.psi(theta))
    }

    pub fn laplace_exponent_derivative(&self, theta: f64) -> Result<f64> {
        check_nonneg("theta", theta)?;
        Ok(self.psi_prime(theta))
    }

    /// Right inverse of the Laplace exponent: the largest `theta >= 0` with
    /// `psi(theta) = r`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        check_nonneg("r", r)?;
        Ok(self.phi_unchecked(r))
    }

    pub(crate) fn phi_unchecked(&self, r: f64) -> f64 {
        let drift0 = self.mean_drift();
        if r == 0.0 && drift0 >= 0.0 {
            return 0.0;
        }
        // Left end of the increasing branch of psi on [0, inf).
        let theta_min = if drift0 >= 0.0 {
            0.0
        } else {
            let mut hi = 1.0;
            while self.psi_prime(hi) <= 0.0 {
                hi *= 2.0;
            }
            roots::bisect_signed(|t| self.psi_prime(t), 0.0, hi, -1.0, 1e-15)
        };
        // The jump part of psi is non-positive on [0, inf), so the root of the
        // Gaussian-with-drift part is a lower bound.
        let s2 = self.sigma * self.sigma;
        let gauss_root = if s2 > 0.0 {
            (-self.mu + (self.mu * self.mu + 2.0 * s2 * r).sqrt()) / s2
        } else {
            r / self.mu
        };
        let lo = theta_min.max(gauss_root).max(0.0);
        let mut hi = lo.max(1.0);
        while self.psi(hi) <= r {
            hi *= 2.0;
        }
        let tol = 1e-12 * r.max(1.0);
        let mut lo = lo;
        // Newton from the right of the root is monotone for a convex increasing
        // function; bisection guards the rounding regime.
        let mut x = hi;
        for _ in 0..200 {
            let fx = self.psi(x) - r;
            if fx.abs() <= 0.25 * tol {
                break;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = x - fx / self.psi_prime(x);
            x = if step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        roots::newton_polish(
            |t| self.psi(t) - r,
            |t| self.psi_prime(t),
            x,
            theta_min,
            f64::INFINITY,
            3,
        )
    }

    /// Tail of the Lévy measure, `nu((x, inf)) = lambda sum_i w_i e^{-alpha_i x}`.
    pub fn levy_tail(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::Domain(format!("levy_tail needs x > 0, got {x}")));
        }
        Ok(self
            .jump_components()
            .map(|(lw, a)| lw * (-a * x).exp())
            .sum())
    }

    fn ln_levy_tail(&self, x: f64) -> f64 {
        let logs: Vec<f64> = self
            .jump_components()
            .map(|(lw, a)| lw.ln() - a * x)
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }

    /// Discrete log-convexity test of the Lévy tail on `n_grid` uniform points
    /// of `(0, x_max]`.
    pub fn check_log_convex_tail(&self, x_max: f64, n_grid: usize) -> ConvexityReport {
        if !self.has_jumps() {
            return ConvexityReport {
                passes: true,
                vacuous: true,
                min_second_difference: 0.0,
                x_max,
                n_grid,
            };
        }
        let n = n_grid.max(3);
        let h = x_max / n as f64;
        let logs: Vec<f64> = (1..=n).map(|k| self.ln_levy_tail(k as f64 * h)).collect();
        let min_second_difference = logs
            .windows(3)
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .fold(f64::INFINITY, f64::min);
        ConvexityReport {
            passes: min_second_difference >= -1e-9,
            vacuous: false,
            min_second_difference,
            x_max,
            n_grid: n,
        }
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite, got {v}")));
    }
    if v < 0.0 {
        return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub passes: bool,
    /// No jumps: the tail is identically zero.
    pub vacuous: bool,
    pub min_second_difference: f64,
    pub x_max: f64,
    pub n_grid: usize,
}

/// Discount rate `q`, Parisian rate `p`, fixed transaction cost `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub q: f64,
    pub p: f64,
    pub beta: f64,
}

impl ControlParams {
    pub fn new(q: f64, p: f64, beta: f64) -> Result<Self> {
        let c = ControlParams { q, p, beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(Error::config("params.q", "q must be >= 0"));
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::config("params.p", "p must be > 0"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("params.beta", "beta must be > 0"));
        }
        Ok(())
    }
}
