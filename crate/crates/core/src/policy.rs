//! `(a, b)` impulse strategies: performance, optimal band and value function.
//!
//! Under an `(a, b)` strategy the surplus is paid down to `a` whenever it
//! reaches `b`. Its performance is `Z(x) / g(a, b)` below `b`, where
//! `g(a, b) = (Z(b) - Z(a)) / (b - a - beta)`, so the optimal band minimises
//! `g`. At the minimiser either `Z'(a) = Z'(b)` or `a = 0`, and in both cases
//! `Z'(b) = g(a, b)`.
//!
//! The search reduces to one dimension. `Z'` decreases on `[0, c*]` and
//! increases afterwards, so every `b > c*` has a unique partner `a(b)` on
//! `[0, c*]` with `Z'(a(b)) = Z'(b)` (or `a(b) = 0` if `Z'(0) <= Z'(b)`), and
//! the optimal `b` is the unique zero of
//! `xi(b) = Z'(b) (b - a(b) - beta) - (Z(b) - Z(a(b)))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;
use crate::scale::ParisianZ;

const MAX_DOUBLINGS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub a: f64,
    pub b: f64,
}

impl Policy {
    pub fn new(a: f64, b: f64) -> Self {
        Policy { a, b }
    }

    pub fn check_admissible(&self, beta: f64) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::Domain("policy levels must be finite".into()));
        }
        if self.a < 0.0 {
            return Err(Error::Domain(format!("policy needs a >= 0, got a = {}", self.a)));
        }
        if self.b <= self.a + beta {
            return Err(Error::Domain(format!(
                "policy needs b > a + beta, got a = {}, b = {}, beta = {beta}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Net amount of each regular payment.
    pub fn net_payment(&self, beta: f64) -> f64 {
        self.b - self.a - beta
    }
}

/// `(Z(b) - Z(a)) / (b - a - beta)`.
pub fn g(z: &ParisianZ, beta: f64, a: f64, b: f64) -> Result<f64> {
    Policy::new(a, b).check_admissible(beta)?;
    Ok(g_unchecked(z, beta, a, b))
}

fn g_unchecked(z: &ParisianZ, beta: f64, a: f64, b: f64) -> f64 {
    (z.value(b) - z.value(a)) / (b - a - beta)
}

/// Performance of the `(a, b)` strategy started at `x`.
pub fn performance_ab(z: &ParisianZ, beta: f64, pol: Policy, x: f64) -> Result<f64> {
    pol.check_admissible(beta)?;
    let coeff = 1.0 / g_unchecked(z, beta, pol.a, pol.b);
    Ok(if x <= pol.b {
        coeff * z.value(x)
    } else {
        x - pol.a - beta + coeff * z.value(pol.a)
    })
}

/// Rightmost global minimiser of `Z'` on `[0, inf)`.
///
/// `search_hi` is doubled until `Z'(search_hi) > Z'(0)`.
pub fn c_star(z: &ParisianZ, search_hi: f64) -> f64 {
    if z.d2(0.0) >= 0.0 {
        // Z' is convex on (0, inf), so it is nondecreasing from 0.
        return 0.0;
    }
    let d0 = z.d1(0.0);
    let mut hi = if search_hi > 0.0 { search_hi } else { 1.0 };
    let mut doublings = 0;
    while z.d1(hi) <= d0 && doublings < 200 {
        hi *= 2.0;
        doublings += 1;
    }
    const N: usize = 512;
    let step = hi / N as f64;
    let mut k_min = 0;
    let mut v_min = d0;
    for k in 1..=N {
        let v = z.d1(k as f64 * step);
        if v <= v_min {
            v_min = v;
            k_min = k;
        }
    }
    let lo = (k_min.saturating_sub(1)) as f64 * step;
    let up = ((k_min + 1).min(N)) as f64 * step;
    let f2 = |x: f64| z.d2(x);
    if f2(lo) < 0.0 && f2(up) > 0.0 {
        if let Ok(c) = roots::brent(f2, lo, up, 1e-14 * up.max(1.0), 200) {
            return c;
        }
    }
    golden_section_min(|x| z.d1(x), lo, up, 1e-10)
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        // `<` keeps the right candidate on ties.
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Initial right end for the `c*` grid search.
    pub search_hi: f64,
    /// First trial width above the lower bracket end when bracketing `b*`,
    /// in units of `beta`.
    pub initial_span: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            search_hi: 10.0,
            initial_span: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `|Z'(b*) - g(a*, b*)| / Z'(b*)`.
    pub identity: f64,
    /// `|Z'(a*) - Z'(b*)| / Z'(b*)`; zero in the boundary case.
    pub stationarity: f64,
    /// `|xi(b*)| / Z(b*)`.
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalSolution {
    pub a_star: f64,
    pub b_star: f64,
    pub c_star: f64,
    /// `1 / Z'(b*)`.
    pub coeff: f64,
    /// `a* = 0`.
    pub boundary_case: bool,
    /// `a* <= c*` held.
    pub ordering_ok: bool,
    pub beta: f64,
    pub residuals: Residuals,
    #[serde(skip)]
    pub z: ParisianZ,
}

impl OptimalSolution {
    pub fn policy(&self) -> Policy {
        Policy::new(self.a_star, self.b_star)
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction::optimal(self)
    }
}

pub fn optimal_pair(z: &ParisianZ, beta: f64) -> Result<OptimalSolution> {
    optimal_pair_with(z, beta, &SolverOptions::default())
}

pub fn optimal_pair_with(z: &ParisianZ, beta: f64, opts: &SolverOptions) -> Result<OptimalSolution> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let c = c_star(z, opts.search_hi);
    let d0 = z.d1(0.0);
    let partner = |b: f64| -> f64 {
        let target = z.d1(b);
        if d0 <= target || c == 0.0 {
            return 0.0;
        }
        roots::brent(|a| z.d1(a) - target, 0.0, c, 1e-15 * c.max(1.0), 200).unwrap_or(0.0)
    };
    let xi = |b: f64| -> f64 {
        let a = partner(b);
        z.d1(b) * (b - a - beta) - (z.value(b) - z.value(a))
    };

    // Smallest admissible b: b - a(b) = beta, somewhere in (c*, c* + beta].
    let b_lo = roots::brent(|b| b - partner(b) - beta, c, c + beta, 1e-15 * (c + beta), 200)?;
    let xi_lo = xi(b_lo);
    if !(xi_lo < 0.0) {
        return Err(Error::Solver(format!(
            "xi is not negative at the admissibility edge b = {b_lo} (xi = {xi_lo})"
        )));
    }
    let mut width = beta * opts.initial_span.max(1e-6);
    let mut b_hi = b_lo + width;
    let mut n = 0;
    while xi(b_hi) <= 0.0 {
        n += 1;
        if n > MAX_DOUBLINGS {
            let profile: Vec<String> = (0..6)
                .map(|k| {
                    let b = b_lo + beta * 2f64.powi(2 * k);
                    format!("g({:.4}, {:.4}) = {:.6e}", partner(b), b, g_unchecked(z, beta, partner(b), b))
                })
                .collect();
            return Err(Error::Solver(format!(
                "could not bracket b* after {MAX_DOUBLINGS} doublings; g profile: {}",
                profile.join(", ")
            )));
        }
        width *= 2.0;
        b_hi = b_lo + width;
    }
    let b_star = roots::brent(xi, b_lo, b_hi, 1e-15 * b_hi.max(1.0), 500)?;
    let a_star = partner(b_star);
    let slope = z.d1(b_star);
    let g_star = g_unchecked(z, beta, a_star, b_star);
    let boundary_case = a_star == 0.0;
    let residuals = Residuals {
        identity: (slope - g_star).abs() / slope,
        stationarity: if boundary_case {
            0.0
        } else {
            (z.d1(a_star) - slope).abs() / slope
        },
        xi: xi(b_star).abs() / z.value(b_star),
    };
    Ok(OptimalSolution {
        a_star,
        b_star,
        c_star: c,
        coeff: 1.0 / slope,
        boundary_case,
        ordering_ok: a_star <= c && c < b_star,
        beta,
        residuals,
        z: z.clone(),
    })
}

/// Value of a single-band strategy as a piecewise function of the start.
///
/// Below `b` it is `coeff * Z(x)`; above, it grows with slope one from
/// `level_at_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub z: ParisianZ,
    pub a: f64,
    pub b: f64,
    pub coeff: f64,
    pub level_at_b: f64,
}

impl ValueFunction {
    /// Optimal value: `Z(x)/Z'(b*)` below `b*`, `x - b* + Z(b*)/Z'(b*)` above.
    pub fn optimal(sol: &OptimalSolution) -> Self {
        ValueFunction {
            z: sol.z.clone(),
            a: sol.a_star,
            b: sol.b_star,
            coeff: sol.coeff,
            level_at_b: sol.coeff * sol.z.value(sol.b_star),
        }
    }

    /// Performance of an arbitrary admissible pair, upper branch written as
    /// `x - a - beta + Z(a) / g(a, b)`.
    pub fn for_policy(z: &ParisianZ, beta: f64, pol: Policy) -> Result<Self> {
        pol.check_admissible(beta)?;
        let coeff = 1.0 / g_unchecked(z, beta, pol.a, pol.b);
        Ok(ValueFunction {
            z: z.clone(),
            a: pol.a,
            b: pol.b,
            coeff,
            level_at_b: pol.b - pol.a - beta + coeff * z.value(pol.a),
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.b {
            self.coeff * self.z.value(x)
        } else {
            x - self.b + self.level_at_b
        }
    }

    /// Derivative of order 1 or 2; the left piece is used at `b`, the right
    /// piece of `Z` at 0.
    pub fn deriv(&self, x: f64, order: u32) -> f64 {
        if x <= self.b {
            self.coeff * self.z.eval(x, order)
        } else if order == 1 {
            1.0
        } else {
            0.0
        }
    }

    /// `|v'(b-) - v'(b+)|`.
    pub fn kink_at_b(&self) -> f64 {
        (self.coeff * self.z.d1(self.b) - 1.0).abs()
    }

    /// Points where the function is not twice continuously differentiable.
    pub fn breakpoints(&self) -> [f64; 2] {
        [0.0, self.b]
    }
}

pub fn value_function(sol: &OptimalSolution, x: f64) -> f64 {
    ValueFunction::optimal(sol).value(x)
}
