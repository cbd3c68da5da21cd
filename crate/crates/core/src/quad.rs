//! Adaptive quadrature on finite panels.
//!
//! Each panel is integrated with the double-exponential rule from the
//! `quadrature` crate; panels whose error estimate misses the target are
//! bisected. Callers pass the integrand's known kinks as breakpoints so that
//! every panel sees a smooth function.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
}

/// `int_a^b f` to relative tolerance `rtol`, measured against `int_a^b |f|`.
///
/// `breakpoints` outside `(a, b)` are ignored.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], rtol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| *x > lo && *x < hi)
        .collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    inner.dedup();
    cuts.extend(inner);
    cuts.push(hi);

    // Loose pass for the magnitude of the integrand.
    let scale: f64 = cuts
        .windows(2)
        .map(|w| quadrature::integrate(|x| f(x).abs(), w[0], w[1], 1e-6).integral)
        .sum();
    let target = rtol * scale.max(f64::MIN_POSITIVE);

    let width = hi - lo;
    let mut value = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let share = target * (w[1] - w[0]) / width;
        let (v, e) = panel(&f, w[0], w[1], share, 0);
        value += v;
        err += e;
    }
    if err > target && err > 4.0 * f64::EPSILON * scale {
        return Err(Error::Quadrature {
            requested: rtol,
            achieved: err / scale.max(f64::MIN_POSITIVE),
        });
    }
    Ok(QuadResult {
        value: sign * value,
        error_estimate: err,
    })
}

fn panel<F>(f: &F, a: f64, b: f64, target: f64, depth: u32) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let out = quadrature::integrate(f, a, b, target);
    if out.error_estimate <= target || depth >= MAX_DEPTH {
        return (out.integral, out.error_estimate);
    }
    let m = 0.5 * (a + b);
    let (v1, e1) = panel(f, a, m, 0.5 * target, depth + 1);
    let (v2, e2) = panel(f, m, b, 0.5 * target, depth + 1);
    (v1 + v2, e1 + e2)
}

/// `int_0^inf f` for an integrand bounded by `C e^{-rate z}`, truncated where
/// that envelope drops below `cutoff` of its value at zero.
pub fn integrate_decaying<F>(
    f: F,
    rate: f64,
    cutoff: f64,
    breakpoints: &[f64],
    rtol: f64,
) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    let z_max = -cutoff.ln() / rate;
    // Geometric panels keep the rule's nodes where the mass is.
    let mut bps: Vec<f64> = breakpoints.to_vec();
    let mut edge = 1.0 / rate;
    while edge < z_max {
        bps.push(edge);
        edge *= 2.0;
    }
    integrate(f, 0.0, z_max, &bps, rtol)
}
