#![allow(dead_code)]

use parisian_dividends::levy::{ControlParams, LevyModel};
use parisian_dividends::policy::{optimal_pair, OptimalSolution};
use parisian_dividends::scale::ParisianZ;

pub fn m_cl() -> LevyModel {
    LevyModel::cramer_lundberg(1.0, 0.5, 1.0).unwrap()
}

pub fn m_bm() -> LevyModel {
    LevyModel::brownian(0.0, 2f64.sqrt()).unwrap()
}

pub fn drifted_bm() -> LevyModel {
    LevyModel::brownian(1.0, 1.0).unwrap()
}

/// Brownian motion plus two-phase hyperexponential jumps.
pub fn jump_diffusion() -> LevyModel {
    LevyModel::new(1.0, 0.5, 1.0, vec![0.5, 0.5], vec![1.0, 3.0]).unwrap()
}

/// Compound Poisson with two-phase hyperexponential jumps.
pub fn hyper_cl() -> LevyModel {
    LevyModel::new(1.5, 0.0, 1.0, vec![0.3, 0.7], vec![0.8, 2.5]).unwrap()
}

pub fn all_models() -> Vec<(&'static str, LevyModel)> {
    vec![
        ("m_cl", m_cl()),
        ("m_bm", m_bm()),
        ("drifted_bm", drifted_bm()),
        ("jump_diffusion", jump_diffusion()),
        ("hyper_cl", hyper_cl()),
    ]
}

pub fn base_params() -> ControlParams {
    ControlParams::new(0.1, 0.5, 0.2).unwrap()
}

pub fn z_for(model: &LevyModel, params: &ControlParams) -> ParisianZ {
    ParisianZ::build(model, params).unwrap()
}

pub fn solve(model: &LevyModel, params: &ControlParams) -> OptimalSolution {
    optimal_pair(&z_for(model, params), params.beta).unwrap()
}

/// Instances with `a* > 0`.
pub fn interior_instances() -> Vec<(&'static str, LevyModel, ControlParams)> {
    vec![
        ("m_cl_low_rates", m_cl(), ControlParams::new(0.04, 0.1, 0.2).unwrap()),
        ("drifted_bm", drifted_bm(), base_params()),
        ("jump_diffusion", jump_diffusion(), base_params()),
        ("hyper_cl", hyper_cl(), base_params()),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Composite double-exponential quadrature on unit panels of `[lo, hi]`.
pub fn panel_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = ((hi - lo).ceil() as usize).max(1);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|k| {
            let a = lo + k as f64 * h;
            quadrature::double_exponential::integrate(&f, a, a + h, 1e-14).integral
        })
        .sum()
}
