use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::output::{write_json, Cell, Csv};
use super::{CheckFailed, Outcome, Overrides};
use crate::error::{Error, Result};
use crate::levy::{ControlParams, ConvexityReport, LevyModel};
use crate::montecarlo::{self, McEstimate, Scheme, SimConfig, Termination};
use crate::policy::{self, OptimalSolution, Policy, ValueFunction};
use crate::scale::ParisianZ;
use crate::verify::{self, GapReport, SMOOTH_FIT_TOL};

struct Problem {
    model: LevyModel,
    params: ControlParams,
    z: ParisianZ,
}

impl Problem {
    fn from_config(cfg: &RunConfig) -> Result<Self> {
        let model = cfg.levy_model()?;
        let z = ParisianZ::build(&model, &cfg.params)?;
        Ok(Problem {
            model,
            params: cfg.params,
            z,
        })
    }

    fn solve(&self) -> Result<OptimalSolution> {
        policy::optimal_pair(&self.z, self.params.beta)
    }
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    #[serde(flatten)]
    solution: &'a OptimalSolution,
    phi_p_plus_q: f64,
    value_at_zero: f64,
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let prob = Problem::from_config(cfg)?;
    let sol = prob.solve()?;
    let v = sol.value_function();
    write_json(
        &out.join("solution.json"),
        &SolutionFile {
            solution: &sol,
            phi_p_plus_q: prob.z.neg_exponent,
            value_at_zero: v.value(0.0),
        },
    )?;
    let grid = &cfg.solve.grid;
    let hi = grid.x_max.unwrap_or(sol.b_star + 3.0);
    let mut csv = Csv::new(&["x", "v_star", "v_prime"]);
    for x in verify::linspace(grid.x_min, hi, grid.n) {
        csv.row(&[Cell::F(x), Cell::F(v.value(x)), Cell::F(v.deriv(x, 1))]);
    }
    csv.write(&out.join("value.csv"))?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct GapsFile {
    policy: Policy,
    overridden: bool,
    hjb_points: usize,
    /// Grid spacings; the checks cover these grids only, not almost every x.
    hjb_spacing_below: f64,
    hjb_spacing_above: f64,
    gap_spacing: f64,
    max_equality_violation: f64,
    min_slack: f64,
    quadrature_tol: f64,
    hjb_passes: bool,
    value_gap: GapReport,
    smooth_fit: f64,
    smooth_fit_passes: bool,
    convexity_passes: bool,
    passes: bool,
}

#[derive(Serialize)]
struct ConvexityFile {
    levy_tail: ConvexityReport,
    /// Smallest second difference of `ln Z'` on `(0, b + gap_span]`.
    log_z_prime_min_second_difference: f64,
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let prob = Problem::from_config(cfg)?;
    let vs = &cfg.verify;
    let (v, overridden) = match vs.policy_override {
        Some(pol) => (ValueFunction::for_policy(&prob.z, prob.params.beta, pol)?, true),
        None => (prob.solve()?.value_function(), false),
    };
    let hjb = verify::hjb_check(&prob.model, &prob.params, &v, &vs.hjb)?;
    let mut csv = Csv::new(&["x", "residual", "regime"]);
    for p in &hjb.points {
        csv.row(&[Cell::F(p.x), Cell::F(p.residual), Cell::S(p.regime.as_str())]);
    }
    csv.write(&out.join("hjb.csv"))?;

    let top = v.b + vs.gap_span;
    let grid = verify::linspace(0.0, top, vs.gap_n);
    let gap = verify::value_gap_check(&v, prob.params.beta, &grid, &grid)?;
    let smooth_fit = v.kink_at_b().abs();
    let smooth_fit_passes = smooth_fit <= SMOOTH_FIT_TOL;

    let tail = prob.model.check_log_convex_tail(vs.tail_x_max, vs.tail_n);
    let log_zp: Vec<f64> = verify::linspace(0.0, top, vs.tail_n)
        .iter()
        .skip(1)
        .map(|&x| prob.z.d1(x).ln())
        .collect();
    let log_z_prime_min_second_difference = log_zp
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::INFINITY, f64::min);
    write_json(
        &out.join("convexity.json"),
        &ConvexityFile {
            levy_tail: tail.clone(),
            log_z_prime_min_second_difference,
        },
    )?;

    let passes = hjb.passes && gap.passes && smooth_fit_passes && tail.passes;
    write_json(
        &out.join("gaps.json"),
        &GapsFile {
            policy: Policy::new(v.a, v.b),
            overridden,
            hjb_points: hjb.points.len(),
            hjb_spacing_below: (v.b - vs.hjb.lower) / vs.hjb.n_below.saturating_sub(1).max(1) as f64,
            hjb_spacing_above: vs.hjb.span_above / vs.hjb.n_above.max(1) as f64,
            gap_spacing: top / (vs.gap_n - 1) as f64,
            max_equality_violation: hjb.max_equality_violation,
            min_slack: hjb.min_slack,
            quadrature_tol: hjb.quadrature_tol,
            hjb_passes: hjb.passes,
            value_gap: gap,
            smooth_fit,
            smooth_fit_passes,
            convexity_passes: tail.passes,
            passes,
        },
    )?;
    if passes {
        Ok(Outcome::Pass)
    } else {
        let mut why = Vec::new();
        if !hjb.passes {
            why.push(format!(
                "hjb: equality violation {:e}, min slack {:e}",
                hjb.max_equality_violation, hjb.min_slack
            ));
        }
        if !gap.passes {
            why.push(format!("value gap: min {:e} at {:?}", gap.min_gap, gap.argmin));
        }
        if !smooth_fit_passes {
            why.push(format!("smooth fit: kink {smooth_fit:e} at b = {}", v.b));
        }
        if !tail.passes {
            why.push(format!("levy tail not log-convex: {:e}", tail.min_second_difference));
        }
        Ok(Outcome::Failed(CheckFailed(why.join("; "))))
    }
}

#[derive(Serialize)]
struct McEntry {
    x0: f64,
    analytic: f64,
    #[serde(flatten)]
    estimate: McEstimate,
    z_score: f64,
    passes: bool,
}

#[derive(Serialize)]
struct PassageEntry {
    x: f64,
    b: f64,
    analytic: f64,
    #[serde(flatten)]
    estimate: McEstimate,
    z_score: f64,
    passes: bool,
}

#[derive(Serialize)]
struct McFile {
    scheme: Scheme,
    dt: Option<f64>,
    n_paths: usize,
    seed: u64,
    horizon: f64,
    antithetic: bool,
    policy: Policy,
    beta: f64,
    analytic_beta: f64,
    z_max: f64,
    entries: Vec<McEntry>,
    first_passage: Vec<PassageEntry>,
    passes: bool,
}

pub fn sim_config(cfg: &RunConfig, model: &LevyModel, ov: &Overrides) -> Result<SimConfig> {
    let s = &cfg.simulate;
    let default_scheme = if model.sigma() == 0.0 && model.mu() > 0.0 {
        Scheme::ExactBv
    } else {
        Scheme::Euler
    };
    let sc = SimConfig {
        n_paths: ov.paths.unwrap_or(s.n_paths),
        master_seed: ov.seed.or(cfg.seed).unwrap_or(0),
        horizon: s.horizon,
        scheme: ov.scheme.or(s.scheme).unwrap_or(default_scheme),
        dt: ov.dt.unwrap_or(s.dt),
        antithetic: s.antithetic,
        workers: ov.workers,
    };
    sc.validate(model).map_err(|e| match e {
        Error::Config { key, message } => Error::Config {
            key: format!("simulate.{key}"),
            message,
        },
        other => other,
    })?;
    sc.horizon_for(cfg.params.q)
        .map_err(|e| Error::config("simulate.horizon", e.to_string()))?;
    Ok(sc)
}

pub fn simulate(cfg: &RunConfig, out: &Path, ov: &Overrides) -> Result<Outcome> {
    let prob = Problem::from_config(cfg)?;
    let s = &cfg.simulate;
    let sc = sim_config(cfg, &prob.model, ov)?;
    let pol = match s.policy {
        Some(p) => p,
        None => prob.solve()?.policy(),
    };
    let analytic_beta = s.analytic_beta.unwrap_or(prob.params.beta);
    let x0s = s
        .x0
        .clone()
        .unwrap_or_else(|| vec![-0.5, pol.a, 0.5 * (pol.a + pol.b), pol.b]);

    let mut entries = Vec::with_capacity(x0s.len());
    for (k, &x0) in x0s.iter().enumerate() {
        let analytic = policy::performance_ab(&prob.z, analytic_beta, pol, x0)?;
        let estimate = montecarlo::estimate_value(&prob.model, &prob.params, pol, x0, &sc)?;
        let z_score = estimate.z_score(analytic);
        entries.push(McEntry {
            x0,
            analytic,
            estimate,
            z_score,
            passes: z_score.abs() <= s.z_max,
        });
        if ov.write_paths {
            let term = Termination::Parisian { p: prob.params.p };
            let paths = montecarlo::simulate_paths(&prob.model, &prob.params, pol, x0, &sc, term)?;
            let mut csv = Csv::new(&["path_index", "payout", "ruined", "ruin_time", "truncated", "payments"]);
            for (i, p) in paths.iter().enumerate() {
                csv.row(&[
                    Cell::U(i as u64),
                    Cell::F(p.discounted_payout),
                    Cell::S(if p.ruined { "true" } else { "false" }),
                    p.ruin_time.map_or(Cell::S(""), Cell::F),
                    Cell::S(if p.truncated { "true" } else { "false" }),
                    Cell::U(p.payments as u64),
                ]);
            }
            csv.write(&out.join(format!("paths_{k}.csv")))?;
        }
    }

    let mut first_passage = Vec::with_capacity(s.first_passage.len());
    for fp in &s.first_passage {
        let analytic = prob.z.value(fp.x) / prob.z.value(fp.b);
        let estimate =
            montecarlo::estimate_first_passage(&prob.model, prob.params.q, prob.params.p, fp.x, fp.b, &sc)?;
        let z_score = estimate.z_score(analytic);
        first_passage.push(PassageEntry {
            x: fp.x,
            b: fp.b,
            analytic,
            estimate,
            z_score,
            passes: z_score.abs() <= s.z_max,
        });
    }

    let passes = entries.iter().all(|e| e.passes) && first_passage.iter().all(|e| e.passes);
    let worst = entries
        .iter()
        .map(|e| (e.x0, e.z_score))
        .chain(first_passage.iter().map(|e| (e.x, e.z_score)))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    write_json(
        &out.join("mc.json"),
        &McFile {
            scheme: sc.scheme,
            dt: (sc.scheme == Scheme::Euler).then_some(sc.dt),
            n_paths: sc.n_paths,
            seed: sc.master_seed,
            horizon: sc.horizon_for(prob.params.q)?,
            antithetic: sc.antithetic,
            policy: pol,
            beta: prob.params.beta,
            analytic_beta,
            z_max: s.z_max,
            entries,
            first_passage,
            passes,
        },
    )?;
    if passes {
        Ok(Outcome::Pass)
    } else {
        let (x, z) = worst.unwrap_or((f64::NAN, f64::NAN));
        Ok(Outcome::Failed(CheckFailed(format!(
            "monte carlo disagrees with the analytic value: z = {z:.3} at x = {x}"
        ))))
    }
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "missing `sweep` block"))?;
    let model = cfg.levy_model()?;
    let mut betas = sw.beta.clone();
    betas.sort_by(f64::total_cmp);
    let ps = sw.p.clone().unwrap_or_else(|| vec![cfg.params.p]);
    let qs = sw.q.clone().unwrap_or_else(|| vec![cfg.params.q]);

    let mut csv = Csv::new(&["beta", "p", "q", "a_star", "b_star", "c_star", "coeff", "status", "coeff_decreasing"]);
    let mut failures = 0usize;
    let mut violations = Vec::new();
    for &q in &qs {
        for &p in &ps {
            let mut prev: Option<f64> = None;
            for &beta in &betas {
                let params = ControlParams { q, p, beta };
                let res = ParisianZ::build(&model, &params).and_then(|z| policy::optimal_pair(&z, beta));
                match res {
                    Ok(sol) => {
                        let mono = match prev {
                            None => "",
                            Some(c) if sol.coeff < c => "true",
                            Some(_) => {
                                violations.push(format!("beta = {beta}, p = {p}, q = {q}"));
                                "false"
                            }
                        };
                        prev = Some(sol.coeff);
                        csv.row(&[
                            Cell::F(beta),
                            Cell::F(p),
                            Cell::F(q),
                            Cell::F(sol.a_star),
                            Cell::F(sol.b_star),
                            Cell::F(sol.c_star),
                            Cell::F(sol.coeff),
                            Cell::S("ok"),
                            Cell::S(mono),
                        ]);
                    }
                    Err(e) => {
                        failures += 1;
                        prev = None;
                        let status = format!("error: {e}");
                        csv.row(&[
                            Cell::F(beta),
                            Cell::F(p),
                            Cell::F(q),
                            Cell::F(f64::NAN),
                            Cell::F(f64::NAN),
                            Cell::F(f64::NAN),
                            Cell::F(f64::NAN),
                            Cell::S(&status),
                            Cell::S(""),
                        ]);
                    }
                }
            }
        }
    }
    csv.write(&out.join("sweep.csv"))?;
    if failures > 0 {
        return Err(Error::Solver(format!("{failures} sweep point(s) failed; see sweep.csv")));
    }
    if violations.is_empty() {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Failed(CheckFailed(format!(
            "coeff not decreasing in beta at {}",
            violations.join("; ")
        ))))
    }
}
