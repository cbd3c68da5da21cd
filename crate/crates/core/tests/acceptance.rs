//! Acceptance suite. Each test prints one PASS/FAIL line.

mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use parisian_dividends::levy::ControlParams;
use parisian_dividends::montecarlo::{compare_policies, estimate_first_passage, estimate_value, SimConfig};
use parisian_dividends::policy::{g, optimal_pair, performance_ab, Policy, ValueFunction};
use parisian_dividends::scale::build_w;
use parisian_dividends::verify::{hjb_check, linspace, smooth_fit_check, value_gap_check, HjbGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, title: &str, ok: bool, detail: String, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    let ok = ok && elapsed <= budget;
    // Written to the handle directly so the line survives test output capture.
    let _ = writeln!(
        std::io::stdout().lock(),
        "criterion {id} {}: {title}: {detail} ({:.2}s, budget {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rate_pairs() -> [ControlParams; 3] {
    [
        ControlParams::new(0.1, 0.5, 0.2).unwrap(),
        ControlParams::new(0.04, 0.1, 0.2).unwrap(),
        ControlParams::new(0.3, 2.0, 0.2).unwrap(),
    ]
}

#[test]
fn criterion_1_z_identities() {
    let t = Instant::now();
    let (mut at_zero, mut negative) = (0.0f64, 0.0f64);
    for (_, m) in all_models() {
        for params in rate_pairs() {
            let z = z_for(&m, &params);
            let phi = m.phi(params.p + params.q).unwrap();
            at_zero = at_zero.max((z.value(0.0) - 1.0).abs());
            for x in linspace(-10.0, 0.0, 101) {
                negative = negative.max((z.value(x) - (phi * x).exp()).abs());
            }
        }
    }
    report(
        1,
        "Z(0) = 1 and Z = exp(Phi(p+q) x) for x <= 0",
        at_zero <= 1e-10 && negative <= 1e-12,
        format!("max |Z(0) - 1| = {at_zero:.2e}, max negative-side error = {negative:.2e}"),
        t,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_2_laplace_round_trip() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (_, m) in all_models() {
        for q in [0.04, 0.1, 0.3] {
            let w = build_w(&m, q).unwrap();
            for k in 1..=5 {
                let theta = w.phi_q() + 0.25 * k as f64;
                worst = worst.max(rel_err(w.sum.laplace(theta), 1.0 / (m.psi(theta) - q)));
            }
        }
    }
    report(
        2,
        "Laplace transform of W equals 1/(psi - q)",
        worst <= 1e-10,
        format!("max relative error = {worst:.2e}"),
        t,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_3_quadrature_cross_check() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (_, m) in all_models() {
        let params = base_params();
        let z = z_for(&m, &params);
        let w = build_w(&m, params.q).unwrap();
        let phi_pq = m.phi(params.p + params.q).unwrap();
        for x in [-1.0, 0.0, 0.7, 3.0] {
            let f = |y: f64| (-phi_pq * y).exp() * w.eval(x + y, 0);
            let lo = (-x).max(0.0);
            let peak = (0..2000).map(|k| f(lo + 0.05 * k as f64)).fold(0.0, f64::max);
            let mut hi = lo + 1.0;
            while f(hi) >= 1e-16 * peak {
                hi += 1.0;
            }
            let quad = params.p * panel_integral(f, lo, hi);
            worst = worst.max(rel_err(z.value(x), quad));
        }
    }
    report(
        3,
        "Z against its defining integral",
        worst <= 1e-8,
        format!("max relative error = {worst:.2e}"),
        t,
        Duration::from_secs(5),
    );
}

fn grid_argmin(z: &parisian_dividends::ParisianZ, beta: f64, a: (f64, f64), b: (f64, f64), h: f64) -> (f64, f64) {
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    let na = ((a.1 - a.0) / h).round() as usize;
    let nb = ((b.1 - b.0) / h).round() as usize;
    for i in 0..=na {
        let x = (a.0 + i as f64 * h).max(0.0);
        let zx = z.value(x);
        for j in 0..=nb {
            let y = b.0 + j as f64 * h;
            let den = y - x - beta;
            if den > h * 1e-3 {
                let v = (z.value(y) - zx) / den;
                if v < best.2 {
                    best = (x, y, v);
                }
            }
        }
    }
    (best.0, best.1)
}

#[test]
fn criterion_4_optimality_conditions() {
    let t = Instant::now();
    let mut cases = interior_instances();
    cases.push(("m_cl", m_cl(), base_params()));
    let (mut identity, mut stationarity) = (0.0f64, 0.0f64);
    let mut interior = 0;
    for (_, m, params) in &cases {
        let z = z_for(m, params);
        let sol = optimal_pair(&z, params.beta).unwrap();
        let zb = z.d1(sol.b_star);
        identity = identity.max(rel_err(g(&z, params.beta, sol.a_star, sol.b_star).unwrap(), zb));
        if !sol.boundary_case {
            interior += 1;
            stationarity = stationarity.max(rel_err(z.d1(sol.a_star), zb));
        }
    }
    let z = z_for(&m_cl(), &base_params());
    let sol = optimal_pair(&z, 0.2).unwrap();
    let (a, b) = grid_argmin(&z, 0.2, (0.0, 4.0), (0.0, 8.0), 1e-3);
    let (a, b) = grid_argmin(&z, 0.2, ((a - 2e-3).max(0.0), a + 2e-3), (b - 2e-3, b + 2e-3), 1e-5);
    let da = (a - sol.a_star).abs();
    let db = (b - sol.b_star).abs();
    report(
        4,
        "optimality conditions and brute-force grid",
        identity <= 1e-9 && stationarity <= 1e-9 && interior > 0 && da <= 1e-3 && db <= 1e-3,
        format!(
            "identity {identity:.2e}, stationarity {stationarity:.2e} over {interior} interior cases, \
             grid gap (|da|, |db|) = ({da:.1e}, {db:.1e})"
        ),
        t,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_5_verification_hypotheses() {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, m, params) in [
        ("m_cl", m_cl(), base_params()),
        ("jump_diffusion", jump_diffusion(), base_params()),
    ] {
        let z = z_for(&m, &params);
        let sol = optimal_pair(&z, params.beta).unwrap();
        let v = sol.value_function();
        let hjb = hjb_check(&m, &params, &v, &HjbGrid::default()).unwrap();
        let below = hjb.points.iter().filter(|p| p.x < sol.b_star).count();
        let max_above = hjb
            .points
            .iter()
            .filter(|p| p.x > sol.b_star)
            .map(|p| p.residual)
            .fold(f64::NEG_INFINITY, f64::max);
        let grid = linspace(0.0, sol.b_star + 3.0, 300);
        let gap = value_gap_check(&v, params.beta, &grid, &grid).unwrap();
        let fit = smooth_fit_check(&sol);
        let kink = ValueFunction::for_policy(&z, params.beta, Policy::new(sol.a_star, sol.b_star + 0.5))
            .unwrap()
            .kink_at_b()
            .abs();
        ok &= below == 200
            && hjb.max_equality_violation <= 1e-6
            && max_above <= 1e-8
            && gap.min_gap >= -1e-9
            && fit <= 1e-10
            && kink > 1e-4;
        lines.push(format!(
            "{name}: eq {:.1e}, max residual above {max_above:.1e}, gap {:.1e}, fit {fit:.1e}, kink {kink:.1e}",
            hjb.max_equality_violation, gap.min_gap
        ));
    }
    report(
        5,
        "HJB, value gap and smooth fit",
        ok,
        lines.join("; "),
        t,
        Duration::from_secs(120),
    );
}

fn mc_config(n_paths: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_paths,
        master_seed: seed,
        ..SimConfig::default()
    }
}

#[test]
fn criterion_6_monte_carlo_vs_closed_form() {
    let t = Instant::now();
    let m = m_cl();
    let params = base_params();
    let z = z_for(&m, &params);
    let sol = optimal_pair(&z, params.beta).unwrap();
    let pol = sol.policy();
    let cfg = mc_config(200_000, 2026);
    let mut zs = Vec::new();
    for x0 in [-0.5, sol.a_star, 0.5 * (sol.a_star + sol.b_star), sol.b_star] {
        let est = estimate_value(&m, &params, pol, x0, &cfg).unwrap();
        zs.push((x0, est.z_score(performance_ab(&z, params.beta, pol, x0).unwrap())));
    }
    for x in [0.5, -1.0] {
        let est = estimate_first_passage(&m, params.q, params.p, x, 2.0, &cfg).unwrap();
        zs.push((x, est.z_score(z.value(x) / z.value(2.0))));
    }
    let worst = zs.iter().map(|(_, z)| z.abs()).fold(0.0, f64::max);
    let detail = zs
        .iter()
        .map(|(x, z)| format!("{x:.3}: {z:+.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        6,
        "Monte Carlo against closed forms (z-scores)",
        worst <= 3.0,
        format!("value at 4 starts then passage at 2 starts: {detail}"),
        t,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_7_dominance() {
    let t = Instant::now();
    let m = m_cl();
    let params = base_params();
    let z = z_for(&m, &params);
    let sol = optimal_pair(&z, params.beta).unwrap();
    let (a, b) = (sol.a_star, sol.b_star);
    let perturbed = [
        Policy::new(a, b + 0.3),
        Policy::new(a, b - 0.3),
        Policy::new(a + 0.2, b),
        Policy::new(a + 0.2, b + 0.4),
        Policy::new(a + 0.5, b + 1.0),
    ];
    let (_, cmp) = compare_policies(&m, &params, sol.policy(), &perturbed, 0.5 * b, &mc_config(100_000, 7)).unwrap();
    let worst_mc = cmp
        .iter()
        .map(|c| c.difference.mean / c.difference.std_error)
        .fold(f64::INFINITY, f64::min);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs = linspace(-2.0, b + 5.0, 80);
    let mut worst_analytic = f64::INFINITY;
    for _ in 0..100 {
        let lo = rng.random_range(0.0..4.0);
        let pol = Policy::new(lo, lo + params.beta + rng.random_range(0.01..5.0));
        for &x in &xs {
            let d = performance_ab(&z, params.beta, sol.policy(), x).unwrap()
                - performance_ab(&z, params.beta, pol, x).unwrap();
            worst_analytic = worst_analytic.min(d);
        }
    }
    report(
        7,
        "optimal pair dominates perturbed and random pairs",
        worst_mc >= -3.0 && worst_analytic >= -1e-12,
        format!("min paired z over 5 pairs = {worst_mc:+.2}, min analytic margin over 100 pairs = {worst_analytic:.2e}"),
        t,
        Duration::from_secs(180),
    );
}

fn run_cli(cmd: &str, config: &Path, out: &Path, workers: &str) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_parisian-dividends"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--workers", workers])
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn criterion_8_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("m_cl.json");
    fs::write(
        &config,
        r#"{
  "model": {"mu": 1.0, "sigma": 0.0, "lambda": 0.5, "weights": [1.0], "alphas": [1.0]},
  "params": {"q": 0.1, "p": 0.5, "beta": 0.2},
  "seed": 42
}"#,
    )
    .unwrap();
    let mut snapshots = Vec::new();
    let mut codes = Vec::new();
    for (k, workers) in ["1", "1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        codes.push(run_cli("solve", &config, &out, workers));
        codes.push(run_cli("simulate", &config, &out, workers));
        let bytes: Vec<Vec<u8>> = ["solution.json", "value.csv", "mc.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap_or_default())
            .collect();
        snapshots.push(bytes);
    }
    let identical = snapshots.windows(2).all(|w| w[0] == w[1]);
    // simulate's exit code reflects its own 3-sigma check; here it only has to be reproducible.
    let solve_ok = codes.iter().step_by(2).all(|&c| c == 0);
    let simulate_stable = codes.iter().skip(1).step_by(2).all(|&c| c == codes[1] && (c == 0 || c == 3));
    report(
        8,
        "byte-identical artifacts across reruns and workers {1, 4}",
        identical && solve_ok && simulate_stable,
        format!("exit codes {codes:?}, identical = {identical}"),
        t,
        Duration::from_secs(180),
    );
}
