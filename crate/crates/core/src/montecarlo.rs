//! Monte Carlo simulation of the controlled surplus with Parisian ruin.
//!
//! Each path owns three ChaCha8 streams derived from `(master_seed, path)`:
//! jump epochs and sizes, Brownian increments, and the exponential clocks
//! attached to excursions below zero. The driving noise therefore does not
//! depend on the policy, so two policies simulated with the same seeds see
//! common random numbers. Paths are aggregated in index order, which makes
//! every estimate bit-identical for any number of worker threads.
//!
//! Two schemes are available. `ExactBv` applies to `sigma = 0`: between jumps
//! the path is linear, so barrier hits, excursion starts and recoveries are
//! solved in closed form. `Euler` steps a fixed `dt` and locates crossings
//! by linear interpolation inside a step; it misses excursions that start
//! and end within one step, which biases the ruin rate down by `O(dt)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{ControlParams, LevyModel};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExactBv,
    Euler,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_bv" => Ok(Scheme::ExactBv),
            "euler" => Ok(Scheme::Euler),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::ExactBv => "exact_bv",
            Scheme::Euler => "euler",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Simulation horizon; `None` means `400 / q`.
    pub horizon: Option<f64>,
    pub scheme: Scheme,
    pub dt: f64,
    pub antithetic: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 200_000,
            master_seed: 0,
            horizon: None,
            scheme: Scheme::ExactBv,
            dt: 1e-3,
            antithetic: false,
            workers: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, model: &LevyModel) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "n_paths must be >= 1"));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::config("n_paths", "antithetic sampling needs an even n_paths"));
        }
        match self.scheme {
            Scheme::ExactBv => {
                if model.sigma() != 0.0 || model.mu() <= 0.0 {
                    return Err(Error::config(
                        "scheme",
                        "exact_bv requires sigma = 0 and mu > 0",
                    ));
                }
            }
            Scheme::Euler => {
                if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= 1e-2) {
                    return Err(Error::config("dt", "euler requires 0 < dt <= 1e-2"));
                }
            }
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config("horizon", "horizon must be finite and > 0"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "workers must be >= 1"));
        }
        Ok(())
    }

    pub fn horizon_for(&self, q: f64) -> Result<f64> {
        match self.horizon {
            Some(h) => Ok(h),
            None if q > 0.0 => Ok(400.0 / q),
            None => Err(Error::config("horizon", "q = 0 needs an explicit horizon")),
        }
    }

    fn run<T: Send, F>(&self, f: F) -> Result<Vec<T>>
    where
        F: Fn(u64) -> T + Sync + Send,
    {
        let go = || (0..self.n_paths as u64).into_par_iter().map(&f).collect::<Vec<T>>();
        match self.workers {
            None => Ok(go()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
                Ok(pool.install(go))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of independent samples (antithetic pairs count once).
    pub n: usize,
    pub ci95: (f64, f64),
    pub truncation_bound: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], truncation_bound: f64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_error = (var / n as f64).sqrt();
        McEstimate {
            mean,
            std_error,
            n,
            ci95: (mean - 1.96 * std_error, mean + 1.96 * std_error),
            truncation_bound,
        }
    }

    /// `(mean - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    pub discounted_payout: f64,
    pub ruined: bool,
    /// Ruin time, if ruined before the horizon.
    pub ruin_time: Option<f64>,
    pub truncated: bool,
    pub payments: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    Payment,
    ExcursionStart,
    Recovery,
    Ruin,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub level_before: f64,
    pub level_after: f64,
}

/// What ends a path besides the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Ruin when an excursion below zero outlives its `Exp(p)` clock.
    Parisian { p: f64 },
    /// Ruin at the first time the surplus is negative.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Control {
    /// Pay down to `a` at `b`, cost `beta` each time.
    Band { a: f64, b: f64, beta: f64 },
    /// Uncontrolled until the level `b` is reached; payout `e^{-q tau}`.
    Target { b: f64 },
}

impl Control {
    fn barrier(&self) -> f64 {
        match *self {
            Control::Band { b, .. } | Control::Target { b } => b,
        }
    }
}

/// Random sources of a single path.
struct PathRng {
    jumps: ChaCha8Rng,
    noise: ChaCha8Rng,
    clocks: ChaCha8Rng,
    flip: bool,
}

impl PathRng {
    fn new(master_seed: u64, path: u64, antithetic: bool) -> Self {
        let (stream, flip) = if antithetic {
            (path / 2, path % 2 == 1)
        } else {
            (path, false)
        };
        let mk = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(master_seed);
            r.set_stream(3 * stream + k);
            r
        };
        PathRng {
            jumps: mk(0),
            noise: mk(1),
            clocks: mk(2),
            flip,
        }
    }

    /// Uniform on `(0, 1)`, symmetric under the antithetic flip.
    fn uniform(rng: &mut ChaCha8Rng, flip: bool) -> f64 {
        let k = rng.random::<u64>() >> 11;
        let u = (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        if flip {
            1.0 - u
        } else {
            u
        }
    }

    fn exp(rng: &mut ChaCha8Rng, flip: bool, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        -Self::uniform(rng, flip).ln() / rate
    }

    fn jump_gap(&mut self, rate: f64) -> f64 {
        Self::exp(&mut self.jumps, self.flip, rate)
    }

    fn jump_size(&mut self, model: &LevyModel) -> f64 {
        let u = Self::uniform(&mut self.jumps, self.flip);
        let weights = model.jump_weights();
        let rates = model.jump_rates();
        let mut acc = 0.0;
        let mut i = rates.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                i = k;
                break;
            }
        }
        Self::exp(&mut self.jumps, self.flip, rates[i])
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = self.noise.sample(StandardNormal);
        if self.flip {
            -z
        } else {
            z
        }
    }

    fn clock(&mut self, p: f64) -> f64 {
        Self::exp(&mut self.clocks, self.flip, p)
    }
}

struct Engine<'a> {
    model: &'a LevyModel,
    q: f64,
    termination: Termination,
    control: Control,
    horizon: f64,
    scheme: Scheme,
    dt: f64,
}

struct PathState<'e> {
    t: f64,
    u: f64,
    payout: f64,
    payments: u32,
    log: Option<&'e mut Vec<Event>>,
}

impl PathState<'_> {
    fn record(&mut self, t: f64, kind: EventKind, before: f64, after: f64) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(Event {
                t,
                kind,
                level_before: before,
                level_after: after,
            });
        }
    }
}

enum Step {
    Continue,
    Done(PathOutcome),
}

impl Engine<'_> {
    fn deadline(&self, start: f64, rng: &mut PathRng) -> f64 {
        match self.termination {
            Termination::Parisian { p } => start + rng.clock(p),
            Termination::Classical => start,
        }
    }

    fn finish(&self, s: &PathState, ruin_time: Option<f64>, truncated: bool) -> Step {
        Step::Done(PathOutcome {
            discounted_payout: s.payout,
            ruined: ruin_time.is_some(),
            ruin_time,
            truncated,
            payments: s.payments,
        })
    }

    /// Reaching the barrier at time `t` with the surplus at `level`.
    fn hit_barrier(&self, s: &mut PathState, t: f64, level: f64) -> Step {
        let disc = (-self.q * t).exp();
        match self.control {
            Control::Band { a, b, beta } => {
                assert!(level >= 0.0 && a >= 0.0, "inadmissible payment");
                s.payout += disc * (b - a - beta);
                s.payments += 1;
                s.record(t, EventKind::Payment, level, a);
                s.t = t;
                s.u = a;
                Step::Continue
            }
            Control::Target { .. } => {
                s.payout = disc;
                s.record(t, EventKind::Target, level, level);
                s.t = t;
                s.u = level;
                self.finish(s, None, false)
            }
        }
    }

    fn run(&self, x0: f64, rng: &mut PathRng, log: Option<&mut Vec<Event>>) -> PathOutcome {
        let mut s = PathState {
            t: 0.0,
            u: x0,
            payout: 0.0,
            payments: 0,
            log,
        };
        match self.control {
            Control::Band { a, b, beta } if x0 > b => {
                s.payout += x0 - a - beta;
                s.payments += 1;
                s.record(0.0, EventKind::Payment, x0, a);
                s.u = a;
            }
            Control::Target { b } if x0 >= b => {
                s.payout = 1.0;
                s.record(0.0, EventKind::Target, x0, x0);
                return PathOutcome {
                    discounted_payout: 1.0,
                    ruined: false,
                    ruin_time: None,
                    truncated: false,
                    payments: 0,
                };
            }
            _ => {}
        }
        let out = match self.scheme {
            Scheme::ExactBv => self.run_exact(&mut s, rng),
            Scheme::Euler => self.run_euler(&mut s, rng),
        };
        match out {
            Step::Done(o) => o,
            Step::Continue => unreachable!(),
        }
    }

    fn run_exact(&self, s: &mut PathState, rng: &mut PathRng) -> Step {
        let mu = self.model.mu();
        let lambda = self.model.jump_rate();
        let b = self.control.barrier();
        let mut next_jump = s.t + rng.jump_gap(lambda);
        let mut deadline = f64::INFINITY;
        if s.u < 0.0 {
            deadline = self.deadline(0.0, rng);
            s.record(0.0, EventKind::ExcursionStart, s.u, s.u);
        }
        loop {
            if s.u >= 0.0 {
                let t_b = s.t + (b - s.u) / mu;
                if t_b <= next_jump {
                    if t_b > self.horizon {
                        return self.finish(s, None, true);
                    }
                    if let Step::Done(o) = self.hit_barrier(s, t_b, b) {
                        return Step::Done(o);
                    }
                    continue;
                }
                if next_jump > self.horizon {
                    return self.finish(s, None, true);
                }
                let before = s.u + mu * (next_jump - s.t);
                s.u = before - rng.jump_size(self.model);
                s.t = next_jump;
                next_jump = s.t + rng.jump_gap(lambda);
                if s.u < 0.0 {
                    s.record(s.t, EventKind::ExcursionStart, before, s.u);
                    deadline = self.deadline(s.t, rng);
                }
            } else {
                let t_up = s.t + (-s.u) / mu;
                let next = next_jump.min(t_up);
                if deadline < next {
                    if deadline > self.horizon {
                        return self.finish(s, None, true);
                    }
                    let level = s.u + mu * (deadline - s.t);
                    s.record(deadline, EventKind::Ruin, level, level);
                    return self.finish(s, Some(deadline), false);
                }
                if next > self.horizon {
                    return self.finish(s, None, true);
                }
                if next_jump < t_up {
                    s.u += mu * (next_jump - s.t) - rng.jump_size(self.model);
                    s.t = next_jump;
                    next_jump = s.t + rng.jump_gap(lambda);
                } else {
                    s.record(t_up, EventKind::Recovery, s.u, 0.0);
                    s.u = 0.0;
                    s.t = t_up;
                    deadline = f64::INFINITY;
                }
            }
        }
    }

    fn run_euler(&self, s: &mut PathState, rng: &mut PathRng) -> Step {
        let mu = self.model.mu();
        let sigma = self.model.sigma();
        let lambda = self.model.jump_rate();
        let b = self.control.barrier();
        let dt = self.dt;
        let sqrt_dt = dt.sqrt();
        let mut next_jump = s.t + rng.jump_gap(lambda);
        let mut deadline = f64::INFINITY;
        let mut in_excursion = s.u < 0.0;
        if in_excursion {
            deadline = self.deadline(0.0, rng);
            s.record(0.0, EventKind::ExcursionStart, s.u, s.u);
        }
        loop {
            let t0 = s.t;
            let t1 = t0 + dt;
            if t1 > self.horizon {
                return self.finish(s, None, true);
            }
            let mut jumps = 0.0;
            while next_jump <= t1 {
                jumps += rng.jump_size(self.model);
                next_jump += rng.jump_gap(lambda);
            }
            let diffusion = if sigma > 0.0 {
                sigma * sqrt_dt * rng.normal()
            } else {
                0.0
            };
            let u0 = s.u;
            let u1 = u0 + mu * dt + diffusion - jumps;
            let cross = |level: f64| t0 + dt * ((level - u0) / (u1 - u0)).clamp(0.0, 1.0);
            if !in_excursion {
                if u1 >= b {
                    // The next step starts from the payment time.
                    let tc = cross(b);
                    if let Step::Done(o) = self.hit_barrier(s, tc, b) {
                        return Step::Done(o);
                    }
                    continue;
                }
                if u1 < 0.0 {
                    let start = cross(0.0);
                    s.record(start, EventKind::ExcursionStart, u0, u1);
                    deadline = self.deadline(start, rng);
                    in_excursion = true;
                    if deadline <= t1 {
                        s.record(deadline, EventKind::Ruin, u1, u1);
                        return self.finish(s, Some(deadline), false);
                    }
                }
            } else if u1 >= 0.0 {
                let tc = cross(0.0);
                if deadline < tc {
                    s.record(deadline, EventKind::Ruin, u0, u0);
                    return self.finish(s, Some(deadline), false);
                }
                s.record(tc, EventKind::Recovery, u0, u1);
                in_excursion = false;
                deadline = f64::INFINITY;
                if u1 >= b {
                    s.u = u1;
                    if let Step::Done(o) = self.hit_barrier(s, t1, u1) {
                        return Step::Done(o);
                    }
                    s.t = t1;
                    continue;
                }
            } else if deadline <= t1 {
                s.record(deadline, EventKind::Ruin, u1, u1);
                return self.finish(s, Some(deadline), false);
            }
            s.u = u1;
            s.t = t1;
        }
    }
}

fn band_truncation_bound(model: &LevyModel, q: f64, pol: Policy, beta: f64, horizon: f64, cfg: &SimConfig) -> f64 {
    let delta_min = match cfg.scheme {
        Scheme::ExactBv => (pol.b - pol.a) / model.mu(),
        Scheme::Euler => cfg.dt,
    };
    pol.net_payment(beta) * (-q * horizon).exp() / (1.0 - (-q * delta_min).exp())
}

fn make_engine<'a>(
    model: &'a LevyModel,
    q: f64,
    termination: Termination,
    control: Control,
    cfg: &SimConfig,
) -> Result<Engine<'a>> {
    cfg.validate(model)?;
    Ok(Engine {
        model,
        q,
        termination,
        control,
        horizon: cfg.horizon_for(q)?,
        scheme: cfg.scheme,
        dt: cfg.dt,
    })
}

fn aggregate(payouts: &[f64], antithetic: bool, bound: f64) -> McEstimate {
    if antithetic {
        let pairs: Vec<f64> = payouts.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        McEstimate::from_samples(&pairs, bound)
    } else {
        McEstimate::from_samples(payouts, bound)
    }
}

/// One path of the `(a, b)` strategy from `x0`.
pub fn simulate_controlled_path(
    model: &LevyModel,
    params: &ControlParams,
    pol: Policy,
    x0: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<PathOutcome> {
    trace_controlled_path(model, params, pol, x0, cfg, path_index).map(|(o, _)| o)
}

/// Like [`simulate_controlled_path`], also returning the event log.
pub fn trace_controlled_path(
    model: &LevyModel,
    params: &ControlParams,
    pol: Policy,
    x0: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<(PathOutcome, Vec<Event>)> {
    pol.check_admissible(params.beta)?;
    let control = Control::Band {
        a: pol.a,
        b: pol.b,
        beta: params.beta,
    };
    let engine = make_engine(model, params.q, Termination::Parisian { p: params.p }, control, cfg)?;
    let mut rng = PathRng::new(cfg.master_seed, path_index, cfg.antithetic);
    let mut log = Vec::new();
    let out = engine.run(x0, &mut rng, Some(&mut log));
    Ok((out, log))
}

/// All paths of the `(a, b)` strategy, in index order.
pub fn simulate_paths(
    model: &LevyModel,
    params: &ControlParams,
    pol: Policy,
    x0: f64,
    cfg: &SimConfig,
    termination: Termination,
) -> Result<Vec<PathOutcome>> {
    pol.check_admissible(params.beta)?;
    let control = Control::Band {
        a: pol.a,
        b: pol.b,
        beta: params.beta,
    };
    let engine = make_engine(model, params.q, termination, control, cfg)?;
    cfg.run(|i| {
        let mut rng = PathRng::new(cfg.master_seed, i, cfg.antithetic);
        engine.run(x0, &mut rng, None)
    })
}

/// Estimate of the performance `v_{a,b}(x0)` under Parisian ruin.
pub fn estimate_value(
    model: &LevyModel,
    params: &ControlParams,
    pol: Policy,
    x0: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    estimate_value_with(model, params, pol, x0, cfg, Termination::Parisian { p: params.p })
}

pub fn estimate_value_with(
    model: &LevyModel,
    params: &ControlParams,
    pol: Policy,
    x0: f64,
    cfg: &SimConfig,
    termination: Termination,
) -> Result<McEstimate> {
    let paths = simulate_paths(model, params, pol, x0, cfg, termination)?;
    let payouts: Vec<f64> = paths.iter().map(|p| p.discounted_payout).collect();
    let horizon = cfg.horizon_for(params.q)?;
    let bound = band_truncation_bound(model, params.q, pol, params.beta, horizon, cfg);
    Ok(aggregate(&payouts, cfg.antithetic, bound))
}

/// Estimate of `E_x[e^{-q tau_b} ; tau_b < kappa_p]` for the uncontrolled
/// process.
pub fn estimate_first_passage(
    model: &LevyModel,
    q: f64,
    p: f64,
    x: f64,
    b: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(x <= b) {
        return Err(Error::Domain(format!("first passage needs x <= b, got x = {x}, b = {b}")));
    }
    if !(p > 0.0) {
        return Err(Error::Domain(format!("p must be > 0, got {p}")));
    }
    let engine = make_engine(model, q, Termination::Parisian { p }, Control::Target { b }, cfg)?;
    let payouts = cfg.run(|i| {
        let mut rng = PathRng::new(cfg.master_seed, i, cfg.antithetic);
        engine.run(x, &mut rng, None).discounted_payout
    })?;
    let bound = (-q * engine.horizon).exp();
    Ok(aggregate(&payouts, cfg.antithetic, bound))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub policy: Policy,
    pub estimate: McEstimate,
    /// Paired estimate of `v_base - v_policy` under common random numbers.
    pub difference: McEstimate,
}

/// Simulates `base` and every alternative on identical seeds.
pub fn compare_policies(
    model: &LevyModel,
    params: &ControlParams,
    base: Policy,
    alternatives: &[Policy],
    x0: f64,
    cfg: &SimConfig,
) -> Result<(McEstimate, Vec<PolicyComparison>)> {
    let term = Termination::Parisian { p: params.p };
    let horizon = cfg.horizon_for(params.q)?;
    let base_paths: Vec<f64> = simulate_paths(model, params, base, x0, cfg, term)?
        .iter()
        .map(|p| p.discounted_payout)
        .collect();
    let base_bound = band_truncation_bound(model, params.q, base, params.beta, horizon, cfg);
    let base_est = aggregate(&base_paths, cfg.antithetic, base_bound);
    let mut out = Vec::with_capacity(alternatives.len());
    for &pol in alternatives {
        let paths: Vec<f64> = simulate_paths(model, params, pol, x0, cfg, term)?
            .iter()
            .map(|p| p.discounted_payout)
            .collect();
        let bound = band_truncation_bound(model, params.q, pol, params.beta, horizon, cfg);
        let diffs: Vec<f64> = base_paths.iter().zip(&paths).map(|(x, y)| x - y).collect();
        out.push(PolicyComparison {
            policy: pol,
            estimate: aggregate(&paths, cfg.antithetic, bound),
            difference: aggregate(&diffs, cfg.antithetic, base_bound + bound),
        });
    }
    Ok((base_est, out))
}
